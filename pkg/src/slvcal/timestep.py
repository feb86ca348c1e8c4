"""Time integrators: MCS (CS at theta = 1/2), implicit Euler, Crank-Nicolson.

Operators are duck-typed.  MCS needs ``f0, f1, f2, apply, solve1, solve2``;
implicit Euler and Crank-Nicolson need ``apply`` and ``solve_full``, where
``solve*(t, c, rhs)`` returns the solution of ``(I - c F(t)) y = rhs``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import SingularSystemError


def _solve(lu, ab, rhs):
    try:
        y = solve_banded(lu, ab, rhs, check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"banded system is singular: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise SingularSystemError("banded solve produced non-finite values")
    return y


def banded_solve(mat, rhs: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Solve (I - c mat) x = rhs by banded LU with partial pivoting.

    ``mat`` is a :class:`~slvcal.fdops.BandedMatrix`; ``rhs`` may carry extra
    columns, each solved with the same factorization.
    """
    lo, up = mat.lower_bw, mat.upper_bw
    ab = -c * mat.to_lapack(lo, up)
    ab[up] += 1.0
    return _solve((lo, up), ab, rhs)


def block_banded_solve(lu: tuple[int, int], ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve independent banded systems in one LAPACK call.

    ``ab`` has shape ``(lower + upper + 1, nblocks, n)`` with each block in
    diagonal-ordered form, ``rhs`` shape ``(nblocks, n)``.  The blocks are
    laid end to end as one banded matrix; nothing couples them because every
    block's out-of-range band entries are zero.
    """
    nb, nblocks, n = ab.shape
    y = _solve(lu, ab.reshape(nb, nblocks * n), rhs.reshape(nblocks * n))
    return y.reshape(nblocks, n)


@dataclass(frozen=True)
class McsConfig:
    theta: float = 1.0 / 3.0
    N: int = 200
    T: float = 1.0
    rannacher_steps: int = 2

    def __post_init__(self):
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")
        if self.N < max(1, self.rannacher_steps):
            raise ValueError("need at least as many steps as Rannacher steps")
        if self.T <= 0.0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.N

    def time(self, n: float) -> float:
        """t_n; half-integer n gives the Rannacher mid-points."""
        return self.T * n / self.N


def mcs_step(op, w: np.ndarray, t0: float, t1: float, theta: float) -> np.ndarray:
    """One Modified Craig-Sneyd step; the mixed term F0 stays explicit."""
    dt = t1 - t0
    c = theta * dt
    f0 = op.f0(t0, w)
    f1 = op.f1(t0, w)
    f2 = op.f2(t0, w)
    f = f0 + f1 + f2
    y0 = w + dt * f
    y1 = op.solve1(t1, c, y0 - c * f1)
    y2 = op.solve2(t1, c, y1 - c * f2)
    g0 = op.f0(t1, y2)
    yh = y0 + c * (g0 - f0)
    g = g0 + op.f1(t1, y2) + op.f2(t1, y2)
    yt = yh + (0.5 - theta) * dt * (g - f)
    y1 = op.solve1(t1, c, yt - c * f1)
    return op.solve2(t1, c, y1 - c * f2)


def implicit_euler_step(op, w: np.ndarray, t1: float, dt: float) -> np.ndarray:
    return op.solve_full(t1, dt, w)


def implicit_euler_half_steps(op, w: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """Two implicit Euler steps of size (t1 - t0)/2."""
    h = 0.5 * (t1 - t0)
    tm = t0 + h
    w = implicit_euler_step(op, w, tm, h)
    return implicit_euler_step(op, w, t1, t1 - tm)


def crank_nicolson_step(op, w: np.ndarray, t0: float, t1: float) -> np.ndarray:
    dt = t1 - t0
    return op.solve_full(t1, 0.5 * dt, w + 0.5 * dt * op.apply(t0, w))


def march(
    op,
    w0: np.ndarray,
    cfg: McsConfig,
    scheme: str = "mcs",
    callback: Callable[[float, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Integrate from 0 to cfg.T with Rannacher startup.

    The first ``cfg.rannacher_steps`` steps are each replaced by two half
    steps of implicit Euler; the remaining steps use ``scheme`` ("mcs" or
    "cn").  ``callback(t, w)`` sees every computed level, half-levels included.
    """
    if scheme not in ("mcs", "cn"):
        raise ValueError(f"unknown scheme {scheme!r}")
    w = w0
    for n in range(1, cfg.N + 1):
        t0, t1 = cfg.time(n - 1), cfg.time(n)
        if n <= cfg.rannacher_steps:
            tm = cfg.time(n - 0.5)
            w = implicit_euler_step(op, w, tm, tm - t0)
            if callback:
                callback(tm, w)
            w = implicit_euler_step(op, w, t1, t1 - tm)
        elif scheme == "mcs":
            w = mcs_step(op, w, t0, t1, cfg.theta)
        else:
            w = crank_nicolson_step(op, w, t0, t1)
        if callback:
            callback(t1, w)
    return w
