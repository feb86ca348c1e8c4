"""Semidiscrete Kolmogorov operators.

Arrays are laid out as ``(m1, m2)`` with x along axis 0 and v along axis 1.
The backward operator acts on value grids ``U(t)`` in time to maturity; its
adjoint acts on scaled densities ``Pbar(tau) = M P(tau)`` in calendar time
and is, at every tau, the exact transpose of the backward operator at
``t = T - tau``.  Forward operators are never derived from the forward PDE:
they reuse the backward bands through transposed products.

Operators are applied matrix-free; :meth:`SlvOperator.matrix` assembles the
equivalent sparse Kronecker-product matrix for direct solves and checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import GridError, SingularSystemError
from .fdops import BandedMatrix, DiffOps
from .mesh import Grid1D, Grid2D
from .model import LvSurface, SlvParams
from .timestep import banded_solve, block_banded_solve

LeverageFn = Callable[[float], np.ndarray]


class SlvOperator:
    """Split SLV operator F = F0 + F1 + F2 (mixed, x-direction, v-direction).

    ``leverage_at(tau)`` returns sigma_SLV on the x-nodes at calendar time
    ``tau``.  With ``adjoint=False`` the time argument of every method is the
    time to maturity ``t``; with ``adjoint=True`` it is ``tau``.
    """

    def __init__(
        self,
        grid: Grid2D,
        ops: DiffOps,
        params: SlvParams,
        leverage_at: LeverageFn,
        adjoint: bool = False,
    ):
        self.grid = grid
        self.ops = ops
        self.params = params
        self.leverage_at = leverage_at
        self.adjoint = adjoint
        p = params
        v = grid.gv.nodes
        alpha = p.psi.alpha
        self.psi2 = p.psi.psi2(v)
        mix = p.psi.psi(v) * v**alpha
        # v-factors as m2 x m2 banded matrices acting on column vectors
        self.mixed_v = (p.rho * p.xi) * ops.Dv.scale_rows(mix)
        self.v_dir = (0.5 * p.xi**2) * ops.Dvv.scale_rows(v ** (2 * alpha)) + ops.Dv.scale_rows(
            p.kappa * (p.eta - v)
        )
        self.x_diff = ops.Dxx - ops.Dx
        self.x_conv = (p.rd - p.rf) * ops.Dx

    def _lev(self, t: float) -> np.ndarray:
        tau = t if self.adjoint else self.params.T - t
        return np.asarray(self.leverage_at(tau), dtype=float)

    def adjoint_operator(self) -> "SlvOperator":
        return SlvOperator(self.grid, self.ops, self.params, self.leverage_at, not self.adjoint)

    # --- explicit parts -------------------------------------------------
    def f0(self, t: float, w: np.ndarray) -> np.ndarray:
        lev = self._lev(t)[:, None]
        if self.adjoint:
            y = self.ops.Dx.rmatvec(lev * w)
            return self.mixed_v.rmatvec(y.T).T
        y = lev * self.ops.Dx.matvec(w)
        return self.mixed_v.matvec(y.T).T

    def f1(self, t: float, w: np.ndarray) -> np.ndarray:
        half_l2 = 0.5 * self._lev(t)[:, None] ** 2
        if self.adjoint:
            return self.x_diff.rmatvec(half_l2 * w * self.psi2) + self.x_conv.rmatvec(w)
        return half_l2 * self.x_diff.matvec(w) * self.psi2 + self.x_conv.matvec(w)

    def f2(self, t: float, w: np.ndarray) -> np.ndarray:
        if self.adjoint:
            return self.v_dir.rmatvec(w.T).T
        return self.v_dir.matvec(w.T).T

    def apply(self, t: float, w: np.ndarray) -> np.ndarray:
        return self.f0(t, w) + self.f1(t, w) + self.f2(t, w)

    # --- implicit unidirectional solves --------------------------------
    def solve1(self, t: float, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - c F1(t)) y = rhs, one x-system per v-column."""
        ax = self.x_diff.scale_rows(0.5 * self._lev(t) ** 2)
        cx = self.x_conv
        if self.adjoint:
            ax, cx = ax.T, cx.T
        lo = max(ax.lower_bw, cx.lower_bw)
        up = max(ax.upper_bw, cx.upper_bw)
        ab_a = ax.to_lapack(lo, up)
        ab_c = cx.to_lapack(lo, up)
        ab = -c * (self.psi2[None, :, None] * ab_a[:, None, :] + ab_c[:, None, :])
        ab[up] += 1.0
        y = block_banded_solve((lo, up), ab, rhs.T)
        return y.T

    def solve2(self, t: float, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - c F2(t)) y = rhs, one v-system per x-row."""
        g = self.v_dir.T if self.adjoint else self.v_dir
        return banded_solve(g, rhs.T, c).T

    # --- assembled matrices ---------------------------------------------
    def matrix(self, t: float, part: str = "full") -> sparse.csr_matrix:
        """Sparse matrix acting on vec(w) (columns stacked, x fastest)."""
        lev = self._lev(t)
        m1, m2 = self.grid.shape
        Lx = sparse.diags(lev)
        Dx = self.ops.Dx.tosparse()
        a0 = sparse.kron(self.mixed_v.tosparse(), Lx @ Dx)
        a1 = sparse.kron(
            sparse.diags(self.psi2), sparse.diags(0.5 * lev**2) @ self.x_diff.tosparse()
        ) + sparse.kron(sparse.identity(m2), self.x_conv.tosparse())
        a2 = sparse.kron(self.v_dir.tosparse(), sparse.identity(m1))
        mat = {"0": a0, "1": a1, "2": a2, "full": a0 + a1 + a2}[part]
        return (mat.T if self.adjoint else mat).tocsr()

    def solve_full(self, t: float, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - c F(t)) y = rhs with a sparse direct factorization."""
        n = rhs.shape[0] * rhs.shape[1]
        mat = (sparse.identity(n) - c * self.matrix(t)).tocsc()
        try:
            lu = splu(mat)
        except RuntimeError as exc:
            raise SingularSystemError(f"implicit 2-D system is singular: {exc}") from exc
        y = lu.solve(rhs.reshape(n, order="F"))
        if not np.all(np.isfinite(y)):
            raise SingularSystemError("implicit 2-D solve produced non-finite values")
        return y.reshape(rhs.shape, order="F")


def backward_slv_operator(grid, ops, params, leverage_at) -> SlvOperator:
    return SlvOperator(grid, ops, params, leverage_at, adjoint=False)


def adjoint_forward_operator(backward: SlvOperator, weights=None) -> SlvOperator:
    """Forward operator on Pbar = M P.

    The weight matrix M only rescales P into Pbar; on Pbar the forward
    operator is the plain transpose of the backward one, so ``weights`` is
    accepted for symmetry with the P-scale formulation and not needed.
    """
    return backward.adjoint_operator()


class LvOperator:
    """1-D LV operator on the same x-mesh and derivative matrices."""

    def __init__(
        self,
        gx: Grid1D,
        Dx: BandedMatrix,
        Dxx: BandedMatrix,
        params: SlvParams,
        lv: LvSurface | Callable[[float], np.ndarray],
        adjoint: bool = False,
    ):
        self.gx = gx
        self.Dx, self.Dxx = Dx, Dxx
        self.params = params
        self.lv = lv
        self.adjoint = adjoint
        self.x_diff = Dxx - Dx
        self.x_conv = (params.rd - params.rf) * Dx

    def lv_at(self, tau: float) -> np.ndarray:
        if isinstance(self.lv, LvSurface):
            return self.lv(self.gx.nodes, tau)
        return np.asarray(self.lv(tau), dtype=float)

    def _tau(self, t: float) -> float:
        return t if self.adjoint else self.params.T - t

    def banded(self, t: float) -> BandedMatrix:
        """The operator at time ``t`` as a banded matrix (transposed if adjoint)."""
        sig = self.lv_at(self._tau(t))
        a = self.x_diff.scale_rows(0.5 * sig**2) + self.x_conv
        return a.T if self.adjoint else a

    def adjoint_operator(self) -> "LvOperator":
        return LvOperator(self.gx, self.Dx, self.Dxx, self.params, self.lv, not self.adjoint)

    def apply(self, t: float, w: np.ndarray) -> np.ndarray:
        sig = self.lv_at(self._tau(t))
        half_s2 = 0.5 * sig**2
        if w.ndim > 1:
            half_s2 = half_s2[:, None]
        if self.adjoint:
            return self.x_diff.rmatvec(half_s2 * w) + self.x_conv.rmatvec(w)
        return half_s2 * self.x_diff.matvec(w) + self.x_conv.matvec(w)

    def solve_full(self, t: float, c: float, rhs: np.ndarray) -> np.ndarray:
        return banded_solve(self.banded(t), rhs, c)


def backward_lv_operator(gx, ops: DiffOps, params, lv) -> LvOperator:
    return LvOperator(gx, ops.Dx, ops.Dxx, params, lv, adjoint=False)


def forward_lv_operator(backward_lv: LvOperator) -> LvOperator:
    return backward_lv.adjoint_operator()


def dirac_density(grid: Grid2D | Grid1D) -> np.ndarray:
    """One-hot Pbar at the spot node(s)."""
    if isinstance(grid, Grid1D):
        p = np.zeros(grid.m)
        p[grid.spot_index] = 1.0
        return p
    if not (
        grid.gx.nodes[grid.gx.spot_index] == grid.gx.spot
        and grid.gv.nodes[grid.gv.spot_index] == grid.gv.spot
    ):
        raise GridError("spot is not a mesh node")
    p = np.zeros(grid.shape)
    p[grid.spot_indices] = 1.0
    return p


def density_scale(grid: Grid2D) -> np.ndarray:
    """Diagonal of M as an (m1, m2) array; P = Pbar / density_scale."""
    return np.outer(grid.gx.weights, grid.gv.weights)


def duality_value(pbar: np.ndarray, u: np.ndarray) -> float:
    """sum_ij Pbar_ij U_ij"""
    pbar = np.asarray(pbar)
    u = np.asarray(u)
    if pbar.shape != u.shape:
        raise ValueError(f"shape mismatch {pbar.shape} vs {u.shape}")
    return float(np.sum(pbar * u))
