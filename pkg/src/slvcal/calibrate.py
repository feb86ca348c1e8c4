"""Leverage-function calibration by forward marching with inner sweeps.

Each time step of the adjoint forward SLV system is repeated ``Q`` times:
the conditional expectation of psi^2(V) given X = x_i is estimated from the
current density iterate, the leverage at the new time level is updated from
it, and the step is redone with that leverage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigError, StampMismatchError
from .fdops import DiffOps
from .mesh import Grid2D
from .model import LvSurface, PsiFamily, SlvParams
from .semidiscrete import SlvOperator, dirac_density
from .timestep import McsConfig, implicit_euler_step, mcs_step


@dataclass(frozen=True)
class CalibConfig:
    Q: int = 2
    epsilon: float = 1e-8
    theta: float = 1.0 / 3.0
    N: int = 100
    rannacher_steps: int = 2

    def __post_init__(self):
        if self.Q < 1:
            raise ConfigError("Q must be at least 1")
        if not self.epsilon > 0.0:
            raise ConfigError("epsilon must be positive")
        if not self.theta > 0.0:
            raise ConfigError("theta must be positive")
        if self.N < max(1, self.rannacher_steps):
            raise ConfigError("N must cover the Rannacher steps")

    @classmethod
    def from_dtau(cls, T: float, dtau: float, **kw) -> "CalibConfig":
        N = int(round(T / dtau))
        if N < 1 or abs(N * dtau - T) > 1e-9 * T:
            raise ConfigError(f"dtau={dtau} does not divide T={T}")
        return cls(N=N, **kw)

    def mcs(self, T: float) -> McsConfig:
        return McsConfig(theta=self.theta, N=self.N, T=T, rannacher_steps=self.rannacher_steps)


def conditional_expectation(pbar_row, psi: PsiFamily, v_nodes, eta: float, epsilon: float):
    """Regularized E[psi^2(V) | X = x_i] from rows of Pbar.

    Works on a single m2-row or an (m1, m2) array.  Returns
    ``(value, needs_fallback, numerator, denominator)`` where the last two are
    the unregularized parts; ``needs_fallback`` flags rows where either part
    is negative so the caller can substitute the previous level.
    """
    p = np.asarray(pbar_row, dtype=float)
    psi2 = psi.psi2(v_nodes)
    num = p @ psi2
    den = p.sum(axis=-1)
    shift = float(psi.psi2(eta))
    value = (num + shift * epsilon) / (den + epsilon)
    return value, (num < 0.0) | (den < 0.0), num, den


def leverage_update(lv_vals, expectations) -> np.ndarray:
    """sigma_SLV = sigma_LV / sqrt(E)."""
    e = np.asarray(expectations, dtype=float)
    if np.any(~(e > 0.0)):
        bad = np.flatnonzero(~(e > 0.0))
        raise CalibrationError(f"nonpositive conditional expectation at x-indices {bad.tolist()}")
    return np.asarray(lv_vals, dtype=float) / np.sqrt(e)


@dataclass
class LeverageSurface:
    """sigma_SLV on the x-mesh at every computed time level.

    Levels are the full steps tau_n, the forward Rannacher half-levels near
    tau = 0 and the half-levels near tau = T that backward pricing visits.
    """

    x: np.ndarray
    taus: np.ndarray
    values: np.ndarray  # (levels, m1)
    expectations: np.ndarray  # (levels, m1), E used for each stored level
    dtau: float
    T: float
    m2: int = 0

    def index_of(self, tau: float) -> int | None:
        k = int(np.searchsorted(self.taus, tau))
        tol = 1e-9 * self.dtau
        for j in (k - 1, k):
            if 0 <= j < self.taus.size and abs(self.taus[j] - tau) <= tol:
                return j
        return None

    def at(self, tau: float) -> np.ndarray:
        """Leverage at a scheme time stamp; unknown stamps are rejected."""
        j = self.index_of(tau)
        if j is None:
            raise StampMismatchError(f"no leverage level at tau={tau!r} for dtau={self.dtau!r}")
        return self.values[j]

    __call__ = at

    def full_levels(self) -> np.ndarray:
        """Indices of the levels tau_n = n * dtau."""
        n = self.taus / self.dtau
        return np.flatnonzero(np.abs(n - np.round(n)) <= 1e-9 * np.maximum(1.0, n))

    def stamps(self) -> dict[str, str]:
        return {
            "m1": str(self.x.size),
            "m2": str(self.m2),
            "dtau": repr(float(self.dtau)),
            "T": repr(float(self.T)),
            "x_checksum": repr(float(np.sum(self.x * np.arange(1, self.x.size + 1)))),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for k, v in self.stamps().items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(["tau", "x", "sigma_slv"])
            for t, row in zip(self.taus, self.values):
                for x, s in zip(self.x, row):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(s))])

    @classmethod
    def read_csv(cls, path) -> "LeverageSurface":
        stamps: dict[str, str] = {}
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                stamps[k.strip()] = v.strip()
            else:
                body.append(line)
        reader = csv.DictReader(body)
        if reader.fieldnames != ["tau", "x", "sigma_slv"]:
            raise StampMismatchError(f"{path}: header must be tau,x,sigma_slv")
        rows = np.array([(float(r["tau"]), float(r["x"]), float(r["sigma_slv"])) for r in reader])
        try:
            m1 = int(stamps["m1"])
            dtau = float(stamps["dtau"])
            T = float(stamps["T"])
            m2 = int(stamps["m2"])
        except KeyError as exc:
            raise StampMismatchError(f"{path}: missing header stamp {exc}") from None
        levels = rows.shape[0] // m1
        if levels == 0 or levels * m1 != rows.shape[0]:
            raise StampMismatchError(f"{path}: row count is not a multiple of m1={m1}")
        rows = rows.reshape(levels, m1, 3)
        surf = cls(
            x=rows[0, :, 1].copy(),
            taus=rows[:, 0, 0].copy(),
            values=rows[:, :, 2].copy(),
            expectations=np.full((levels, m1), np.nan),
            dtau=dtau,
            T=T,
            m2=m2,
        )
        surf.header = stamps
        return surf

    def check_stamps(self, grid: Grid2D, dtau: float, T: float) -> None:
        problems = []
        if self.x.size != grid.gx.m:
            problems.append(f"m1 {self.x.size} != {grid.gx.m}")
        elif not np.allclose(self.x, grid.gx.nodes, rtol=0.0, atol=1e-13):
            problems.append("x-nodes differ")
        if self.m2 and self.m2 != grid.gv.m:
            problems.append(f"m2 {self.m2} != {grid.gv.m}")
        if abs(self.dtau - dtau) > 1e-12 * dtau:
            problems.append(f"dtau {self.dtau!r} != {dtau!r}")
        if abs(self.T - T) > 1e-12 * T:
            problems.append(f"T {self.T!r} != {T!r}")
        if problems:
            raise StampMismatchError("leverage surface does not match: " + "; ".join(problems))


@dataclass
class CalibDiagnostics:
    fallback_count: int = 0
    fallback_levels: list[float] = field(default_factory=list)
    min_numerator: float = np.inf
    min_denominator: float = np.inf
    max_mass_drift: float = 0.0
    mass_drift: list[float] = field(default_factory=list)
    last_sweep_change: list[float] = field(default_factory=list)
    min_density: float = np.inf

    def as_dict(self) -> dict:
        return {
            "fallback_count": self.fallback_count,
            "fallback_levels": self.fallback_levels,
            "min_numerator": self.min_numerator,
            "min_denominator": self.min_denominator,
            "max_mass_drift": self.max_mass_drift,
            "min_density": self.min_density,
            "max_last_sweep_change": max(self.last_sweep_change, default=0.0),
        }


@dataclass
class CalibrationResult:
    leverage: LeverageSurface
    density: np.ndarray
    diagnostics: CalibDiagnostics
    densities: dict[float, np.ndarray] | None = None


def calibrate(
    grid: Grid2D,
    ops: DiffOps,
    params: SlvParams,
    lv: LvSurface,
    cfg: CalibConfig,
    keep_densities: bool = False,
) -> CalibrationResult:
    T = params.T
    mcs = cfg.mcs(T)
    x, v = grid.gx.nodes, grid.gv.nodes
    psi = params.psi
    m1 = grid.gx.m

    levels: dict[float, np.ndarray] = {}
    op = SlvOperator(grid, ops, params, lambda tau: levels[tau], adjoint=True)

    e_prev = np.full(m1, float(psi.psi2(params.V0)))
    taus = [0.0]
    values = [leverage_update(lv(x, 0.0), e_prev)]
    expectations = [e_prev]
    levels[0.0] = values[0]

    diag = CalibDiagnostics()
    p_prev = dirac_density(grid)
    densities = {0.0: p_prev} if keep_densities else None
    p_first = None
    tail = {0: p_prev}

    def substep(t0, t1, p0, step):
        nonlocal e_prev
        p1 = p0.copy()
        sig_lv = lv(x, t1)
        lev = None
        for _ in range(cfg.Q):
            e, bad, num, den = conditional_expectation(p1, psi, v, params.eta, cfg.epsilon)
            if np.any(bad):
                e = np.where(bad, e_prev, e)
                diag.fallback_count += int(bad.sum())
                diag.fallback_levels.append(t1)
            diag.min_numerator = min(diag.min_numerator, float(num.min()))
            diag.min_denominator = min(diag.min_denominator, float(den.min()))
            new = leverage_update(sig_lv, e)
            change = 0.0 if lev is None else float(np.max(np.abs(new - lev)))
            lev = new
            levels[t1] = lev
            p1 = step(p0)
        diag.last_sweep_change.append(change)
        e_prev = e
        taus.append(t1)
        values.append(lev)
        expectations.append(e)
        drift = abs(float(p1.sum()) - 1.0)
        diag.mass_drift.append(drift)
        diag.max_mass_drift = max(diag.max_mass_drift, drift)
        diag.min_density = min(diag.min_density, float(p1.min()))
        if densities is not None:
            densities[t1] = p1
        return p1

    for n in range(1, cfg.N + 1):
        t0, t1 = mcs.time(n - 1), mcs.time(n)
        if n <= cfg.rannacher_steps:
            tm = mcs.time(n - 0.5)
            p_mid = substep(t0, tm, p_prev, lambda p: implicit_euler_step(op, p, tm, tm - t0))
            p_prev = substep(tm, t1, p_mid, lambda p: implicit_euler_step(op, p, t1, t1 - tm))
        else:
            p0 = p_prev
            p_prev = substep(t0, t1, p0, lambda p: mcs_step(op, p, t0, t1, cfg.theta))
        if n == 1:
            p_first = p_prev
        if n >= cfg.N - cfg.rannacher_steps:
            tail[n] = p_prev
        # drop levels the remaining steps no longer reference
        for key in [k for k in levels if k < t0]:
            del levels[key]

    # tau = 0: replace the spot-only estimate by the one from the first level
    e0, bad, _, _ = conditional_expectation(p_first, psi, v, params.eta, cfg.epsilon)
    e0 = np.where(bad, expectations[0], e0)
    values[0] = leverage_update(lv(x, 0.0), e0)
    expectations[0] = e0

    # half-levels near tau = T for the backward Rannacher window
    for k in range(1, cfg.rannacher_steps + 1):
        n = cfg.N - k
        tm = mcs.time(n + 0.5)
        p_mid = 0.5 * (tail[n] + tail[n + 1])
        e, bad, _, _ = conditional_expectation(p_mid, psi, v, params.eta, cfg.epsilon)
        e = np.where(bad, expectations[taus.index(mcs.time(n))], e)
        taus.append(tm)
        values.append(leverage_update(lv(x, tm), e))
        expectations.append(e)
    order = np.argsort(taus, kind="stable")

    surface = LeverageSurface(
        x=x.copy(),
        taus=np.array(taus)[order],
        values=np.array(values)[order],
        expectations=np.array(expectations)[order],
        dtau=mcs.dt,
        T=T,
        m2=grid.gv.m,
    )
    return CalibrationResult(surface, p_prev, diag, densities)
