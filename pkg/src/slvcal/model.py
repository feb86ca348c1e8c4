"""SLV model parameters, the psi family and the local volatility surface."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ModelError, SurfaceError

RD = 0.03
RF = 0.01
SPOT = 1.0764


@dataclass(frozen=True)
class PsiFamily:
    """psi(v) together with the exponent alpha of the variance diffusion.

    ``constant`` (psi = 1, alpha = 0) is the degenerate family under which
    the SLV model collapses onto the LV model when xi = 0.
    """

    kind: str = "sqrt"

    _ALPHA = {"sqrt": 0.5, "linear": 1.0, "exp": 0.0, "constant": 0.0}

    def __post_init__(self):
        if self.kind not in self._ALPHA:
            raise ModelError(f"unknown psi family {self.kind!r}")

    @property
    def alpha(self) -> float:
        return self._ALPHA[self.kind]

    def psi(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "sqrt":
            return np.sqrt(np.maximum(v, 0.0))
        if self.kind == "linear":
            return v
        if self.kind == "exp":
            return np.exp(v)
        return np.ones_like(v)

    def psi2(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "sqrt":
            return v.copy()
        if self.kind == "linear":
            return v * v
        if self.kind == "exp":
            return np.exp(2.0 * v)
        return np.ones_like(v)


@dataclass(frozen=True)
class SlvParams:
    kappa: float
    eta: float
    xi_sv: float
    mu: float
    rho: float
    T: float
    V0: float | None = None
    rd: float = RD
    rf: float = RF
    S0: float = SPOT
    psi: PsiFamily = field(default_factory=PsiFamily)

    def __post_init__(self):
        if self.V0 is None:
            object.__setattr__(self, "V0", self.eta)
        if self.kappa <= 0 or self.eta <= 0 or self.xi_sv <= 0:
            raise ModelError("kappa, eta and xi_sv must be positive")
        if not 0.0 <= self.mu <= 1.0:
            raise ModelError("mixing parameter must lie in [0, 1]")
        if abs(self.rho) > 1.0:
            raise ModelError("correlation must lie in [-1, 1]")
        if self.T <= 0 or self.S0 <= 0:
            raise ModelError("maturity and spot must be positive")

    @property
    def xi(self) -> float:
        return self.mu * self.xi_sv

    @property
    def alpha(self) -> float:
        return self.psi.alpha

    def feller(self) -> float:
        """2 kappa eta - xi^2; negative when the Feller condition fails."""
        return 2.0 * self.kappa * self.eta - self.xi**2

    def with_(self, **changes) -> "SlvParams":
        return replace(self, **changes)


# kappa, eta, xi_sv, rho, mu, T
_CASES = {
    1: (3.02, 0.015, 0.41, -0.13, 0.75, 0.5),
    2: (1.00, 0.09, 1.00, -0.3, 1.0, 0.5),
    3: (0.75, 0.015, 0.20, -0.14, 0.75, 2.0),
    4: (1.00, 0.09, 1.00, -0.3, 1.0, 2.0),
}


def case_params(case_id: int) -> SlvParams:
    """Heston-type parameter sets 1-4 with V0 equal to the long-term mean."""
    try:
        kappa, eta, xi_sv, rho, mu, T = _CASES[case_id]
    except KeyError:
        raise ModelError(f"unknown case {case_id!r}; expected 1..4") from None
    return SlvParams(kappa=kappa, eta=eta, xi_sv=xi_sv, mu=mu, rho=rho, T=T)


@dataclass(frozen=True)
class LvSurface:
    """sigma_LV sampled on a tensor grid, bilinear with flat extrapolation."""

    x_samples: np.ndarray
    tau_samples: np.ndarray
    values: np.ndarray  # shape (len(x_samples), len(tau_samples))

    def __post_init__(self):
        x = np.asarray(self.x_samples, dtype=float)
        tau = np.asarray(self.tau_samples, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if x.size == 0 or tau.size == 0:
            raise SurfaceError("empty local volatility surface")
        if vals.shape != (x.size, tau.size):
            raise SurfaceError("surface values do not match the sample grid")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(tau) <= 0):
            raise SurfaceError("sample coordinates must be strictly increasing")
        if not np.all(vals > 0.0):
            raise SurfaceError("local volatilities must be strictly positive")
        object.__setattr__(self, "x_samples", x)
        object.__setattr__(self, "tau_samples", tau)
        object.__setattr__(self, "values", vals)

    def covers(self, T: float) -> bool:
        return self.tau_samples[0] <= 0.0 and self.tau_samples[-1] >= T

    def __call__(self, x, tau: float) -> np.ndarray:
        return lv_eval(self, x, tau)


def _bracket(samples: np.ndarray, q: np.ndarray):
    """Left sample index and weight of q in [samples[k], samples[k+1]]."""
    if samples.size == 1:
        return np.zeros(q.shape, dtype=int), np.zeros(q.shape)
    k = np.clip(np.searchsorted(samples, q, side="right") - 1, 0, samples.size - 2)
    w = (q - samples[k]) / (samples[k + 1] - samples[k])
    return k, w


def lv_eval(surface: LvSurface, x_nodes, tau: float) -> np.ndarray:
    """Bilinear in (x, tau), clamped to the sample hull.

    Written as a + w (b - a) so constant data are reproduced exactly.
    """
    xs, ts, vals = surface.x_samples, surface.tau_samples, surface.values
    x = np.clip(np.asarray(x_nodes, dtype=float), xs[0], xs[-1])
    t = np.clip(np.asarray(float(tau)), ts[0], ts[-1])
    k, wt = _bracket(ts, t)
    k, wt = int(k), float(wt)
    k1 = min(k + 1, ts.size - 1)
    col = vals[:, k] + wt * (vals[:, k1] - vals[:, k])
    i, wx = _bracket(xs, x)
    i1 = np.minimum(i + 1, xs.size - 1)
    return col[i] + wx * (col[i1] - col[i])


def synthetic_lv_surface(
    kind: str = "smile",
    sigma: float = 0.1,
    a: float = 0.1,
    b: float = 0.4,
    x_range: float = 5.0,
    tau_max: float = 10.0,
) -> LvSurface:
    """Flat surface at ``sigma`` or the smile a + b x^2 exp(-tau) capped to [0.05, 0.5]."""
    if kind == "flat":
        if sigma <= 0.0:
            raise SurfaceError("flat volatility must be positive")
        return LvSurface(
            np.array([-x_range, x_range]), np.array([0.0, tau_max]), np.full((2, 2), sigma)
        )
    if kind != "smile":
        raise SurfaceError(f"unknown synthetic surface {kind!r}")
    x = np.linspace(-x_range, x_range, 1001)
    tau = np.linspace(0.0, tau_max, 401)
    vals = np.clip(a + b * x[:, None] ** 2 * np.exp(-tau[None, :]), 0.05, 0.5)
    return LvSurface(x, tau, vals)


def read_lv_csv(path) -> LvSurface:
    """Parse ``x,tau,sigma`` rows covering a full tensor grid, x-major."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "tau", "sigma"]:
            raise SurfaceError(f"{path}: header must be x,tau,sigma")
        rows = [(float(r["x"]), float(r["tau"]), float(r["sigma"])) for r in reader]
    if not rows:
        raise SurfaceError(f"{path}: no samples")
    data = np.array(rows)
    xs = np.unique(data[:, 0])
    taus = np.unique(data[:, 1])
    if len(rows) != xs.size * taus.size:
        raise SurfaceError(f"{path}: samples do not form a full (x, tau) grid")
    expected_x = np.repeat(xs, taus.size)
    expected_tau = np.tile(taus, xs.size)
    if not (np.array_equal(data[:, 0], expected_x) and np.array_equal(data[:, 1], expected_tau)):
        raise SurfaceError(f"{path}: rows must be ordered x-major over a full grid")
    return LvSurface(xs, taus, data[:, 2].reshape(xs.size, taus.size))


def write_lv_csv(surface: LvSurface, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "tau", "sigma"])
        for i, x in enumerate(surface.x_samples):
            for k, t in enumerate(surface.tau_samples):
                w.writerow([repr(float(x)), repr(float(t)), repr(float(surface.values[i, k]))])
