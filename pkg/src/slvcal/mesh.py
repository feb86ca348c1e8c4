"""Non-uniform Cartesian meshes in the log-spot and variance directions.

Each direction is the image of a uniform parameter grid under a piecewise
map that is linear inside a chosen zone around the spot and sinh-stretched
outside it (the map is C2 at the joins, so the resulting mesh is smooth).
The spot coordinate is always an exact node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import GridError

MIN_NODES_X = 8
MIN_NODES_V = 4


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid1D:
    """One mesh direction.

    ``widths`` has ``m + 1`` entries with zero padding at both ends, so that
    ``widths[i]`` is the width to the left of node ``i`` and
    ``widths[i + 1]`` the width to its right.
    """

    nodes: np.ndarray
    spot_index: int
    uniform_zone: tuple[float, float]
    dxi: float = 1.0
    widths: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = _frozen(self.nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise GridError("a mesh needs at least three nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise GridError("mesh nodes must be strictly increasing")
        if not 0 <= self.spot_index < nodes.size:
            raise GridError("spot index outside the mesh")
        widths = np.zeros(nodes.size + 1)
        widths[1:-1] = np.diff(nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "widths", _frozen(widths))
        object.__setattr__(self, "weights", _frozen(0.5 * (widths[:-1] + widths[1:])))

    @property
    def m(self) -> int:
        return self.nodes.size

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def spot(self) -> float:
        return float(self.nodes[self.spot_index])

    def smoothness_ratio(self) -> float:
        """max_i |dx_{i+1} - dx_i| / dxi**2 over interior widths."""
        dx = np.diff(self.nodes)
        return float(np.max(np.abs(np.diff(dx))) / self.dxi**2)


@dataclass(frozen=True)
class Grid2D:
    gx: Grid1D
    gv: Grid1D
    alpha_positive: bool

    def __post_init__(self):
        if self.alpha_positive and self.gv.nodes[0] != 0.0:
            raise GridError("a positive variance exponent requires V_min = 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.m, self.gv.m

    @property
    def spot_indices(self) -> tuple[int, int]:
        return self.gx.spot_index, self.gv.spot_index


class _StretchMap:
    """Uniform inside [lo, hi], sinh outside, intensity ``c``."""

    def __init__(self, lo, hi, c, vmin, vmax):
        self.lo, self.hi, self.c = lo, hi, c
        self.xi_min = np.arcsinh((vmin - lo) / c)
        self.xi_int = (hi - lo) / c
        self.xi_max = self.xi_int + np.arcsinh((vmax - hi) / c)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = self.lo + self.c * xi
        left = xi < 0.0
        right = xi > self.xi_int
        out[left] = self.lo + self.c * np.sinh(xi[left])
        out[right] = self.hi + self.c * np.sinh(xi[right] - self.xi_int)
        return out

    def param_of(self, x):
        """Inverse map of a point inside the uniform zone."""
        return (x - self.lo) / self.c


def _stretched_mesh(m, spot, vmin, vmax, halfwidth, stretch):
    """Nodes, spot index, zone and parameter step of a stretched mesh."""

    def zone(shift):
        return max(vmin, spot - halfwidth + shift), min(vmax, spot + halfwidth + shift)

    def build(shift):
        lo, hi = zone(shift)
        return _StretchMap(lo, hi, stretch, vmin, vmax)

    def fractional_index(shift):
        smap = build(shift)
        dxi = (smap.xi_max - smap.xi_min) / (m - 1)
        return (smap.param_of(spot) - smap.xi_min) / dxi

    lo0, hi0 = zone(0.0)
    shift = 0.0
    if lo0 > vmin or hi0 < vmax:
        # Slide the uniform zone (fixed width) until the spot sits on the
        # uniform parameter lattice.
        target = round(fractional_index(0.0))
        step = 0.25 * (hi0 - lo0) / max(fractional_index(0.0), 1.0)
        g0 = fractional_index(0.0) - target
        if g0 != 0.0:
            bracket = None
            for k in range(1, 41):
                for s in (k * step, -k * step):
                    lo, hi = zone(s)
                    if not lo < spot < hi:
                        continue
                    if np.sign(fractional_index(s) - target) != np.sign(g0):
                        bracket = (0.0, s)
                        break
                if bracket:
                    break
            if bracket:
                a, b = sorted(bracket)
                shift = brentq(lambda s: fractional_index(s) - target, a, b, xtol=1e-15)

    smap = build(shift)
    dxi = (smap.xi_max - smap.xi_min) / (m - 1)
    xi = smap.xi_min + dxi * np.arange(m)
    nodes = smap(xi)
    nodes[0], nodes[-1] = vmin, vmax
    k0 = int(np.argmin(np.abs(nodes - spot)))
    if k0 in (0, m - 1):
        raise GridError("spot coincides with a truncation boundary")
    nodes[k0] = spot
    if not (nodes[k0 - 1] < spot < nodes[k0 + 1]):
        raise GridError("cannot place the spot on the mesh")
    return nodes, k0, (smap.lo, smap.hi), dxi


def _check(m, spot, vmin, vmax, halfwidth, min_nodes, name):
    if m < min_nodes:
        raise GridError(f"{name}: need at least {min_nodes} nodes, got {m}")
    if not vmin < spot < vmax:
        raise GridError(f"{name}: bounds must satisfy min < spot < max")
    if halfwidth <= 0.0:
        raise GridError(f"{name}: uniform half-width must be positive")


def build_grid_x(
    m1: int,
    X0: float,
    Xmin: float,
    Xmax: float,
    uniform_halfwidth: float = 0.5,
    stretch: float | None = None,
) -> Grid1D:
    """Mesh in x = log(S/S0).

    ``stretch`` is the sinh intensity; the default is a fifth of the uniform
    zone width, smaller values concentrate more nodes in the zone.
    """
    _check(m1, X0, Xmin, Xmax, uniform_halfwidth, MIN_NODES_X, "x-mesh")
    c = stretch if stretch is not None else 0.4 * uniform_halfwidth
    nodes, i0, zone, dxi = _stretched_mesh(m1, X0, Xmin, Xmax, uniform_halfwidth, c)
    return Grid1D(nodes, i0, zone, dxi)


def build_grid_v(
    m2: int,
    V0: float,
    Vmin: float,
    Vmax: float,
    uniform_halfwidth: float,
    alpha: float,
    stretch: float | None = None,
) -> Grid1D:
    """Mesh in the variance direction; ``alpha > 0`` pins ``Vmin`` to zero."""
    if alpha > 0.0 and Vmin != 0.0:
        raise GridError("v-mesh: alpha > 0 requires Vmin = 0")
    _check(m2, V0, Vmin, Vmax, uniform_halfwidth, MIN_NODES_V, "v-mesh")
    c = stretch if stretch is not None else 0.4 * uniform_halfwidth
    nodes, j0, zone, dxi = _stretched_mesh(m2, V0, Vmin, Vmax, uniform_halfwidth, c)
    return Grid1D(nodes, j0, zone, dxi)


def default_bounds(params, n_std: float = 5.0, ref_vol: float = 0.25) -> dict[str, float]:
    """Truncation of the computational domain for a parameter set.

    x covers ``n_std`` Black-Scholes standard deviations at ``ref_vol``;
    for the Heston family V_max is the larger of 5*eta and the 1 - 1e-6
    quantile of the stationary (gamma) variance law.
    """
    half = n_std * ref_vol * np.sqrt(params.T)
    out = {"Xmin": -half, "Xmax": half}
    vmax = 5.0 * params.eta
    if params.psi.alpha == 0.5 and params.xi > 0.0:
        from scipy.stats import gamma

        shape = 2.0 * params.kappa * params.eta / params.xi**2
        scale = params.xi**2 / (2.0 * params.kappa)
        vmax = max(vmax, float(gamma.ppf(1.0 - 1e-6, shape, scale=scale)))
    out["Vmax"] = vmax
    out["Vmin"] = 0.0 if params.psi.alpha > 0.0 else params.V0 - (vmax - params.V0)
    return out


def build_grid(
    params,
    m2: int = 50,
    m1: int | None = None,
    bounds: dict[str, float] | None = None,
    x_halfwidth: float = 0.5,
    v_halfwidth: float | None = None,
) -> Grid2D:
    """Default SLV mesh with ``m1 = 2 * m2`` unless given."""
    m1 = 2 * m2 if m1 is None else m1
    b = default_bounds(params)
    b.update(bounds or {})
    gx = build_grid_x(m1, 0.0, b["Xmin"], b["Xmax"], x_halfwidth)
    hw = v_halfwidth if v_halfwidth is not None else 0.5 * params.eta
    gv = build_grid_v(m2, params.V0, b["Vmin"], b["Vmax"], hw, params.psi.alpha)
    return Grid2D(gx, gv, params.psi.alpha > 0.0)
