"""Vanilla call prices by four routes, implied vols and route-error metrics.

Routes:

* ``LVB``  backward LV system, read off at the spot node
* ``LVF``  forward LV density against the payoff
* ``SLVB`` backward SLV system with the calibrated leverage
* ``SLVF`` forward SLV density against the payoff

LVB is the reference every other route is compared with.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .calibrate import LeverageSurface
from .errors import ImpliedVolError
from .fdops import DiffOps
from .mesh import Grid2D
from .model import LvSurface, SlvParams
from .semidiscrete import (
    SlvOperator,
    backward_lv_operator,
    dirac_density,
    duality_value,
    forward_lv_operator,
)
from .timestep import McsConfig, march

ROUTES = ("LVB", "LVF", "SLVB", "SLVF")
DEFAULT_STRIKES = (0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3)
IV_LO, IV_HI = 1e-4, 5.0


def call_payoff_grids(grid: Grid2D, K: float, S0: float):
    """Call payoff on the 2-D grid (constant in v) and on the x-mesh."""
    if not K > 0.0:
        raise ValueError("strike must be positive")
    u1 = np.maximum(S0 * np.exp(grid.gx.nodes) - K, 0.0)
    return np.repeat(u1[:, None], grid.gv.m, axis=1), u1


def black_scholes_price(sigma, S0, K, T, rd, rf, call: bool = True):
    """Garman-Kohlhagen price of a European option (discounted)."""
    sigma = np.asarray(sigma, dtype=float)
    sq = sigma * np.sqrt(T)
    d1 = (np.log(S0 / K) + (rd - rf + 0.5 * sigma**2) * T) / sq
    d2 = d1 - sq
    dom, fgn = np.exp(-rd * T), np.exp(-rf * T)
    if call:
        return S0 * fgn * norm.cdf(d1) - K * dom * norm.cdf(d2)
    return K * dom * norm.cdf(-d2) - S0 * fgn * norm.cdf(-d1)


def implied_vol(price: float, S0: float, K: float, T: float, rd: float, rf: float) -> float:
    """Black-Scholes volatility of a discounted call price, as a decimal."""
    lo = black_scholes_price(IV_LO, S0, K, T, rd, rf)
    hi = black_scholes_price(IV_HI, S0, K, T, rd, rf)
    if not price >= lo:
        raise ImpliedVolError(f"price {price!r} below the lower bound {float(lo)!r}", "lower")
    if not price <= hi:
        raise ImpliedVolError(f"price {price!r} above the upper bound {float(hi)!r}", "upper")
    if price == lo:
        return IV_LO
    f = lambda s: float(black_scholes_price(s, S0, K, T, rd, rf)) - price
    return brentq(f, IV_LO, IV_HI, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


@dataclass
class PriceReport:
    strikes: np.ndarray  # K / S0
    undiscounted: dict[str, np.ndarray]
    discount: float
    params: SlvParams
    case: str = ""
    iv: dict[str, np.ndarray] = field(init=False)

    def __post_init__(self):
        p = self.params
        self.iv = {
            r: np.array(
                [
                    implied_vol(fv, p.S0, k * p.S0, p.T, p.rd, p.rf)
                    for k, fv in zip(self.strikes, self.fv[r])
                ]
            )
            for r in ROUTES
        }

    @property
    def fv(self) -> dict[str, np.ndarray]:
        return {r: self.discount * v for r, v in self.undiscounted.items()}

    def rel_error(self, route: str) -> np.ndarray:
        ref = self.undiscounted["LVB"]
        return (self.undiscounted[route] - ref) / ref

    def iv_error(self, route: str) -> np.ndarray:
        """Absolute implied-vol difference to LVB, in volatility points (%)."""
        return 100.0 * np.abs(self.iv[route] - self.iv["LVB"])

    def max_rel_error(self) -> float:
        return max(float(np.max(np.abs(self.rel_error(r)))) for r in ROUTES[1:])

    def max_iv_error(self) -> float:
        return max(float(np.max(self.iv_error(r))) for r in ROUTES[1:])

    def rows(self) -> list[list[str]]:
        fv = self.fv
        out = []
        for k in range(self.strikes.size):
            row = [self.case, f"{self.strikes[k]:.4f}"]
            row += [f"{fv[r][k]:.10f}" for r in ROUTES]
            row += [f"{self.rel_error(r)[k]:.6e}" for r in ROUTES[1:]]
            row.append(f"{100.0 * self.iv['LVB'][k]:.4f}")
            row += [f"{self.iv_error(r)[k]:.4f}" for r in ROUTES[1:]]
            out.append(row)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [
                    "case", "K_over_S0", "FV_LVB", "FV_LVF", "FV_SLVB", "FV_SLVF",
                    "eps_r_LVF", "eps_r_SLVB", "eps_r_SLVF",
                    "iv_LVB", "eps_LVF", "eps_SLVB", "eps_SLVF",
                ]
            )
            w.writerows(self.rows())


def _mcs_config(leverage: LeverageSurface, theta: float, rannacher_steps: int) -> McsConfig:
    N = int(round(leverage.T / leverage.dtau))
    return McsConfig(theta=theta, N=N, T=leverage.T, rannacher_steps=rannacher_steps)


def price_four_routes(
    grid: Grid2D,
    ops: DiffOps,
    params: SlvParams,
    lv: LvSurface,
    leverage: LeverageSurface,
    strikes=DEFAULT_STRIKES,
    theta: float = 1.0 / 3.0,
    rannacher_steps: int = 2,
    slv_density: np.ndarray | None = None,
    case: str = "",
) -> PriceReport:
    """Undiscounted and discounted call prices on all four routes.

    ``strikes`` are relative to S0.  ``slv_density`` may pass the P-bar at
    tau = T already produced by the calibration; otherwise it is recomputed
    with the given leverage.
    """
    leverage.check_stamps(grid, leverage.dtau, params.T)
    cfg = _mcs_config(leverage, theta, rannacher_steps)
    strikes = np.asarray(strikes, dtype=float)
    S0 = params.S0
    i0, j0 = grid.spot_indices
    payoffs = [call_payoff_grids(grid, k * S0, S0) for k in strikes]
    u2 = np.stack([p[0] for p in payoffs], axis=-1)  # (m1, m2, K)
    u1 = np.stack([p[1] for p in payoffs], axis=-1)  # (m1, K)

    lvb_op = backward_lv_operator(grid.gx, ops, params, lv)
    lvb = march(lvb_op, u1, cfg, scheme="cn")[i0]
    p_lv = march(forward_lv_operator(lvb_op), dirac_density(grid.gx), cfg, scheme="cn")
    lvf = p_lv @ u1

    slv_b = SlvOperator(grid, ops, params, leverage.at, adjoint=False)
    slvb = np.array(
        [march(slv_b, u2[..., k], cfg, scheme="mcs")[i0, j0] for k in range(strikes.size)]
    )
    if slv_density is None:
        slv_density = march(slv_b.adjoint_operator(), dirac_density(grid), cfg, scheme="mcs")
    slvf = np.array([duality_value(slv_density, u2[..., k]) for k in range(strikes.size)])

    return PriceReport(
        strikes=strikes,
        undiscounted={"LVB": lvb, "LVF": lvf, "SLVB": slvb, "SLVF": slvf},
        discount=float(np.exp(-params.rd * params.T)),
        params=params,
        case=case,
    )
