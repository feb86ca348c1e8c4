import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slvcal.calibrate import CalibConfig, calibrate
from slvcal.errors import ImpliedVolError, StampMismatchError
from slvcal.fdops import assemble
from slvcal.mesh import build_grid
from slvcal.model import case_params, synthetic_lv_surface
from slvcal.pricing import (
    DEFAULT_STRIKES,
    black_scholes_price,
    call_payoff_grids,
    implied_vol,
    price_four_routes,
)
from slvcal.semidiscrete import SlvOperator, backward_lv_operator, dirac_density, duality_value
from slvcal.timestep import McsConfig, march

S0, T, RD, RF = 1.0764, 0.5, 0.03, 0.01


def test_payoff_grids(small_case1):
    grid, _ = small_case1
    i0 = grid.gx.spot_index
    u2, u1 = call_payoff_grids(grid, S0, S0)
    assert u1[i0] == 0.0
    assert np.all(u2 == u2[:, :1])
    np.testing.assert_array_equal(u2[:, 0], u1)
    k = i0 + 3
    K = 0.5 * S0 * np.exp(grid.gx.nodes[k])  # S0 e^x = 2K at node k
    assert call_payoff_grids(grid, K, S0)[1][k] == pytest.approx(K, rel=1e-15)
    with pytest.raises(ValueError):
        call_payoff_grids(grid, 0.0, S0)


def test_implied_vol_round_trip():
    for k in DEFAULT_STRIKES:
        price = black_scholes_price(0.15, S0, k * S0, T, RD, RF)
        assert implied_vol(price, S0, k * S0, T, RD, RF) == pytest.approx(0.15, abs=1e-10)


def test_implied_vol_reprices():
    K = 1.1 * S0
    price = float(black_scholes_price(0.237, S0, K, T, RD, RF))
    iv = implied_vol(price, S0, K, T, RD, RF)
    assert abs(float(black_scholes_price(iv, S0, K, T, RD, RF)) - price) <= 1e-12


def test_implied_vol_bounds():
    K = 0.8 * S0
    intrinsic = S0 * np.exp(-RF * T) - K * np.exp(-RD * T)
    with pytest.raises(ImpliedVolError) as info:
        implied_vol(intrinsic - 1e-4, S0, K, T, RD, RF)
    assert info.value.bound == "lower"
    with pytest.raises(ImpliedVolError) as info:
        implied_vol(S0, S0, K, T, RD, RF)
    assert info.value.bound == "upper"


@given(s1=st.floats(0.02, 2.0), s2=st.floats(0.02, 2.0), k=st.sampled_from(DEFAULT_STRIKES))
@settings(max_examples=80, deadline=None)
def test_implied_vol_monotone(s1, s2, k):
    if abs(s1 - s2) < 1e-3:
        return
    p1, p2 = (float(black_scholes_price(s, S0, k * S0, T, RD, RF)) for s in (s1, s2))
    iv1, iv2 = (implied_vol(p, S0, k * S0, T, RD, RF) for p in (p1, p2))
    assert (p1 < p2) == (iv1 < iv2)


def test_put_call_parity_lvb(case1):
    grid = build_grid(case1)
    ops = assemble(grid)
    lv = synthetic_lv_surface("smile")
    op = backward_lv_operator(grid.gx, ops, case1, lv)
    cfg = McsConfig(N=100, T=case1.T)
    i0 = grid.gx.spot_index
    S = S0 * np.exp(grid.gx.nodes)
    disc = np.exp(-RD * T)
    for k in (0.9, 1.0, 1.1):
        K = k * S0
        call = march(op, np.maximum(S - K, 0.0), cfg, scheme="cn")[i0] * disc
        put = march(op, np.maximum(K - S, 0.0), cfg, scheme="cn")[i0] * disc
        parity = disc * (S0 * np.exp((RD - RF) * T) - K)
        assert abs(call - put - parity) <= 1e-6


def test_flat_lv_atm_error_second_order(case1):
    # kink on the spot node: the error against the closed form is O(h^2)
    errs = []
    for m1 in (100, 200, 400):
        grid = build_grid(case1, m1=m1, m2=10)
        ops = assemble(grid)
        op = backward_lv_operator(grid.gx, ops, case1, synthetic_lv_surface("flat", sigma=0.1))
        u = np.maximum(S0 * np.exp(grid.gx.nodes) - S0, 0.0)
        fd = march(op, u, McsConfig(N=100, T=T), scheme="cn")[grid.gx.spot_index] * np.exp(-RD * T)
        errs.append(abs(fd - float(black_scholes_price(0.1, S0, S0, T, RD, RF))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


@pytest.fixture(scope="module")
def small_report():
    p = case_params(1)
    grid = build_grid(p, m2=10)
    ops = assemble(grid)
    lv = synthetic_lv_surface("smile")
    res = calibrate(grid, ops, p, lv, CalibConfig.from_dtau(p.T, 1 / 50))
    rep = price_four_routes(grid, ops, p, lv, res.leverage, strikes=(0.9, 1.0, 1.1), case="1")
    return p, grid, ops, lv, res, rep


def test_report_structure(small_report, tmp_path):
    p, *_, rep = small_report
    assert np.all(rep.rel_error("LVB") == 0.0)
    assert np.all(rep.iv_error("LVB") == 0.0)
    np.testing.assert_allclose(rep.fv["LVB"], rep.undiscounted["LVB"] * np.exp(-p.rd * p.T))
    path = tmp_path / "report.csv"
    rep.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == [
        "case", "K_over_S0", "FV_LVB", "FV_LVF", "FV_SLVB", "FV_SLVF",
        "eps_r_LVF", "eps_r_SLVB", "eps_r_SLVF", "iv_LVB", "eps_LVF", "eps_SLVB", "eps_SLVF",
    ]
    assert len(rows) == 4 and rows[1][0] == "1"


def test_slvb_is_duality_read_off(small_report):
    p, grid, ops, lv, res, rep = small_report
    cfg = McsConfig(N=25, T=p.T)
    u = march(SlvOperator(grid, ops, p, res.leverage.at), call_payoff_grids(grid, S0, S0)[0], cfg)
    assert duality_value(dirac_density(grid), u) == rep.undiscounted["SLVB"][1]


def test_density_reuse_matches_recompute(small_report):
    p, grid, ops, lv, res, rep = small_report
    again = price_four_routes(grid, ops, p, lv, res.leverage, strikes=(0.9, 1.0, 1.1), slv_density=res.density)
    np.testing.assert_allclose(again.undiscounted["SLVF"], rep.undiscounted["SLVF"], rtol=1e-12)


def test_stamp_mismatch_rejected(small_report):
    p, grid, ops, lv, res, _ = small_report
    other = build_grid(p, m2=12)
    with pytest.raises(StampMismatchError):
        price_four_routes(other, assemble(other), p, lv, res.leverage)
