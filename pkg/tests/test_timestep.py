import numpy as np
import pytest

from slvcal.errors import SingularSystemError
from slvcal.fdops import BandedMatrix, assemble
from slvcal.mesh import build_grid
from slvcal.model import case_params, synthetic_lv_surface
from slvcal.pricing import call_payoff_grids
from slvcal.semidiscrete import (
    adjoint_forward_operator,
    backward_lv_operator,
    backward_slv_operator,
    dirac_density,
    duality_value,
    forward_lv_operator,
)
from slvcal.timestep import (
    McsConfig,
    banded_solve,
    crank_nicolson_step,
    implicit_euler_half_steps,
    march,
    mcs_step,
)


class ScalarOp:
    """F(w) = lam w carried entirely by the x-direction part."""

    def __init__(self, lam):
        self.lam = lam

    def f0(self, t, w):
        return 0.0 * w

    def f1(self, t, w):
        return self.lam * w

    def f2(self, t, w):
        return 0.0 * w

    def apply(self, t, w):
        return self.lam * w

    def solve1(self, t, c, rhs):
        return rhs / (1.0 - c * self.lam)

    def solve2(self, t, c, rhs):
        return rhs

    solve_full = solve1


def test_zero_field_is_identity():
    w = np.array([1.0, -2.0, 3.5])
    op = ScalarOp(0.0)
    np.testing.assert_array_equal(mcs_step(op, w, 0.0, 0.1, 1 / 3), w)
    np.testing.assert_array_equal(implicit_euler_half_steps(op, w, 0.0, 0.1), w)
    np.testing.assert_array_equal(crank_nicolson_step(op, w, 0.0, 0.1), w)


@pytest.mark.parametrize("theta", [1 / 3, 0.5, 0.8])
def test_scalar_mcs_local_error_third_order(theta):
    lam = -1.3
    errs = [abs(mcs_step(ScalarOp(lam), np.array([1.0]), 0.0, dt, theta)[0] - np.exp(lam * dt)) for dt in (0.004, 0.002, 0.001)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 7.0) and np.all(ratios < 9.0)


def test_implicit_half_steps_closed_form():
    lam, dt = -2.0, 0.1
    out = implicit_euler_half_steps(ScalarOp(lam), np.array([1.0]), 0.0, dt)[0]
    assert out == pytest.approx((1 - lam * dt / 2) ** -2, rel=1e-15)


def test_cn_amplification():
    lam, dt = -3.0, 0.05
    out = crank_nicolson_step(ScalarOp(lam), np.array([1.0]), 0.0, dt)[0]
    assert out == pytest.approx((1 + lam * dt / 2) / (1 - lam * dt / 2), rel=1e-15)


def _dense(mat: BandedMatrix):
    return mat.toarray()


def test_banded_solve_toeplitz():
    m = 50
    data = np.zeros((3, m))
    data[0], data[1], data[2] = 1.0, -1.0, 1.0  # B = I - tridiag(-1, 2, -1)
    B = BandedMatrix((-1, 0, 1), data)
    rhs = np.linspace(-1.0, 1.0, m)
    x = banded_solve(B, rhs, 1.0)
    A = np.eye(m) - _dense(B)
    np.testing.assert_allclose(x, np.linalg.solve(A, rhs), rtol=0, atol=1e-12 * np.abs(x).max())
    np.testing.assert_array_equal(banded_solve(B, rhs, 0.0), rhs)


def test_banded_solve_pentadiagonal(rng):
    m = 40
    B = BandedMatrix((-2, -1, 0, 1, 2), rng.uniform(-1.0, 1.0, (5, m)))
    rhs = rng.standard_normal((m, 3))
    x = banded_solve(B, rhs, 0.1)
    A = np.eye(m) - 0.1 * _dense(B)
    np.testing.assert_allclose(x, np.linalg.solve(A, rhs), atol=1e-12)


def test_banded_solve_singular():
    B = BandedMatrix((0,), np.ones((1, 4)))
    with pytest.raises(SingularSystemError):
        banded_solve(B, np.ones(4), 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        McsConfig(theta=0.0)
    with pytest.raises(ValueError):
        McsConfig(N=1, rannacher_steps=2)
    cfg = McsConfig(N=8, T=2.0)
    assert cfg.dt * cfg.N == 2.0 and cfg.time(0.5) == 0.125


def _forward(grid, ops, params, lev=None):
    lev = lev or (lambda tau: np.ones(grid.gx.m))
    return adjoint_forward_operator(backward_slv_operator(grid, ops, params, lev))


def test_mass_through_mcs(small_case1, case1):
    grid, ops = small_case1
    x = grid.gx.nodes
    fwd = _forward(grid, ops, case1, lambda tau: 1.0 + 0.3 * np.tanh(x) * (1 + tau))
    drift = []
    march(fwd, dirac_density(grid), McsConfig(N=200, T=case1.T), callback=lambda t, w: drift.append(abs(w.sum() - 1.0)))
    assert max(drift) <= 1e-12


def test_implicit_half_steps_keep_mass(small_case1, case1):
    grid, ops = small_case1
    out = implicit_euler_half_steps(_forward(grid, ops, case1), dirac_density(grid), 0.0, 0.01)
    assert abs(out.sum() - 1.0) <= 1e-14


def test_cn_keeps_mass_1d(small_case1, case1):
    grid, ops = small_case1
    fl = forward_lv_operator(backward_lv_operator(grid.gx, ops, case1, synthetic_lv_surface("smile")))
    w = march(fl, dirac_density(grid.gx), McsConfig(N=50, T=case1.T), scheme="cn")
    assert abs(w.sum() - 1.0) <= 1e-13


def test_case4_stability_large_steps():
    p = case_params(4)
    grid = build_grid(p)
    ops = assemble(grid)
    w = march(_forward(grid, ops, p), dirac_density(grid), McsConfig(N=10, T=p.T, rannacher_steps=0))
    assert np.all(np.isfinite(w)) and np.abs(w).max() < 1e10


def test_rannacher_duality_order(small_case1, case1):
    grid, ops = small_case1
    fwd = _forward(grid, ops, case1)
    u = call_payoff_grids(grid, 1.0, case1.S0)[0]
    vals = [
        duality_value(march(fwd, dirac_density(grid), McsConfig(N=n, T=case1.T)), u)
        for n in (50, 100, 200, 400)
    ]
    d = np.abs(np.diff(vals))
    orders = np.log2(d[:-1] / d[1:])
    assert orders.min() >= 1.8
