import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slvcal.errors import GridError
from slvcal.mesh import build_grid, build_grid_v, build_grid_x, default_bounds
from slvcal.model import PsiFamily, case_params


def test_figure_layout_x():
    g = build_grid_x(30, 0.0, -math.log(30), math.log(30), 0.5)
    assert g.m == 30
    assert g.nodes[g.spot_index] == 0.0
    dx = np.diff(g.nodes)
    # clustered near the spot: spacing grows towards both ends
    assert dx[g.spot_index] < dx[0] and dx[g.spot_index] < dx[-1]
    assert g.bounds == (-math.log(30), math.log(30))


def test_figure_layout_v():
    g = build_grid_v(15, 0.2, 0.0, 15.0, 0.1, alpha=0.5)
    assert g.m == 15
    assert g.nodes[g.spot_index] == 0.2
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 15.0
    dv = np.diff(g.nodes)
    assert dv[g.spot_index] < dv[-1]


def test_uniform_limit():
    g = build_grid_x(21, 0.0, -1.0, 1.0, 5.0)
    dx = np.diff(g.nodes)
    np.testing.assert_allclose(dx, dx[0], rtol=1e-12)
    np.testing.assert_allclose(g.weights[1:-1], dx[0], rtol=1e-12)
    np.testing.assert_allclose(g.weights[[0, -1]], 0.5 * dx[0], rtol=1e-12)


def test_trapezoid_weights_and_widths():
    g = build_grid_x(40, 0.0, -1.2, 0.9, 0.3)
    assert g.widths[0] == 0.0 and g.widths[-1] == 0.0
    np.testing.assert_array_equal(g.weights, 0.5 * (g.widths[:-1] + g.widths[1:]))
    assert math.isclose(g.weights.sum(), 0.9 + 1.2, rel_tol=1e-14)


def test_v_weights_sum():
    g = build_grid_v(30, 0.04, 0.0, 1.5, 0.02, alpha=0.5)
    assert math.isclose(g.weights.sum(), 1.5, rel_tol=1e-14)


def test_smoothness_ratio_bounded_under_refinement():
    r100 = build_grid_x(100, 0.0, -2.0, 2.0, 0.5).smoothness_ratio()
    r200 = build_grid_x(200, 0.0, -2.0, 2.0, 0.5).smoothness_ratio()
    r400 = build_grid_x(400, 0.0, -2.0, 2.0, 0.5).smoothness_ratio()
    assert r200 <= 1.5 * r100 and r400 <= 1.5 * r100


def test_width_bounds_scale_with_parameter_step():
    for m in (100, 200):
        g = build_grid_x(m, 0.0, -2.0, 2.0, 0.5)
        ratio = np.diff(g.nodes) / g.dxi
        assert 0.1 < ratio.min() and ratio.max() < 5.0


@given(
    m=st.integers(8, 160),
    spot=st.floats(-0.5, 0.5),
    half=st.floats(0.05, 0.6),
)
@settings(max_examples=60, deadline=None)
def test_spot_is_exact_node(m, spot, half):
    g = build_grid_x(m, spot, -2.0, 2.0, half)
    assert g.nodes[g.spot_index] == spot
    assert np.all(np.diff(g.nodes) > 0)
    assert g.bounds == (-2.0, 2.0)


def test_alpha_positive_requires_zero_vmin():
    with pytest.raises(GridError):
        build_grid_v(20, 0.05, 0.01, 1.0, 0.02, alpha=0.5)


def test_alpha_zero_accepts_negative_vmin():
    g = build_grid_v(20, 0.05, -0.5, 0.6, 0.02, alpha=0.0)
    assert g.nodes[0] == -0.5
    assert g.nodes[g.spot_index] == 0.05


@pytest.mark.parametrize(
    "args",
    [
        (7, 0.0, -1.0, 1.0, 0.2),  # too few nodes
        (20, 1.5, -1.0, 1.0, 0.2),  # spot outside
        (20, 0.0, 1.0, -1.0, 0.2),  # reversed bounds
        (20, 0.0, -1.0, 1.0, 0.0),  # empty zone
    ],
)
def test_invalid_x_requests(args):
    with pytest.raises(GridError):
        build_grid_x(*args)


def test_default_grid_shape_and_flags():
    p = case_params(1)
    g = build_grid(p)
    assert g.shape == (100, 50)
    assert g.alpha_positive and g.gv.nodes[0] == 0.0
    i0, j0 = g.spot_indices
    assert g.gx.nodes[i0] == 0.0 and g.gv.nodes[j0] == p.V0


def test_default_bounds_alpha_zero_symmetric():
    p = case_params(1).with_(psi=PsiFamily("exp"))
    b = default_bounds(p)
    assert math.isclose(b["Vmax"] - p.V0, p.V0 - b["Vmin"])
    assert b["Xmin"] == -b["Xmax"]
