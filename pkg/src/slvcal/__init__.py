"""Exact calibration of a semidiscretized SLV model to an LV model.

Finite differences on a stretched mesh, an adjoint forward discretization of
the Fokker-Planck equation, Modified Craig-Sneyd time stepping and an inner
fixed-point iteration for the leverage function.
"""

from .calibrate import CalibConfig, LeverageSurface, calibrate
from .errors import SlvError
from .fdops import assemble
from .mesh import build_grid
from .model import PsiFamily, SlvParams, case_params, synthetic_lv_surface
from .pricing import implied_vol, price_four_routes

__all__ = [
    "CalibConfig",
    "LeverageSurface",
    "PsiFamily",
    "SlvError",
    "SlvParams",
    "assemble",
    "build_grid",
    "calibrate",
    "case_params",
    "implied_vol",
    "price_four_routes",
    "synthetic_lv_surface",
]
