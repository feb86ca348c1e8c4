"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the command line
front end prints on failure.
"""


class SlvError(Exception):
    code = "SLV_ERROR"


class GridError(SlvError, ValueError):
    code = "GRID_INVALID"


class StencilError(SlvError, ValueError):
    code = "STENCIL_INVALID"


class ModelError(SlvError, ValueError):
    code = "MODEL_INVALID"


class SurfaceError(SlvError, ValueError):
    code = "SURFACE_INVALID"


class SingularSystemError(SlvError, ArithmeticError):
    code = "SINGULAR_SYSTEM"


class CalibrationError(SlvError, ArithmeticError):
    code = "CALIBRATION_FAILED"


class StampMismatchError(SlvError, ValueError):
    code = "STAMP_MISMATCH"


class ConfigError(SlvError, ValueError):
    code = "CONFIG_INVALID"


class ImpliedVolError(SlvError, ValueError):
    """Price outside the range an implied volatility can reproduce.

    ``bound`` is ``"lower"`` or ``"upper"``.
    """

    code = "IMPLIED_VOL_RANGE"

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound
