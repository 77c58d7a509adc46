"""torusmfg: a tau-discrete solver for stationary mean-field games on T^d."""

__version__ = "0.1.0"

from .grid import Grid, GridFunction, SpectralField  # noqa: F401
from .models import (  # noqa: F401
    ConvolutionCoupling,
    Lagrangian,
    LogCoupling,
    ModelSpec,
    PowerCoupling,
    Tolerances,
    TrigPoly,
)
from .kernel import HeatKernel  # noqa: F401
from .lax import ControlField, LaxResult  # noqa: F401
from .hj import ErgodicHJSolution, solve_hj  # noqa: F401
from .measure import Density  # noqa: F401
from .mfg import DiscreteSolution, solve_mfg  # noqa: F401
from .continuum import ContinuumSolution, solve_continuum  # noqa: F401
from .chain import ChainConfig, ChainResult, simulate  # noqa: F401
