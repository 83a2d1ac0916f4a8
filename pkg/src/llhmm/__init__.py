"""Heterogeneous multiscale upscaling for the Landau-Lifshitz equation with
a rapidly oscillating exchange coefficient."""

from .cell import CellSolution, harmonic_mean, solve_cell
from .corrector import CorrectorField, EigenBasis, build_v, corrector_field, eigendecompose, schrodinger_map
from .errors import *  # noqa: F401,F403
from .grid import Coefficient, DiffusionOperator, PeriodicGrid, apply_L
from .homogenized import HomogenizedOperator, apply_LH, reference_quantities, solve_homogenized
from .kernels import Kernel, KernelSpec, build as build_kernel
from .micro import LLState, StepControl, integrate, solve_window
from .presets import get_coefficient, get_macro_field
from .upscaling import AveragingWindow, MicroSpec, UpscalingReport, upscale, upscale_all

__version__ = "0.1.0"
