"""Grid-level laboratory for stochastic integrals under different filtrations."""

__version__ = "0.1.0"

from ._accel import USE_NUMBA
from .grid_path import SamplePath, TimeGrid
from .simulate import Ensemble, Seed
