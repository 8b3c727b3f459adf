import math
import os
import sys
from pathlib import Path

# Add project root to Python path for test imports
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

import numpy as np

from algorithms.profiles import gaussian_profile
from algorithms.spectral import ComplexField, lp_power, make_grid

# Long acceptance runs only execute with NORMGROUND_SLOW=1
SLOW = os.environ.get("NORMGROUND_SLOW") == "1"

P_SMALL_MASS = 8.0 / 3.0

# Common grids
SMALL_GRID = {"d": 3, "n_axis": 16, "L": 8.0}
GAUSSIAN_GRID = {"d": 3, "n_axis": 64, "L": 24.0}
COARSE_GRID = {"d": 3, "n_axis": 32, "L": 24.0}


def small_grid():
    return make_grid(**SMALL_GRID)


def gaussian_grid():
    return make_grid(**GAUSSIAN_GRID)


def coarse_grid():
    return make_grid(**COARSE_GRID)


def normalized_gaussian(spec, rho: float = 1.0, width: float = 1.0) -> ComplexField:
    """Gaussian of the given width sampled on spec and rescaled to charge rho."""
    field = gaussian_profile(1.0, width).sample(spec)
    return field.scaled(rho / math.sqrt(lp_power(field.values, 2.0, spec)))


def random_field(spec, seed: int = 0) -> ComplexField:
    rng = np.random.default_rng(seed)
    return ComplexField(spec, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))
