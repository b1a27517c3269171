"""Numerical companion for log-Hölder continuity of the density of states
of Schrödinger operators with singular potentials.

Modules
-------
harmonic     solid harmonics and the expansion of the fundamental solution
decompose    harmonic/Newtonian splitting of local solutions
ballsolve    Dirichlet problem for -Δ + W on a ball by Nyström iteration
spectral1d   one-dimensional spectral windows, transfer bounds, DOS sweeps
spectralnd   finite-difference spectral windows and UCP probes in d = 2, 3
potentials   closed-form singular potentials
cli          batch runner (``singdos run|fit|calibrate``)
"""

__version__ = "0.1.0"

from . import errors
from .constants import load_constants
from .errors import SingdosError
from .potentials import Potential, free_potential, power_singularity, random_singular

__all__ = [
    "__version__",
    "errors",
    "load_constants",
    "SingdosError",
    "Potential",
    "free_potential",
    "power_singularity",
    "random_singular",
]
