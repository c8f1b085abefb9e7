"""Monte Carlo laboratory for diffusions with singular mixed-norm drift.

Subpackages by layer: :mod:`geometry` (cylinders, mixed norms), :mod:`engine`
(Euler scheme, stopping), :mod:`functionals` (streaming path integrals),
:mod:`estimators`, :mod:`green`, :mod:`ito`, :mod:`transport`, and the
runner layer :mod:`scenarios`, :mod:`acceptance`, :mod:`cli`.
"""

from .engine import DiffusionSpec, PathBatch, bm, drive, run_batch, simulate_path
from .geometry import MixedNormSpec, ParabolicCylinder, TensorGrid, GridFunction, mixed_norm, \
    dual_mixed_norm
from .scenarios import ConfigError, run_scenario
from .acceptance import run_acceptance

__version__ = "0.1.0"

__all__ = [
    "DiffusionSpec",
    "PathBatch",
    "bm",
    "drive",
    "run_batch",
    "simulate_path",
    "MixedNormSpec",
    "ParabolicCylinder",
    "TensorGrid",
    "GridFunction",
    "mixed_norm",
    "dual_mixed_norm",
    "ConfigError",
    "run_scenario",
    "run_acceptance",
]
