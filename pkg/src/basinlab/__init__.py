"""Noisy gradient descent among the wells of one-dimensional landscapes."""

__version__ = "0.1.0"

from .ensemble import ExperimentConfig, ExperimentResult, run_experiment
from .landscape import ESCAPED, Landscape, build_well_catalog, builtin, locate_basin
from .sweep import SweepConfig, gap_metrics, run_sweep

__all__ = [
    "ESCAPED",
    "ExperimentConfig",
    "ExperimentResult",
    "Landscape",
    "SweepConfig",
    "build_well_catalog",
    "builtin",
    "gap_metrics",
    "locate_basin",
    "run_experiment",
    "run_sweep",
]
