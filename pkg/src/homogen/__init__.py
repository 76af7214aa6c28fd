"""Periodic homogenization of the stationary Maxwell operator.

The package solves the cell problems for a periodic coefficient pair
``(eta, nu)``, builds the effective operator and its first-order correctors,
and measures convergence rates on the unit torus, on the unit cube with
boundary-layer cut-offs, and for the Maxwell system.
"""

from .cell import CellData, solve_cell
from .coefficients import CoefficientError, CoefficientSpec, shipped_presets
from .domain import CubeSource, DomainConfig, domain_rate_study
from .estimators import CellHomogenizer, HomogenizationStudy, RateEstimator
from .fields import CoefficientSet, Grid, GridError, PeriodicField, build_grid, sample_coefficient_set
from .harness import StudyConfig, run_cell, run_study
from .krylov import ConvergenceError, SolveOptions
from .maxwell import PotentialSpec, asymmetry_check, maxwell_rate_study
from .report import ConfigError, ConvergenceReport, fit_order
from .smoothing import SteklovKernel, steklov_apply
from .torus import EpsScale, TrigSource, torus_rate_study

__version__ = "0.1.0"

__all__ = [
    "CellData",
    "CellHomogenizer",
    "CoefficientError",
    "CoefficientSet",
    "CoefficientSpec",
    "ConfigError",
    "ConvergenceError",
    "ConvergenceReport",
    "CubeSource",
    "DomainConfig",
    "EpsScale",
    "Grid",
    "GridError",
    "HomogenizationStudy",
    "PeriodicField",
    "PotentialSpec",
    "RateEstimator",
    "SolveOptions",
    "SteklovKernel",
    "StudyConfig",
    "TrigSource",
    "asymmetry_check",
    "build_grid",
    "domain_rate_study",
    "fit_order",
    "maxwell_rate_study",
    "run_cell",
    "run_study",
    "sample_coefficient_set",
    "shipped_presets",
    "solve_cell",
    "steklov_apply",
    "torus_rate_study",
]
