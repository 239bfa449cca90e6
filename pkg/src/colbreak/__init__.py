"""Sectional solver, stochastic oracle and validation suite for
collision-induced breakage kinetics."""

from .daughters import DaughterFamily, DaughterSpec
from .densities import InitialDensity, exponential_density, indicator_density
from .errors import ColbreakError, ConfigError, StiffnessError, UnsupportedOperation
from .kernels import KernelFamily, KernelSpec, Regime, classify_regime
from .oracle import MCConfig, MCStats, ParticleSystem, ensemble_stats
from .sectional import (GridSpec, OperatorSet, SolverConfig, StateVector, Trajectory,
                        assemble_operators, build_grid, project_initial, rhs, solve, step)
from .weights import WeightSpec, closed_form_theta, estimate_theta, resolve_theta

__version__ = "0.1.0"

__all__ = [
    "ColbreakError", "ConfigError", "StiffnessError", "UnsupportedOperation",
    "KernelFamily", "KernelSpec", "Regime", "classify_regime",
    "DaughterFamily", "DaughterSpec",
    "WeightSpec", "closed_form_theta", "estimate_theta", "resolve_theta",
    "InitialDensity", "exponential_density", "indicator_density",
    "GridSpec", "StateVector", "OperatorSet", "SolverConfig", "Trajectory",
    "build_grid", "project_initial", "assemble_operators", "rhs", "step", "solve",
    "ParticleSystem", "MCConfig", "MCStats", "ensemble_stats",
    "__version__",
]
