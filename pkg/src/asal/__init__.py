"""Adaptive-sampling augmented Lagrangian method for stochastic optimization
with affine equality constraints over simple convex sets."""
from .core import (AffineConstraint, ConfigurationError, ContractViolation, NumericalError,
                   PrimalDualState, UnsupportedOperation, constraint_value, feasibility_error)
from .adaptive import SamplerConfig, ToleranceSchedule, next_sample_size, relative_variance, tolerance_test
from .projections import Box, CappedBox, Product, Slab, WholeSpace, project
from .solver import SolverConfig, SolverTrace, run_asal, run_fixed_baseline

__version__ = "0.1.0"

__all__ = [
    "AffineConstraint", "ConfigurationError", "ContractViolation", "NumericalError", "PrimalDualState",
    "UnsupportedOperation", "constraint_value", "feasibility_error", "SamplerConfig", "ToleranceSchedule",
    "next_sample_size", "relative_variance", "tolerance_test", "Box", "CappedBox", "Product", "Slab",
    "WholeSpace", "project", "SolverConfig", "SolverTrace", "run_asal", "run_fixed_baseline",
]
