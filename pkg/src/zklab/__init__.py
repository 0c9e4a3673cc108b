"""Numerical laboratory for the linear and nonlinear Zakharov-Kuznetsov flow in the plane."""

__version__ = "0.1.0"

from .errors import (
    DomainOverflowError,
    FormatError,
    InstabilityError,
    InvalidInputError,
    NoContractionError,
    PreconditionError,
    QuadratureError,
    ResolutionError,
    TruncationError,
    UnsupportedOrderError,
    ZKLabError,
)
from .spectral import Field2D, Grid2D, Spectrum2D, fractional_derivative, inverse_transform, transform
from .propagator import OscillatoryIntegralSpec, free_evolve, oscillatory_integral
from .norms import AbsoluteSum, Polynomial, Trajectory, Truncated, sobolev_norm, triple_norm, weighted_l2_norm
from .stein import SteinQuadratureConfig, stein_derivative
from .solver import SimulationConfig, evolve, picard_solve, symmetrize_map, weighted_energy_audit
from .snapshot import emit_trace, load_snapshot, save_snapshot
from .harness import EstimateReport, ExperimentSpec, run_experiment

__all__ = [
    "AbsoluteSum",
    "DomainOverflowError",
    "EstimateReport",
    "ExperimentSpec",
    "Field2D",
    "FormatError",
    "Grid2D",
    "InstabilityError",
    "InvalidInputError",
    "NoContractionError",
    "OscillatoryIntegralSpec",
    "Polynomial",
    "PreconditionError",
    "QuadratureError",
    "ResolutionError",
    "SimulationConfig",
    "Spectrum2D",
    "SteinQuadratureConfig",
    "Trajectory",
    "Truncated",
    "TruncationError",
    "UnsupportedOrderError",
    "ZKLabError",
    "emit_trace",
    "evolve",
    "fractional_derivative",
    "free_evolve",
    "inverse_transform",
    "load_snapshot",
    "oscillatory_integral",
    "picard_solve",
    "run_experiment",
    "save_snapshot",
    "sobolev_norm",
    "stein_derivative",
    "symmetrize_map",
    "transform",
    "triple_norm",
    "weighted_energy_audit",
    "weighted_l2_norm",
]
