"""Ratio-maximization toolkit: the quadratic-transform family of
alternating solvers with applications to power control, transmit
beamforming, and energy efficiency."""

from .core import (
    AuxiliaryVector,
    Combiner,
    FeasibleSet,
    IterationTrace,
    OuterFunction,
    QtParams,
    RatioProblem,
    RatioTerm,
    dinkelbach_solve,
    fp_solve,
    qt_md_optimal_y,
    qt_md_value,
    qt_optimal_y,
    qt_value,
)
from .exceptions import BracketError, ConditioningError, ConfigError, DomainError
from .numerics import SolverOptions, make_rng

__all__ = [
    "AuxiliaryVector",
    "BracketError",
    "Combiner",
    "ConditioningError",
    "ConfigError",
    "DomainError",
    "FeasibleSet",
    "IterationTrace",
    "OuterFunction",
    "QtParams",
    "RatioProblem",
    "RatioTerm",
    "SolverOptions",
    "dinkelbach_solve",
    "fp_solve",
    "make_rng",
    "qt_md_optimal_y",
    "qt_md_value",
    "qt_optimal_y",
    "qt_value",
]

__version__ = "0.1.0"
