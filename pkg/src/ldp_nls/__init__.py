"""Large-deviation laboratory for the weakly nonlinear cubic Schroedinger equation on the torus."""

__version__ = "0.1.0"

from .dynamics import FlowParams, Sign, linear_evolve, resonant_evolve
from .errors import (
    BoundarySolutionError,
    ConfigError,
    ConsistencyError,
    DivergenceError,
    LdpNlsError,
    ParameterError,
    ValidationError,
)
from .ldp_core import cgf_curve, cgf_exact, cgf_limit, log_rayleigh_mgf, rate, rayleigh_mgf
from .montecarlo import TimeRule, error_bound_study, ldp_sweep, tail_naive, tail_tilted
from .solver import SolverConfig, solve, solve_reference
from .spectral_core import CoeffSeq, SpectralField, fl_norm, make_coeffs, mass, sample_initial_data, sup_norm

__all__ = [
    "__version__",
    "FlowParams",
    "Sign",
    "linear_evolve",
    "resonant_evolve",
    "BoundarySolutionError",
    "ConfigError",
    "ConsistencyError",
    "DivergenceError",
    "LdpNlsError",
    "ParameterError",
    "ValidationError",
    "cgf_curve",
    "cgf_exact",
    "cgf_limit",
    "log_rayleigh_mgf",
    "rate",
    "rayleigh_mgf",
    "TimeRule",
    "error_bound_study",
    "ldp_sweep",
    "tail_naive",
    "tail_tilted",
    "SolverConfig",
    "solve",
    "solve_reference",
    "CoeffSeq",
    "SpectralField",
    "fl_norm",
    "make_coeffs",
    "mass",
    "sample_initial_data",
    "sup_norm",
]
