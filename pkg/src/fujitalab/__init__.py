"""Numerical laboratory for u_t = u_xx + [u^p]^+ with sublinear exponent 0 < p < 1."""

from .core import (BoundaryMode, ConfigError, InitialDatum, ProblemParams, SimConfig, SolutionFrame,
                   critical_exponents, make_tent_datum, rate_exponent, u_h)
from .kernels import KernelEvaluator
from .quadrature import QuadratureConfig, gauss_kronrod
from .solver import RunResult, choose_domain, reaction_exact, run

__all__ = [
    "BoundaryMode", "ConfigError", "InitialDatum", "KernelEvaluator", "ProblemParams", "QuadratureConfig",
    "RunResult", "SimConfig", "SolutionFrame", "choose_domain", "critical_exponents", "gauss_kronrod",
    "make_tent_datum", "rate_exponent", "reaction_exact", "run", "u_h",
]
