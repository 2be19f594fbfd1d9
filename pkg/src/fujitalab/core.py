"""Domain types and closed-form scalars shared by the rest of the package.

The problem studied everywhere is the Cauchy problem

    u_t = u_xx + [u^p]^+,   u(x, 0) = u0(x),   0 < p < 1,

with nonnegative, nontrivial, compactly supported initial data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a parameter or configuration value is invalid.

    ``key`` names the offending setting so callers can report it.
    """

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class InitialDatum:
    """Continuous piecewise-linear initial datum supported in [-1, 1].

    Parameters
    ----------
    knots : sequence of float
        Strictly increasing abscissae inside [-1, 1].
    values : sequence of float
        Nonnegative ordinates at the knots.  The first and last value must be
        zero so that the extension by zero outside [-1, 1] is continuous.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]
    supnorm: float = field(init=False)
    mass: float = field(init=False)

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        if len(knots) != len(values):
            raise ConfigError("datum", "knots and values differ in length")
        if len(knots) < 3:
            raise ConfigError("datum", "need at least three knots")
        if knots[0] < -1.0 or knots[-1] > 1.0:
            raise ConfigError("datum", "knots must lie in [-1, 1]")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ConfigError("datum", "knots must be strictly increasing")
        if any(not math.isfinite(v) or v < 0.0 for v in values):
            raise ConfigError("datum", "values must be finite and nonnegative")
        if values[0] != 0.0 or values[-1] != 0.0:
            raise ConfigError("datum", "endpoint values must be 0")
        if max(values) <= 0.0:
            raise ConfigError("datum", "datum must be nontrivial")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "supnorm", max(values))
        mass = sum(0.5 * (b - a) * (va + vb)
                   for a, b, va, vb in zip(knots, knots[1:], values, values[1:]))
        object.__setattr__(self, "mass", mass)

    def __call__(self, x):
        """Evaluate the datum (zero outside the outermost knots)."""
        return np.interp(x, self.knots, self.values, left=0.0, right=0.0)

    def panels(self):
        """Yield ``(a, b, intercept, slope)`` with u0(s) = intercept + slope*s on [a, b]."""
        for a, b, va, vb in zip(self.knots, self.knots[1:], self.values, self.values[1:]):
            slope = (vb - va) / (b - a)
            yield a, b, va - slope * a, slope

    @property
    def is_even(self) -> bool:
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        return bool(np.allclose(k, -k[::-1], rtol=0, atol=1e-15)
                    and np.allclose(v, v[::-1], rtol=0, atol=1e-15))


def make_tent_datum() -> InitialDatum:
    """The tent u0(x) = 1 - |x| on [-1, 1]; supnorm 1 and mass 1."""
    return InitialDatum(knots=(-1.0, 0.0, 1.0), values=(0.0, 1.0, 0.0))


@dataclass(frozen=True)
class ProblemParams:
    """Reaction exponent ``p`` (strictly sublinear) and a dimension ``N`` for the exponent tables."""

    p: float
    dim_for_exponent_tables: int = 1

    def __post_init__(self):
        p = float(self.p)
        if not math.isfinite(p) or not 0.0 < p < 1.0:
            raise ConfigError("p", f"exponent must satisfy 0 < p < 1, got {self.p!r}")
        if int(self.dim_for_exponent_tables) < 1:
            raise ConfigError("dim_for_exponent_tables", "must be a positive integer")
        object.__setattr__(self, "p", p)

    @property
    def q(self) -> float:
        """The power 1/(1-p) of the homogeneous flow."""
        return 1.0 / (1.0 - self.p)


class BoundaryMode(str, enum.Enum):
    HOMOGENEOUS_STATE = "homogeneous_state"
    SUBSOLUTION_TRACE = "subsolution_trace"


@dataclass(frozen=True)
class SimConfig:
    """Truncated-domain run configuration.

    The grid is ``nx`` uniform nodes on [-half_width, half_width]; ``nx`` is odd so
    that x = 0 is a node.  Every output time must be an integer multiple of ``dt``.
    """

    half_width: float
    nx: int
    t_end: float
    dt: float
    output_times: tuple[float, ...]
    boundary_mode: BoundaryMode = BoundaryMode.HOMOGENEOUS_STATE

    def __post_init__(self):
        if not self.half_width > 1.0:
            raise ConfigError("L", "half width must exceed 1")
        if int(self.nx) != self.nx or self.nx < 5 or self.nx % 2 == 0:
            raise ConfigError("nx", "grid-point count must be an odd integer >= 5")
        if not self.t_end > 0.0:
            raise ConfigError("t_end", "must be positive")
        if not self.dt > 0.0:
            raise ConfigError("dt", "must be positive")
        times = tuple(float(t) for t in self.output_times)
        if not times:
            raise ConfigError("output_times", "need at least one output time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("output_times", "must be strictly increasing")
        if times[0] <= 0.0 or times[-1] > self.t_end * (1 + 1e-12):
            raise ConfigError("output_times", "must lie in (0, t_end]")
        for t in times:
            k = round(t / self.dt)
            if abs(k * self.dt - t) > 1e-9 * max(1.0, t):
                raise ConfigError("output_times", f"{t} is not an integer multiple of dt={self.dt}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "output_times", times)
        object.__setattr__(self, "boundary_mode", BoundaryMode(self.boundary_mode))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.nx - 1)

    @property
    def grid(self) -> np.ndarray:
        # symmetric construction keeps x exactly odd about 0
        half = np.arange(self.nx // 2 + 1) * self.dx
        return np.concatenate([-half[:0:-1], half])

    @classmethod
    def from_spacing(cls, half_width: float, dx: float, **kwargs) -> "SimConfig":
        """Config with spacing exactly ``dx`` and half width rounded up to a multiple of ``4 dx``.

        Multiples of ``dx`` (such as integer datum knots when 1/dx is an
        integer) land on nodes, and ``nx - 1`` is divisible by 8 so the grid
        nests two coarsening levels that still have x = 0 as a node.
        """
        n_half = 4 * int(math.ceil(half_width / (4.0 * dx) - 1e-9))
        return cls(half_width=n_half * dx, nx=2 * n_half + 1, **kwargs)


@dataclass(frozen=True)
class SolutionFrame:
    """Field samples u(x_i, t) on the run grid at one time."""

    t: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("frame values must be one-dimensional")
        if np.any(vals < 0.0):
            raise ValueError(f"negative field value in frame at t={self.t}")
        object.__setattr__(self, "values", vals)


def u_h(t, p: float):
    """Spatially homogeneous state ((1-p) t)^(1/(1-p))."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("u_h is defined for t >= 0 only")
    out = ((1.0 - p) * t_arr) ** (1.0 / (1.0 - p))
    return float(out) if out.ndim == 0 else out


def critical_exponents(n: int) -> tuple[float, float]:
    """Transitional exponent N/(N+2) and Fujita blow-up exponent 1 + 2/N."""
    if int(n) != n or n < 1:
        raise ValueError("dimension must be a positive integer")
    return n / (n + 2), 1.0 + 2.0 / n


def rate_exponent(p: float) -> float:
    """Algebraic deviation rate (3p - 1) / (2 (1 - p))."""
    ProblemParams(p)
    return (3.0 * p - 1.0) / (2.0 * (1.0 - p))


def datum_from_lists(knots: Sequence[float], values: Sequence[float]) -> InitialDatum:
    return InitialDatum(knots=tuple(knots), values=tuple(values))
