"""Evaluators for the heat-kernel convolutions and the envelopes built from them.

Notation follows the code rather than any particular text:

* ``D(x, t)``     heat-kernel convolution of the datum,
* ``delta(s)``    the same at t = 1,
* ``excess(s)``   ((1-p) + delta^(1-p))^(1/(1-p)) - (1-p)^(1/(1-p)),
* ``W(x, t)``     solution of the linearised problem started from ``excess`` at t = 1,
* ``u_sub``, ``u_sup``, ``envelope_upper``  the lower/upper comparison fields,
* ``c_minus``, ``c_plus``  the rate coefficients.

D, its x-derivative and delta are computed panel by panel in closed form (the
datum is piecewise linear).  Each panel term is scaled by exp(z_c^2), where z_c
is the scaled distance from x to the datum support, so that the Gaussian tail
is carried in log form; this keeps ``excess`` accurate far outside the support
where delta underflows but delta^(1-p) does not.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .core import InitialDatum, ProblemParams, u_h
from .quadrature import KRONROD_WEIGHTS, GAUSS_WEIGHTS, NODES, QuadratureConfig, gauss_kronrod

T_SMALL = 1e-12          # below this D(x, t) is replaced by the datum itself
_SQRT_PI = math.sqrt(math.pi)
_MAX_FD_PROBES = 800


def _scaled_panel_sums(datum: InitialDatum, x: np.ndarray, t: np.ndarray):
    """Return ``(d_scaled, dx_scaled, zc2)`` with D = d_scaled*exp(-zc2), D_x = dx_scaled*exp(-zc2)."""
    rt = 2.0 * np.sqrt(t)
    lo_knot, hi_knot = datum.knots[0], datum.knots[-1]
    dist = np.maximum(0.0, np.maximum(lo_knot - x, x - hi_knot))
    zc2 = (dist / rt) ** 2
    d_sum = np.zeros(np.broadcast(x, t).shape)
    dx_sum = np.zeros_like(d_sum)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for a, b, alpha, beta in datum.panels():
            za = (a - x) / rt
            zb = (b - x) / rt
            ea = np.exp(zc2 - za * za)
            eb = np.exp(zc2 - zb * zb)
            left = zb <= 0.0           # panel entirely left of x
            right = za >= 0.0          # panel entirely right of x
            # erf(zb) - erf(za), scaled by exp(zc2), without cancellation in the tails
            d_left = special.erfcx(-zb) * eb - special.erfcx(-za) * ea
            d_right = special.erfcx(za) * ea - special.erfcx(zb) * eb
            d_mid = special.erf(zb) - special.erf(za)
            derf = np.where(left, d_left, np.where(right, d_right, d_mid))
            d_sum = d_sum + 0.5 * (alpha + beta * x) * derf - beta * np.sqrt(t / math.pi) * (eb - ea)
            dx_sum = dx_sum + 0.5 * beta * derf
    return d_sum, dx_sum, zc2


class KernelEvaluator:
    """Closed-form and quadrature evaluators for one datum and one exponent.

    Instances hold no mutable state other than memoisation of pure results, so
    they are safe to share between threads.
    """

    def __init__(self, datum: InitialDatum, params: ProblemParams,
                 quad: QuadratureConfig | None = None):
        self.datum = datum
        self.params = params
        self.quad = quad or QuadratureConfig()
        p = params.p
        self.p = p
        self.q = 1.0 / (1.0 - p)
        self._a_q = (1.0 - p) ** self.q
        self._k = 1.0 / (1.0 + datum.supnorm)
        self.excess_radius = self._excess_radius()
        self._panel_cache = lru_cache(maxsize=256)(self._uniform_panels)

    # -- heat-kernel convolution ---------------------------------------------------

    def D(self, x, t):
        """Heat-kernel convolution of the datum at (x, t), t > 0."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(t <= 0.0):
            raise ValueError("D requires t > 0; use the datum itself at t = 0")
        small = t < T_SMALL
        scaled, _, zc2 = _scaled_panel_sums(self.datum, x, np.where(small, 1.0, t))
        out = np.where(small, self.datum(x), scaled * np.exp(-zc2))
        return _scalar(out)

    def D_x(self, x, t):
        """x-derivative of ``D``: half the sum of panel slopes times erf differences."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(t <= 0.0):
            raise ValueError("D_x requires t > 0")
        _, scaled, zc2 = _scaled_panel_sums(self.datum, x, t)
        return _scalar(scaled * np.exp(-zc2))

    def D_quad(self, x, t):
        """``D`` by adaptive Gauss-Kronrod quadrature; independent of the closed form."""
        x_in = x
        x = np.atleast_1d(np.asarray(x, float))
        if t <= 0.0:
            raise ValueError("D_quad requires t > 0")
        norm = 1.0 / (2.0 * math.sqrt(math.pi * t))

        def f(s):
            return self.datum(s)[:, None] * np.exp(-(s[:, None] - x[None, :]) ** 2 / (4.0 * t))

        val, _ = gauss_kronrod(f, self.datum.knots[0], self.datum.knots[-1],
                               breakpoints=self.datum.knots, rel_tol=self.quad.rel_tol,
                               abs_tol=self.quad.abs_tol / norm,
                               max_subdivisions=self.quad.max_subdivisions)
        return _scalar(norm * np.asarray(val), like=x_in)

    def log_D(self, x, t):
        """Natural log of ``D``, finite far beyond the range where D itself underflows."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(t <= 0.0):
            raise ValueError("log_D requires t > 0")
        scaled, _, zc2 = _scaled_panel_sums(self.datum, x, t)
        with np.errstate(divide="ignore"):
            return _scalar(np.log(scaled) - zc2)

    def delta(self, s):
        """``D`` at t = 1."""
        return self.D(s, 1.0)

    def tail_bound(self, x, t):
        """Gaussian upper bound on D(x, t) valid for |x| >= 1."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(np.abs(x) < 1.0):
            raise ValueError("tail bound holds only for |x| >= 1")
        if np.any(t <= 0.0):
            raise ValueError("tail bound requires t > 0")
        out = self.datum.mass / (2.0 * np.sqrt(np.pi * t)) * np.exp(-(np.abs(x) - 1.0) ** 2 / (4.0 * t))
        return _scalar(out)

    # -- excess and its integral ---------------------------------------------------

    def excess_from_power(self, d):
        """((1-p) + d)^q - (1-p)^q for d = delta^(1-p), evaluated without cancellation."""
        d = np.asarray(d, float)
        return self._a_q * np.expm1(self.q * np.log1p(d / (1.0 - self.p)))

    def excess(self, s):
        """The W initial profile at t = 1; positive, Gaussian-power decay."""
        s = np.asarray(s, float)
        log_delta = self.log_D(s, 1.0)
        d = np.exp((1.0 - self.p) * log_delta)
        return _scalar(self.excess_from_power(d))

    def excess_bound(self) -> float:
        """Upper bound on ``excess`` from the datum's supnorm."""
        return float(self.excess_from_power(self.datum.supnorm ** (1.0 - self.p)))

    def _excess_radius(self) -> float:
        # smallest S with the tail-bound version of excess below abs_tol/100 outside [-S, S]
        eps = self.quad.abs_tol * 1e-2
        log_pref = math.log(self.datum.mass / (2.0 * _SQRT_PI))

        def bound(r):
            log_d = (1.0 - self.p) * (log_pref - (r - 1.0) ** 2 / 4.0)
            return float(self.excess_from_power(math.exp(log_d))) if log_d > -745 else 0.0

        lo, hi = 1.0, 2.0
        while bound(hi) > eps:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if bound(mid) > eps:
                lo = mid
            else:
                hi = mid
        return hi

    @property
    def excess_mass(self) -> float:
        """Integral of ``excess`` over the real line (memoised)."""
        if not hasattr(self, "_excess_mass"):
            r = self.excess_radius
            val, _ = gauss_kronrod(self.excess, -r, r, breakpoints=self.datum.knots,
                                   rel_tol=self.quad.rel_tol, abs_tol=self.quad.abs_tol,
                                   max_subdivisions=self.quad.max_subdivisions)
            self._excess_mass = float(val)
        return self._excess_mass

    # -- linearised solution -------------------------------------------------------

    def _uniform_panels(self, tau: float):
        """Uniform Kronrod panel rule on the excess support, fine enough for kernel width ``tau``.

        The panel width is halved until the Kronrod-Gauss difference meets the
        tolerance at a fixed set of probe points; the rule then serves every x,
        which keeps W(x, t) a smooth, batch-independent function of x.
        """
        r = self.excess_radius
        sigma = math.sqrt(2.0 * tau)
        probe_step = max(sigma / 2.0, 2.0 * r / _MAX_FD_PROBES)
        probes = np.arange(-r, r + probe_step, probe_step)
        n_panels = max(8, int(math.ceil(2.0 * r / min(0.5, sigma))))
        while True:
            edges = np.linspace(-r, r, n_panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            nodes = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
            wk = (half[:, None] * KRONROD_WEIGHTS[None, :]).ravel()
            wg = (half[:, None] * GAUSS_WEIGHTS[None, :]).ravel()
            fe = self.excess(nodes)
            kern = np.exp(-(nodes[:, None] - probes[None, :]) ** 2 / (4.0 * tau))
            integrand = fe[:, None] * kern
            jk = wk @ integrand
            # per-panel |K - G| summed: a conservative global estimate
            diff = ((wk - wg)[:, None] * integrand).reshape(n_panels, 15, -1).sum(axis=1)
            err = np.abs(diff).sum(axis=0)
            norm = 2.0 * math.sqrt(math.pi * tau)
            tol = np.maximum(self.quad.abs_tol * norm, self.quad.rel_tol * np.abs(jk))
            if np.all(err <= tol) or n_panels * 15 > 2_000_000:
                return nodes, wk * fe
            n_panels *= 2

    def _convolved_excess(self, x, t: float) -> np.ndarray:
        """Integral of excess(s) exp(-(s-x)^2/(4(t-1))) ds for each x."""
        x = np.atleast_1d(np.asarray(x, float))
        tau = t - 1.0
        sigma = math.sqrt(2.0 * tau)
        r = self.excess_radius
        if 2.0 * r / (sigma / 2.0) > _MAX_FD_PROBES:
            return self._convolved_excess_local(x, tau)
        nodes, weighted = self._panel_cache(float(tau))
        out = np.empty(x.shape)
        for start in range(0, x.size, 512):
            chunk = x[start:start + 512]
            kern = np.exp(-(nodes[:, None] - chunk[None, :]) ** 2 / (4.0 * tau))
            out[start:start + 512] = weighted @ kern
        return out

    def _convolved_excess_local(self, x: np.ndarray, tau: float) -> np.ndarray:
        # short times: adaptive quadrature over each x's own kernel window
        r = self.excess_radius
        w = self.quad.infinite_cutoff_sigma * math.sqrt(2.0 * tau)
        norm = 2.0 * math.sqrt(math.pi * tau)
        out = np.zeros(x.shape)
        for i, xi in enumerate(x):
            lo, hi = max(-r, xi - w), min(r, xi + w)
            if lo >= hi:
                continue

            def f(s, xi=xi):
                return self.excess(s) * np.exp(-(s - xi) ** 2 / (4.0 * tau))

            val, _ = gauss_kronrod(f, lo, hi, breakpoints=(xi,), rel_tol=self.quad.rel_tol,
                                   abs_tol=self.quad.abs_tol * norm, initial_panels=4,
                                   max_subdivisions=self.quad.max_subdivisions)
            out[i] = val
        return out

    def W(self, x, t: float):
        """Linearised solution about the homogeneous state, for t >= 1."""
        if t < 1.0:
            raise ValueError("W is defined for t >= 1")
        if t == 1.0:
            return self.excess(x)
        pref = t ** (self.p * self.q) / (2.0 * math.sqrt(math.pi * (t - 1.0)))
        return _scalar(pref * self._convolved_excess(x, t), like=x)

    # -- envelopes -----------------------------------------------------------------

    def _D_or_datum(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(t < 0.0):
            raise ValueError("t must be nonnegative")
        pos = t > 0.0
        d = np.where(pos, self.D(x, np.where(pos, t, 1.0)), self.datum(x))
        return d, t

    def u_sub(self, x, t):
        """Lower comparison field ((1-p)t + D/(1+||u0||))^(1/(1-p)), t >= 0."""
        d, t = self._D_or_datum(x, t)
        return _scalar(((1.0 - self.p) * t + self._k * d) ** self.q)

    def sub_excess(self, x, t):
        """u_sub - u_h computed without cancellation."""
        d, t = self._D_or_datum(x, t)
        a = (1.0 - self.p) * t
        with np.errstate(divide="ignore", invalid="ignore"):
            stable = a ** self.q * np.expm1(self.q * np.log1p(self._k * d / a))
        return _scalar(np.where(a > 0.0, stable, (self._k * d) ** self.q))

    def envelope_upper(self, x, t):
        """Upper envelope ((1-p)t + D^(1-p))^(1/(1-p)), t >= 0."""
        d, t = self._D_or_datum(x, t)
        return _scalar(((1.0 - self.p) * t + d ** (1.0 - self.p)) ** self.q)

    def u_sup(self, x, t: float):
        """Upper comparison field u_h(t) + W(x, t), t >= 1."""
        if t < 1.0:
            raise ValueError("u_sup is defined for t >= 1")
        return u_h(t, self.p) + self.W(x, t)

    # -- rate coefficients ---------------------------------------------------------

    def c_minus(self, x, t):
        """Lower rate coefficient; tends to (1+||u0||)^-1 * mass / (2 sqrt(pi (1-p)))."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if np.any(t <= 0.0):
            raise ValueError("c_minus requires t > 0")
        return _scalar(self._k * np.sqrt(t / (1.0 - self.p)) * self.D(x, t))

    def c_minus_limit(self) -> float:
        return self._k * self.datum.mass / (2.0 * math.sqrt(math.pi * (1.0 - self.p)))

    def c_plus(self, x, t: float):
        """Upper rate coefficient, t > 1."""
        if t <= 1.0:
            raise ValueError("c_plus requires t > 1")
        p = self.p
        pref = (1.0 - p) ** ((1.0 - 2.0 * p) / (1.0 - p)) / math.sqrt(2.0 * math.pi * (1.0 - p))
        return _scalar(pref * self._convolved_excess(x, t), like=x)

    def c_plus_limit(self) -> float:
        p = self.p
        return ((1.0 - p) ** ((1.0 - 2.0 * p) / (1.0 - p))
                * self.excess_mass / math.sqrt(2.0 * math.pi * (1.0 - p)))

    def cbar_constants(self, band: float = 1e-9) -> tuple[float, float]:
        """Bounds on the sup-deviation at the transitional exponent 1/3."""
        if abs(self.p - 1.0 / 3.0) > band:
            raise ValueError(f"cbar constants need p within {band} of 1/3, got {self.p}")
        ev = self if self.p == 1.0 / 3.0 else KernelEvaluator(self.datum, ProblemParams(1.0 / 3.0), self.quad)
        c_lo = ev._k * self.datum.mass / (2.0 * math.sqrt(2.0 * math.pi / 3.0))
        c_hi = ev.excess_mass / math.sqrt(2.0 * math.pi)
        return c_lo, c_hi


def _scalar(arr, like=None):
    arr = np.asarray(arr)
    if like is not None:
        return float(arr.reshape(-1)[0]) if np.ndim(like) == 0 else arr
    return float(arr) if arr.ndim == 0 else arr
