"""Checks of the comparison inequalities, residual signs and asymptotic rates."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .core import ProblemParams, SimConfig, rate_exponent, u_h
from .kernels import KernelEvaluator
from .solver import RunResult, run

EPS = np.finfo(float).eps
ROUNDING_ULPS = 16


class VerificationError(ValueError):
    pass


# -- residuals ---------------------------------------------------------------------

def residual_operator(field, x, t, p: float, hx: float = 1e-3, ht: float = 1e-3,
                      t_min: float = 0.0) -> np.ndarray:
    """Central-difference estimate of psi_t - psi_xx - [psi^p]^+.

    ``field(x, t)`` must accept an array ``x`` and a scalar ``t``.  Returns an
    array of shape ``(len(t), len(x))``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    t = np.atleast_1d(np.asarray(t, float))
    if np.any(t - ht < t_min):
        raise VerificationError(f"stencil leaves the evaluable region t >= {t_min}")
    out = np.empty((t.size, x.size))
    xs = np.concatenate([x - hx, x, x + hx])
    for i, ti in enumerate(t):
        left, mid, right = np.split(np.asarray(field(xs, ti), float), 3)
        later = np.asarray(field(x, ti + ht), float)
        earlier = np.asarray(field(x, ti - ht), float)
        psi_t = (later - earlier) / (2.0 * ht)
        psi_xx = (left - 2.0 * mid + right) / (hx * hx)
        out[i] = psi_t - psi_xx - np.maximum(mid, 0.0) ** p
    return out


def subsolution_residual_analytic(ev: KernelEvaluator, x, t):
    """Closed-form residual of u_sub; never positive."""
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    if np.any(t <= 0.0):
        raise ValueError("residual is defined for t > 0")
    p, k = ev.p, 1.0 / (1.0 + ev.datum.supnorm)
    phi = (1.0 - p) * t + k * ev.D(x, t)
    out = -p / (1.0 - p) ** 2 * k * k * ev.D_x(x, t) ** 2 * phi ** ((2.0 * p - 1.0) / (1.0 - p))
    return float(out) if out.ndim == 0 else out


@dataclass
class ResidualStudy:
    """Residual of a field at three stencil levels h, h/2, h/4 on a fixed lattice."""

    steps: tuple[float, float, float]
    residuals: list[np.ndarray]
    eps_fd: tuple[float, float]        # Richardson error estimates for h and h/2
    ratio: float
    min_residual: float

    @property
    def sign_ok(self) -> bool:
        """True when the h/2 residual is nowhere below minus its error estimate."""
        return bool(np.all(self.residuals[1] >= -self.eps_fd[1]))


def residual_study(field, x, t, p: float, h: float, t_min: float = 0.0,
                   exact=None) -> ResidualStudy:
    """Evaluate the finite-difference residual at steps h, h/2, h/4.

    The error of the step-h residual is estimated as 4/3 |N_h - N_{h/2}|
    (or |N_h - exact| when the exact residual is supplied); the ratio of the
    estimates for h and h/2 should approach 4 for a second-order stencil.
    """
    hs = (h, h / 2.0, h / 4.0)
    res = [residual_operator(field, x, t, p, hx=s, ht=s, t_min=t_min) for s in hs]
    if exact is None:
        e1 = 4.0 / 3.0 * float(np.max(np.abs(res[0] - res[1])))
        e2 = 4.0 / 3.0 * float(np.max(np.abs(res[1] - res[2])))
    else:
        e1 = float(np.max(np.abs(res[0] - exact)))
        e2 = float(np.max(np.abs(res[1] - exact)))
    ratio = e1 / e2 if e2 > 0 else math.inf
    return ResidualStudy(hs, res, (e1, e2), ratio, float(np.min(res[1])))


def w_pde_residual(ev: KernelEvaluator, x, t, h: float) -> np.ndarray:
    """Central-difference residual of W_t - W_xx - p/((1-p)t) W (W solves this exactly)."""
    x = np.atleast_1d(np.asarray(x, float))
    out = np.empty((len(t), x.size))
    coef = ev.p / (1.0 - ev.p)
    for i, ti in enumerate(t):
        if ti - h < 1.0:
            raise VerificationError("stencil reaches below t = 1")
        left, mid, right = np.split(ev.W(np.concatenate([x - h, x, x + h]), ti), 3)
        w_t = (ev.W(x, ti + h) - ev.W(x, ti - h)) / (2.0 * h)
        w_xx = (left - 2.0 * mid + right) / (h * h)
        out[i] = w_t - w_xx - coef / ti * mid
    return out


# -- sandwich ------------------------------------------------------------------------

@dataclass
class SandwichReport:
    """Signed violations (positive = inequality broken) per check, per output time.

    ``worst`` maps each check to its largest violation *after* subtracting the
    allowance; the report passes iff every value is <= 0.
    """

    times: list[float]
    margins: dict[str, list[np.ndarray]]
    allowance: list[float]
    worst: dict[str, float]
    slack: float
    relative: bool

    @property
    def passed(self) -> bool:
        return all(v <= 0.0 for v in self.worst.values())

    @property
    def worst_violation(self) -> float:
        return max(self.worst.values())


def _rounding_guard(values: np.ndarray, t: float, p: float) -> float:
    return ROUNDING_ULPS * EPS * max(float(np.max(np.abs(values))), u_h(t, p), 1.0)


def _allowance(slack, t: float, p: float, relative: bool, index: int) -> float:
    s = slack[index] if np.ndim(slack) else slack
    return float(s) * (u_h(t, p) if relative else 1.0)


def check_sandwich(result: RunResult, ev: KernelEvaluator, slack=0.0, relative: bool = False) -> SandwichReport:
    """Evaluate the two-sided homogeneous-state bound, the upper envelope and the
    sub/supersolution ordering at every grid node and output time.

    ``slack`` is a scalar or one value per output time; with ``relative=True``
    it is multiplied by u_h(t).  A few ulps of the field magnitude are always
    allowed on top, since far from the datum u and u_h agree to rounding.
    """
    if ev.datum != result.datum or ev.p != result.params.p:
        raise VerificationError("result and evaluator disagree on datum or exponent")
    p, x = ev.p, result.grid
    sup0 = ev.datum.supnorm
    margins = {k: [] for k in ("homogeneous_lower", "homogeneous_upper", "envelope_upper",
                               "subsolution", "supersolution")}
    worst = {k: -math.inf for k in margins}
    allowance, times = [], []
    for j, fr in enumerate(result.frames):
        t, u = fr.t, fr.values
        allow = _allowance(slack, t, p, relative, j) + _rounding_guard(u, t, p)
        allowance.append(allow)
        times.append(t)
        checks = {
            "homogeneous_lower": u_h(t, p) - u,
            "homogeneous_upper": u - (sup0 ** (1.0 - p) + (1.0 - p) * t) ** (1.0 / (1.0 - p)),
            "envelope_upper": u - ev.envelope_upper(x, t),
        }
        if t >= 1.0:
            checks["subsolution"] = ev.u_sub(x, t) - u
            checks["supersolution"] = u - ev.u_sup(x, t)
        for name in margins:
            if name in checks:
                margins[name].append(checks[name])
                worst[name] = max(worst[name], float(np.max(checks[name])) - allow)
            else:
                margins[name].append(None)
    worst = {k: v for k, v in worst.items() if v != -math.inf}
    return SandwichReport(times, margins, allowance, worst, slack if np.ndim(slack) == 0 else float(np.max(slack)),
                          relative)


def calibrate_slack(datum, params: ProblemParams, config: SimConfig, *, safety: float = 2.0,
                    domain_tol: float = 1e-12, fine: RunResult | None = None):
    """Discretisation slack C (dx^2 + dt^2) per output time from a three-level study.

    Runs at (dx, dt), (2dx, 2dt) and (4dx, 4dt) on nested grids.  Returns
    ``(slack, ratio, fine_result)`` where ``slack[j]`` is ``safety`` times the
    Richardson estimate of the fine-level error at output time j and ``ratio``
    is the observed error reduction between the two coarser pairs.
    """
    for t in config.output_times:
        k = t / (4.0 * config.dt)
        if abs(k - round(k)) > 1e-9:
            raise VerificationError(f"output time {t} is not a multiple of 4*dt; cannot calibrate slack")
    if (config.nx - 1) % 8:
        raise VerificationError("nx - 1 must be divisible by 8 for nested refinement")
    results = [fine or run(datum, params, config, domain_tol=domain_tol)]
    for m in (2, 4):
        cfg = SimConfig(half_width=config.half_width, nx=(config.nx - 1) // m + 1, t_end=config.t_end,
                        dt=config.dt * m, output_times=config.output_times,
                        boundary_mode=config.boundary_mode)
        results.append(run(datum, params, cfg, domain_tol=domain_tol))
    slack, ratios = [], []
    for j in range(len(config.output_times)):
        f, c, cc = (r.frames[j].values for r in results)
        d1 = np.max(np.abs(c - f[::2]))
        d2 = np.max(np.abs(cc - c[::2]))
        slack.append(safety * d1 / 3.0)
        if d1 > 0:
            ratios.append(d2 / d1)
    return np.array(slack), (float(np.median(ratios)) if ratios else math.nan), results[0]


# -- rate bounds ---------------------------------------------------------------------

@dataclass
class RateBoundReport:
    times: list[float]
    lower_margin: list[float]      # min over nodes of (u - u_h) - c_minus * rate factor
    upper_margin: list[float]      # min over nodes of c_plus * rate factor - (u - u_h)
    slack: float
    passed: bool


def check_rate_bounds(result: RunResult, ev: KernelEvaluator, slack: float = 0.0) -> RateBoundReport:
    """Check c_minus * ((1-p)t)^r - slack <= u - u_h <= c_plus * ((1-p)t)^r + slack for t >= 2."""
    p, x = ev.p, result.grid
    r = rate_exponent(p)
    times, lo, hi = [], [], []
    ok = True
    for fr in result.frames:
        t = fr.t
        if t < 2.0:
            continue
        dev = fr.values - u_h(t, p)
        factor = ((1.0 - p) * t) ** r
        guard = _rounding_guard(fr.values, t, p)
        m_lo = float(np.min(dev - ev.c_minus(x, t) * factor))
        m_hi = float(np.min(ev.c_plus(x, t) * factor - dev))
        ok &= m_lo >= -slack - guard and m_hi >= -slack - guard
        times.append(t)
        lo.append(m_lo)
        hi.append(m_hi)
    if not times:
        raise VerificationError("rate bounds need at least one output time >= 2")
    return RateBoundReport(times, lo, hi, slack, bool(ok))


# -- rates and regimes -----------------------------------------------------------------

@dataclass
class RateFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    n_points: int

    @property
    def slope_error(self) -> float:
        return self.slope - self.predicted_slope


def fit_rate(series, window, p: float | None = None) -> RateFit:
    """Least-squares slope of ln(sup-deviation) against ln(t) inside ``window``.

    ``series`` is a sequence of ``(t, deviation)`` pairs.  ``predicted_slope``
    is filled from ``p`` when given, else NaN.
    """
    t_lo, t_hi = window
    if t_lo < 1.0:
        raise VerificationError("rate window must start at t >= 1")
    arr = np.asarray(series, float)
    sel = arr[(arr[:, 0] >= t_lo * (1 - 1e-12)) & (arr[:, 0] <= t_hi * (1 + 1e-12))]
    if len(sel) < 8:
        raise VerificationError(f"need at least 8 samples in window, got {len(sel)}")
    if np.any(sel[:, 1] <= 0.0):
        raise VerificationError("nonpositive deviation in window: lower bound violated upstream")
    fit = stats.linregress(np.log(sel[:, 0]), np.log(sel[:, 1]))
    predicted = rate_exponent(p) if p is not None else math.nan
    return RateFit((t_lo, t_hi), float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                   predicted, len(sel))


class Regime(str, enum.Enum):
    ASYMPTOTICALLY_STABLE = "asymptotically_stable"
    LIAPUNOV_STABLE = "liapunov_stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    p: float
    band_tolerance: float


def classify_regime(p: float, band: float = 1e-9) -> RegimeClassification:
    """Stability of the homogeneous state: decaying, bounded or growing deviation."""
    ProblemParams(p)
    if not 0.0 < band < 1.0 / 6.0:
        raise ValueError("band must lie in (0, 1/6)")
    if p < 1.0 / 3.0 - band:
        regime = Regime.ASYMPTOTICALLY_STABLE
    elif p > 1.0 / 3.0 + band:
        regime = Regime.UNSTABLE
    else:
        regime = Regime.LIAPUNOV_STABLE
    return RegimeClassification(regime, p, band)


# -- report ------------------------------------------------------------------------------

@dataclass
class CheckRecord:
    check: str
    lattice: str
    worst_margin: float
    passed: bool
    slack: float
    tolerances: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    records: list[CheckRecord] = field(default_factory=list)

    def add(self, *args, **kwargs) -> CheckRecord:
        rec = CheckRecord(*args, **kwargs)
        self.records.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v
        payload = {"passed": self.passed,
                   "checks": [{k: clean(v) for k, v in asdict(r).items()} for r in self.records]}
        return json.dumps(payload, indent=2, default=float)


def inject_spike(result: RunResult, fraction: float = 0.1) -> RunResult:
    """Copy of ``result`` with the central node of every frame raised by ``fraction``."""
    from .core import SolutionFrame

    mid = result.grid.size // 2
    frames = []
    for fr in result.frames:
        vals = fr.values.copy()
        vals[mid] *= 1.0 + fraction
        frames.append(SolutionFrame(fr.t, vals))
    return RunResult(result.grid, frames, result.deviation, result.diagnostics, result.params,
                     result.datum, result.config)


def run_verification(datum, params: ProblemParams, config: SimConfig, *, domain_tol: float = 1e-12,
                     spike: bool = False, fd_step: float = 0.04) -> tuple[VerificationReport, RunResult]:
    """Solve, calibrate the slack, and run every inequality and residual check."""
    ev = KernelEvaluator(datum, params)
    report = VerificationReport()
    slack, ratio, result = calibrate_slack(datum, params, config, domain_tol=domain_tol)
    if spike:
        result = inject_spike(result)
    uh = np.array([u_h(t, params.p) for t in config.output_times])
    report.add("discretisation_slack", f"{config.nx} nodes x {len(uh)} output times",
               float(np.max(slack / np.maximum(uh, 1e-300))), bool(np.all(slack <= 1e-3 * uh)),
               float(np.max(slack)), {"max_relative_to_u_h": 1e-3, "refinement_ratio": ratio})
    sw = check_sandwich(result, ev, slack=slack)
    for name, worst in sw.worst.items():
        report.add(f"sandwich_{name}", f"{config.nx} nodes x {len(sw.times)} output times",
                   worst, worst <= 0.0, float(np.max(slack)), {"rounding_ulps": ROUNDING_ULPS})
    if any(t >= 2.0 for t in config.output_times):
        late = [s for s, t in zip(slack, config.output_times) if t >= 2.0]
        rb = check_rate_bounds(result, ev, slack=float(max(late)))
        report.add("rate_bounds", f"{config.nx} nodes x {len(rb.times)} output times >= 2",
                   min(min(rb.lower_margin), min(rb.upper_margin)), rb.passed, rb.slack)
    xs = np.linspace(-5.0, 5.0, 50)
    ts = np.linspace(0.1, 50.0, 50)
    sub = subsolution_residual_analytic(ev, xs[None, :], ts[:, None])
    report.add("subsolution_residual_sign", "50 x 50, x in [-5,5], t in [0.1,50]", float(np.max(sub)),
               bool(np.all(sub <= 0.0)), 0.0)
    study = residual_study(ev.u_sup, np.linspace(-5.0, 5.0, 21), np.linspace(1.5, 50.0, 12), params.p,
                           fd_step, t_min=1.0)
    report.add("supersolution_residual_sign", "21 x 12, x in [-5,5], t in [1.5,50]", study.min_residual,
               study.sign_ok and 3.5 <= study.ratio <= 4.5, study.eps_fd[1],
               {"steps": list(study.steps), "eps_ratio": study.ratio})
    regime = classify_regime(params.p)
    report.add(f"regime_{regime.regime.value}", "p", params.p - 1.0 / 3.0, True, 0.0, {"band": regime.band_tolerance})
    return report, result
