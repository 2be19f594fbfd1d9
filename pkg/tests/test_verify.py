import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fujitalab import ProblemParams, SimConfig, choose_domain, make_tent_datum, u_h
from fujitalab.core import rate_exponent
from fujitalab.solver import RunResult, run
from fujitalab.core import SolutionFrame
from fujitalab.verify import (Regime, VerificationError, calibrate_slack, check_rate_bounds, check_sandwich,
                              classify_regime, fit_rate, inject_spike, residual_operator, residual_study,
                              run_verification, subsolution_residual_analytic, w_pde_residual)


# -- residual operator ---------------------------------------------------------------

def test_residual_of_homogeneous_state_vanishes():
    p = 0.4
    x = np.linspace(-2, 2, 5)
    res = residual_operator(lambda xs, t: np.full_like(xs, u_h(t, p)), x, [0.5, 2.0], p, hx=1e-2, ht=1e-2)
    assert np.max(np.abs(res)) < 1e-4


def test_residual_detects_non_solution(ev):
    k = ev(0.5)
    res = residual_operator(lambda xs, t: k.D(xs, t) + 5.0, [0.0, 1.0], [1.0], 0.5, hx=1e-2, ht=1e-2)
    assert np.all(res < -2.0)


def test_residual_stencil_domain(ev):
    with pytest.raises(VerificationError):
        residual_operator(ev(0.5).u_sup, [0.0], [1.0005], 0.5, t_min=1.0)


@pytest.mark.parametrize("p", [0.2, 1 / 3, 0.5, 0.7])
def test_subsolution_residual_sign(ev, p):
    k = ev(p)
    x = np.linspace(-5, 5, 50)
    t = np.linspace(0.1, 50, 50)
    res = subsolution_residual_analytic(k, x[None, :], t[:, None])
    assert res.shape == (50, 50)
    assert np.all(res <= 0.0)
    assert subsolution_residual_analytic(k, 0.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        subsolution_residual_analytic(k, 0.0, 0.0)


def test_subsolution_residual_collapses_at_one_half(ev):
    k = ev(0.5)
    x = np.linspace(-3, 3, 13)
    assert np.allclose(subsolution_residual_analytic(k, x, 1.7), -2 * 0.25 * k.D_x(x, 1.7) ** 2, rtol=1e-14)


@pytest.mark.parametrize("p", [0.2, 0.5])
def test_finite_difference_residual_matches_analytic(ev, p):
    k = ev(p)
    x = np.linspace(-3, 3, 13)
    t = np.array([0.5, 2.0, 10.0])
    exact = subsolution_residual_analytic(k, x[None, :], t[:, None])
    study = residual_study(k.u_sub, x, t, p, 0.04, exact=exact)
    assert 3.5 <= study.ratio <= 4.5
    assert study.eps_fd[1] < 1e-3


def test_w_pde_residual_second_order(ev):
    k = ev(0.5)
    x = np.linspace(-4, 4, 9)
    t = [1.5, 4.0, 20.0]
    r1 = np.max(np.abs(w_pde_residual(k, x, t, 0.1)))
    r2 = np.max(np.abs(w_pde_residual(k, x, t, 0.05)))
    assert 3.5 <= r1 / r2 <= 4.5
    with pytest.raises(VerificationError):
        w_pde_residual(k, x, [1.05], 0.1)


# -- sandwich and rate bounds -----------------------------------------------------------

@pytest.fixture(scope="module")
def small_run():
    params = ProblemParams(0.5)
    L = choose_domain(8.0, 1e-12)
    cfg = SimConfig.from_spacing(L, 0.05, t_end=8.0, dt=0.01, output_times=(0.2, 0.8, 2.0, 4.0, 8.0))
    return run(make_tent_datum(), params, cfg)


def test_sandwich_passes_with_calibrated_slack(ev, small_run):
    slack, ratio, fine = calibrate_slack(small_run.datum, small_run.params, small_run.config, fine=small_run)
    assert fine is small_run
    assert 3.0 <= ratio <= 5.0
    times = np.array(small_run.config.output_times)
    late = times >= 1.0
    assert np.all(slack[late] <= 1e-3 * u_h(times[late], 0.5))
    rep = check_sandwich(small_run, ev(0.5), slack=slack)
    assert rep.passed, rep.worst
    # t < 1 frames carry only the two bounds that hold from t = 0
    assert rep.margins["subsolution"][0] is None and rep.margins["subsolution"][2] is not None
    assert set(rep.worst) == {"homogeneous_lower", "homogeneous_upper", "envelope_upper",
                              "subsolution", "supersolution"}


def test_sandwich_detects_spike(ev, small_run):
    rep = check_sandwich(inject_spike(small_run), ev(0.5), slack=1e-4)
    assert not rep.passed
    assert rep.worst["supersolution"] > 0.0


def test_sandwich_rejects_mismatched_evaluator(ev, small_run):
    with pytest.raises(VerificationError):
        check_sandwich(small_run, ev(0.2))


def _exact_result(ev, p, field, times):
    """A RunResult whose frames are an analytic field sampled on a grid."""
    cfg = SimConfig(half_width=10.0, nx=201, t_end=max(times), dt=0.01, output_times=times)
    frames = [SolutionFrame(t, np.asarray(field(cfg.grid, t))) for t in times]
    return RunResult(cfg.grid, frames, [], {}, ProblemParams(p), make_tent_datum(), cfg)


@pytest.mark.parametrize("p", [0.2, 1 / 3, 0.5])
def test_rate_bounds_exact_on_analytic_envelopes(ev, p):
    k = ev(p)
    times = (2.0, 5.0, 20.0, 100.0)
    rb = check_rate_bounds(_exact_result(k, p, k.u_sup, times), k)
    assert rb.passed
    lower = rb.lower_margin
    rb = check_rate_bounds(_exact_result(k, p, k.u_sub, times), k)
    assert min(rb.lower_margin) >= -16 * np.finfo(float).eps * u_h(100.0, p)
    assert len(lower) == 4


def test_rate_bounds_need_late_times(ev):
    k = ev(0.5)
    with pytest.raises(VerificationError):
        check_rate_bounds(_exact_result(k, 0.5, k.u_sub, (0.5, 1.0)), k)


# -- rate fitting --------------------------------------------------------------------

def test_fit_exact_power_law():
    t = np.geomspace(1, 100, 20)
    fit = fit_rate(list(zip(t, 3 * t ** -0.25)), (1, 100), p=0.2)
    assert fit.slope == pytest.approx(-0.25, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.predicted_slope == pytest.approx(rate_exponent(0.2))
    assert fit.n_points == 20


@settings(max_examples=50, deadline=None)
@given(amp=st.floats(1e-3, 1e3), slope=st.floats(-3, 3))
def test_fit_recovers_random_power_laws(amp, slope):
    t = np.geomspace(2, 500, 12)
    fit = fit_rate(np.column_stack([t, amp * t ** slope]), (2, 500))
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert math.isnan(fit.predicted_slope)


def test_fit_rejects_bad_input():
    t = np.geomspace(1, 100, 20)
    with pytest.raises(VerificationError):
        fit_rate(list(zip(t, t)), (0.5, 100))
    with pytest.raises(VerificationError):
        fit_rate(list(zip(t[:5], t[:5])), (1, 100))
    with pytest.raises(VerificationError):
        fit_rate(list(zip(t, -t)), (1, 100))


# -- regimes -------------------------------------------------------------------------

def test_classify_regime_examples():
    assert classify_regime(0.2).regime is Regime.ASYMPTOTICALLY_STABLE
    assert classify_regime(0.5).regime is Regime.UNSTABLE
    assert classify_regime(1 / 3).regime is Regime.LIAPUNOV_STABLE
    assert classify_regime(1 / 3 + 5e-10).regime is Regime.LIAPUNOV_STABLE
    assert classify_regime(1 / 3 + 2e-9).regime is Regime.UNSTABLE
    with pytest.raises(ValueError):
        classify_regime(0.3, band=0.2)


@settings(max_examples=200, deadline=None)
@given(p=st.floats(1e-6, 1 - 1e-6), band=st.floats(1e-12, 0.16))
def test_classify_regime_partitions(p, band):
    r = classify_regime(p, band).regime
    expected = (Regime.ASYMPTOTICALLY_STABLE if p < 1 / 3 - band else
                Regime.UNSTABLE if p > 1 / 3 + band else Regime.LIAPUNOV_STABLE)
    assert r is expected
    assert classify_regime(p, band) == classify_regime(p, band)


# -- full report ---------------------------------------------------------------------

def test_run_verification_report():
    params = ProblemParams(0.2)
    L = choose_domain(4.0, 1e-12)
    cfg = SimConfig.from_spacing(L, 0.05, t_end=4.0, dt=0.01, output_times=(1.0, 2.0, 4.0))
    report, result = run_verification(make_tent_datum(), params, cfg)
    assert report.passed, [r for r in report.records if not r.passed]
    payload = json.loads(report.to_json())
    assert payload["passed"] is True
    names = {c["check"] for c in payload["checks"]}
    assert {"discretisation_slack", "rate_bounds", "subsolution_residual_sign",
            "supersolution_residual_sign", "regime_asymptotically_stable"} <= names
    for c in payload["checks"]:
        assert set(c) == {"check", "lattice", "worst_margin", "passed", "slack", "tolerances"}
    spiked, _ = run_verification(make_tent_datum(), params, cfg, spike=True)
    assert not spiked.passed
