import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from fujitalab import KernelEvaluator, ProblemParams, choose_domain, make_tent_datum, u_h
from fujitalab.core import datum_from_lists
from fujitalab.quadrature import gauss_kronrod

P_VALUES = (0.2, 1 / 3, 0.5, 0.7)


# -- heat convolution ----------------------------------------------------------------

def test_golden_heat_convolution(ev, golden):
    for (name, x, t), (value, tol) in golden.items():
        if name == "D":
            assert abs(ev(0.5).D(x, t) - value) <= tol
            assert abs(ev(0.5).D_quad(x, t) - value) <= tol


def test_heat_convolution_closed_form_at_origin(ev):
    expected = erf(0.5) - 2.0 / math.sqrt(math.pi) * (1.0 - math.exp(-0.25))
    assert ev(0.5).D(0.0, 1.0) == pytest.approx(expected, rel=1e-14)


def test_closed_form_matches_quadrature():
    d = datum_from_lists([-1, -0.3, 0.2, 0.6, 1], [0, 0.7, 0.4, 1.3, 0])
    k = KernelEvaluator(d, ProblemParams(0.4))
    x = np.linspace(-6, 6, 37)
    for t in (1e-3, 0.05, 0.7, 3.0, 40.0):
        assert np.allclose(k.D(x, t), k.D_quad(x, t), rtol=1e-11, atol=1e-15)


def test_heat_convolution_small_time(ev):
    k = ev(0.5)
    assert k.D(0.0, 1e-13) == 1.0
    assert k.D(0.0, 1e-6) == pytest.approx(1.0, abs=2e-3)
    assert k.D(0.5, 1e-8) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        k.D(0.0, 0.0)
    with pytest.raises(ValueError):
        k.D(0.0, -1.0)


def test_heat_convolution_broadcasts(ev):
    k = ev(0.5)
    x = np.linspace(-3, 3, 5)
    t = np.array([[0.5], [2.0]])
    out = k.D(x[None, :], t)
    assert out.shape == (2, 5)
    assert out[1, 2] == k.D(0.0, 2.0)
    assert isinstance(k.D(0.0, 1.0), float)


def test_derivative(ev):
    k = ev(0.5)
    assert k.D_x(0.0, 0.9) == 0.0
    errs = []
    for h in (1e-3, 1e-4, 1e-5):
        fd = (k.D(0.3 + h, 0.7) - k.D(0.3 - h, 0.7)) / (2 * h)
        errs.append(abs(fd - k.D_x(0.3, 0.7)))
    assert errs[0] < 1e-7
    assert errs[1] < errs[0] / 50
    assert abs(k.D_x(80.0, 1.0)) < 1e-300 or k.D_x(80.0, 1.0) == 0.0


def test_mass_bound_and_positivity(ev):
    k = ev(0.5)
    x = np.linspace(-20, 20, 201)
    for t in (0.01, 0.3, 1.0, 10.0, 100.0):
        d = k.D(x, t)
        # strict positivity wherever the value is representable in double precision
        visible = k.log_D(x, t) > -700.0
        assert np.all(d[visible] > 0.0) and np.all(d >= 0.0)
        assert np.all(d < 1.0 / (2 * math.sqrt(math.pi * t)))


def test_log_heat_convolution(ev):
    k = ev(0.5)
    x = np.linspace(-6, 6, 25)
    assert np.allclose(k.log_D(x, 0.8), np.log(k.D(x, 0.8)), rtol=0, atol=1e-13)
    # far tail: D underflows but its logarithm stays finite and below the tail bound
    far = k.log_D(50.0, 0.1)
    assert k.D(50.0, 0.1) == 0.0
    assert far == pytest.approx(-6013.616985821142, abs=1e-9)
    assert far <= -math.log(2 * math.sqrt(math.pi * 0.1)) - 49.0 ** 2 / 0.4


def test_tail_bound(ev):
    k = ev(0.5)
    assert k.tail_bound(3.0, 1.0) == pytest.approx(math.exp(-1.0) / (2 * math.sqrt(math.pi)), rel=1e-15)
    assert k.tail_bound(1e3, 1.0) == 0.0
    with pytest.raises(ValueError):
        k.tail_bound(0.5, 1.0)


def test_delta_is_heat_convolution_at_one(ev, golden):
    k = ev(0.5)
    s = np.linspace(-30, 30, 241)
    assert np.array_equal(k.delta(s), k.D(s, 1.0))
    for (name, x, _), (value, tol) in golden.items():
        if name == "delta":
            assert abs(k.delta(x) - value) <= tol


# -- excess and its integral -------------------------------------------------------

def test_excess_worked_example():
    k = KernelEvaluator(make_tent_datum(), ProblemParams(0.5))
    expected = (0.5 + 0.5 ** 0.5) ** 2 - 0.25
    assert float(k.excess_from_power(0.5 ** 0.5)) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.20711, abs=1e-5)


@pytest.mark.parametrize("p", P_VALUES)
def test_excess_matches_composition(ev, p):
    k = ev(p)
    rng = np.random.default_rng(7)
    s = rng.uniform(-8, 8, 100)
    brute = ((1 - p) + k.delta(s) ** (1 - p)) ** (1 / (1 - p)) - (1 - p) ** (1 / (1 - p))
    assert np.allclose(k.excess(s), brute, rtol=0, atol=1e-14)
    e = k.excess(np.linspace(-60, 60, 481))
    assert np.all(e > 0.0)
    assert np.all(e <= k.excess_bound())


@pytest.mark.parametrize("p", P_VALUES)
def test_excess_mass_golden(ev, golden, p):
    value, tol = golden[(f"I_p{p:.6f}", None, None)]
    assert abs(ev(p).excess_mass - value) <= tol


def test_excess_mass_truncation_converged(ev):
    k = ev(1 / 3)
    r = k.excess_radius
    wide, _ = gauss_kronrod(k.excess, -2 * r, 2 * r, breakpoints=(-r, -1, 0, 1, r))
    inner, _ = gauss_kronrod(k.excess, -1, 1, breakpoints=(0,))
    assert abs(wide - k.excess_mass) < 1e-12
    assert k.excess_mass >= inner


# -- linearised solution -------------------------------------------------------------

@pytest.mark.parametrize("p", [0.2, 0.5])
def test_w_initial_condition(ev, p):
    k = ev(p)
    x = np.linspace(-4, 4, 17)
    assert np.array_equal(k.W(x, 1.0), k.excess(x))
    near = k.W(x, 1.0 + 1e-6) / (1.0 + 1e-6) ** (p / (1 - p))
    assert np.allclose(near, k.excess(x), rtol=2e-6)
    with pytest.raises(ValueError):
        k.W(0.0, 0.99)


@pytest.mark.parametrize("p", P_VALUES)
def test_w_supnorm_bound(ev, p):
    k = ev(p)
    x = np.linspace(-30, 30, 601)
    for t in (1.5, 3.0, 20.0, 100.0):
        w = k.W(x, t)
        g = t ** (p / (1 - p))
        bound = min(g * k.excess_bound(), g * k.excess_mass / (2 * math.sqrt(math.pi * (t - 1))))
        assert np.max(w) <= bound * (1 + 1e-12)
        assert np.all(w > 0)


def test_w_batch_independent_and_even(ev):
    k = ev(0.5)
    x = np.linspace(-10, 10, 101)
    full = k.W(x, 7.0)
    single = np.array([k.W(xi, 7.0) for xi in x[::10]])
    assert np.allclose(full[::10], single, rtol=1e-14, atol=0)
    assert np.allclose(full, full[::-1], rtol=1e-13, atol=0)


# -- envelopes -----------------------------------------------------------------------

@pytest.mark.parametrize("p", P_VALUES)
def test_subsolution_values(ev, p):
    k = ev(p)
    assert k.u_sub(0.0, 0.0) == pytest.approx(2.0 ** (-1 / (1 - p)), rel=1e-15)
    assert k.u_sub(500.0, 3.0) == pytest.approx(u_h(3.0, p), rel=1e-15)
    x = np.linspace(-10, 10, 41)
    for t in (0.01, 1.0, 50.0):
        exc = k.sub_excess(x, t)
        assert np.all(exc[k.D(x, t) > 0] > 0)
        direct = k.u_sub(x, t) - u_h(t, p)
        assert np.allclose(exc, direct, rtol=1e-8, atol=64 * np.finfo(float).eps * u_h(t, p))


@pytest.mark.parametrize("p", P_VALUES)
def test_envelope_ordering(ev, p):
    k = ev(p)
    x = np.linspace(-8, 8, 33)
    assert np.allclose(k.envelope_upper(x, 0.0), make_tent_datum()(x), rtol=1e-15, atol=0)
    for t in (1.0, 2.0, 10.0, 100.0):
        lo = k.u_sub(x, t)
        assert np.all(lo <= k.envelope_upper(x, t))
        assert np.all(lo <= k.u_sup(x, t))
        assert np.all(k.u_sup(x, t) > u_h(t, p))
    delta = k.delta(x)
    assert np.allclose(k.u_sup(x, 1.0), ((1 - p) + delta ** (1 - p)) ** (1 / (1 - p)), rtol=1e-14)
    assert np.allclose(k.envelope_upper(x, 1.0), k.u_sup(x, 1.0), rtol=1e-14)
    with pytest.raises(ValueError):
        k.u_sup(0.0, 0.5)


# -- rate coefficients ---------------------------------------------------------------

@pytest.mark.parametrize("p", P_VALUES)
def test_c_minus_identity_and_limit(ev, p):
    k = ev(p)
    x = np.linspace(-5, 5, 11)
    r = (3 * p - 1) / (2 * (1 - p))
    for t in (0.1, 1.0, 10.0, 100.0):
        lhs = k.c_minus(x, t) * ((1 - p) * t) ** r
        rhs = 0.5 / (1 - p) * ((1 - p) * t) ** (p / (1 - p)) * k.D(x, t)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)
    ts = np.geomspace(0.5, 1e4, 30)
    c0 = k.c_minus(0.0, ts)
    assert np.all(np.diff(c0) >= 0)
    assert c0[-1] <= k.c_minus_limit()
    assert c0[-1] == pytest.approx(k.c_minus_limit(), rel=1e-4)
    assert k.c_minus(1e3, 1.0) == 0.0


def test_transitional_constants(ev):
    k = ev(1 / 3)
    lo, hi = k.cbar_constants()
    assert lo == pytest.approx(1 / (4 * math.sqrt(2 * math.pi / 3)), rel=1e-15)
    assert lo == pytest.approx(0.1727, abs=1e-4)
    assert lo == pytest.approx(k.c_minus_limit(), rel=1e-15)
    assert hi == pytest.approx(k.excess_mass / math.sqrt(2 * math.pi), rel=1e-15)
    assert hi == pytest.approx(k.c_plus_limit(), rel=1e-14)
    assert lo < hi
    assert k.c_plus(0.0, 1e5) == pytest.approx(hi, rel=1e-3)
    with pytest.raises(ValueError):
        ev(0.5).cbar_constants()
    with pytest.raises(ValueError):
        k.c_plus(0.0, 1.0)


@pytest.mark.parametrize("p", P_VALUES)
def test_c_plus_dominance(ev, p):
    k = ev(p)
    x = np.linspace(-5, 5, 21)
    r = (3 * p - 1) / (2 * (1 - p))
    for t in (2.0, 3.0, 30.0):
        w = k.W(x, t)
        cap = k.c_plus(x, t) * ((1 - p) * t) ** r
        assert np.all(w <= cap * (1 + 1e-12))
    assert k.c_plus(40.0, 2.0) < 1e-12


# -- properties ----------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(x=st.floats(-40, 40), t=st.floats(0.01, 200), p=st.sampled_from(P_VALUES))
def test_even_in_x(x, t, p):
    k = KernelEvaluator(make_tent_datum(), ProblemParams(p))
    assert k.D(x, t) == pytest.approx(k.D(-x, t), rel=1e-13, abs=1e-300)
    assert k.u_sub(x, t) == pytest.approx(k.u_sub(-x, t), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-15, 15), t=st.floats(1e-3, 100))
def test_positivity_and_bounds(x, t):
    k = KernelEvaluator(make_tent_datum(), ProblemParams(0.5))
    d = k.D(x, t)
    assert 0.0 <= d < 1.0 / (2 * math.sqrt(math.pi * t))
    if abs(x) >= 1.0:
        assert d <= k.tail_bound(x, t) * (1 + 1e-13)


def test_deterministic(ev):
    k = ev(0.5)
    x = np.linspace(-3, 3, 7)
    assert np.array_equal(k.W(x, 4.0), k.W(x, 4.0))
    assert np.array_equal(k.D(x, 4.0), k.D(x, 4.0))


def test_domain_half_width_golden(golden):
    for t in (100.0, 200.0):
        value, tol = golden[(f"L_tent_t{t:g}_tol1e-12", None, t)]
        assert abs(choose_domain(t, 1e-12) - value) <= tol
