import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from singflow.errors import ConvergenceError, DomainError
from singflow.quadrature import gauss_laguerre
from singflow.specfun import (
    X_SWITCH,
    bessel_asymptotic_constant,
    bessel_j,
    bessel_j_bound,
    bessel_j_ladder,
    bessel_j_oracle,
    binom,
    gamma,
    gegenbauer,
    kummer_m,
    laguerre,
    laguerre_table,
    legendre_p,
    lgamma,
)

orders = st.floats(0.0, 40.0, allow_nan=False)
args = st.floats(0.0, 60.0, allow_nan=False)


def mp_j(nu, x):
    return float(mpmath.besselj(nu, x))


def test_gamma_matches_math():
    xs = np.linspace(0.1, 40.0, 200)
    ref = np.array([math.gamma(x) for x in xs])
    assert np.allclose(gamma(xs), ref, rtol=1e-13, atol=0)
    assert np.allclose(lgamma(xs), [math.lgamma(x) for x in xs], rtol=1e-13, atol=1e-13)


def test_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        gamma(-0.5)


def test_binom_noninteger():
    assert binom(5.5, 3) == pytest.approx(special.binom(5.5, 3), rel=1e-13)
    assert binom(10, 0) == 1.0


def test_bessel_against_mpmath_grid():
    nus = [0.0, 0.3, 0.5, 1.0, 2.7, 7.5, 15.0, 30.0, 45.5]
    xs = [0.0, 1e-8, 0.5, 3.0, X_SWITCH, X_SWITCH + 1e-9, 12.0, 20.0, 50.0, 120.0]
    worst = max(abs(bessel_j(n, x) - mp_j(n, x)) for n in nus for x in xs)
    assert worst < 1e-13


def test_bessel_oracle_agrees_with_mpmath():
    for nu, x in [(0.0, 5.0), (0.7, 19.0), (12.3, 7.0), (30.0, 20.0)]:
        assert bessel_j_oracle(nu, x) == pytest.approx(mp_j(nu, x), abs=1e-15)


def test_bessel_scalar_in_scalar_out():
    assert isinstance(bessel_j(1.0, 2.0), float)
    assert bessel_j(np.array([1.0, 2.0]), 2.0).shape == (2,)


def test_bessel_domain():
    with pytest.raises(DomainError):
        bessel_j(-1.5, 1.0)
    with pytest.raises(DomainError):
        bessel_j(1.0, -1.0)


@settings(max_examples=60, deadline=None)
@given(nu=st.floats(1.0, 40.0), x=st.floats(0.05, 60.0))
def test_bessel_three_term_recurrence(nu, x):
    lhs = bessel_j(nu - 1.0, x) + bessel_j(nu + 1.0, x)
    rhs = 2.0 * nu / x * bessel_j(nu, x)
    scale = max(abs(bessel_j(nu - 1.0, x)), abs(bessel_j(nu + 1.0, x)), 1e-300)
    assert abs(lhs - rhs) <= 1e-11 * max(scale, 2.0 * nu / x * abs(bessel_j(nu, x)))


@settings(max_examples=40, deadline=None)
@given(frac=st.floats(0.0, 0.999), x=st.lists(args, min_size=1, max_size=5))
def test_ladder_matches_pointwise(frac, x):
    x = np.array(x)
    lad = bessel_j_ladder(frac, 25, x)
    ref = np.array([bessel_j(frac + n, x) for n in range(26)])
    assert np.allclose(lad, ref, rtol=0, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(nu=st.floats(-0.5, 40.0), x=args)
def test_bessel_bound_holds(nu, x):
    assert abs(bessel_j(nu, x)) <= bessel_j_bound(nu, x) * (1 + 1e-12) + 1e-300


def test_laguerre_matches_scipy():
    t = np.linspace(0.0, 40.0, 101)
    for a in (0.0, 0.5, 1.5, 3.0, 7.25):
        for m in (0, 1, 5, 12, 30):
            ref = special.eval_genlaguerre(m, a, t)
            assert np.allclose(laguerre(m, a, t), ref, rtol=1e-11, atol=1e-11 * np.abs(ref).max())


@pytest.mark.parametrize("a", [0.5, 1.5, 3.0])
def test_laguerre_orthogonality(a):
    t, w = gauss_laguerre(40, a)
    tab = laguerre_table(10, a, t)
    norms = np.array([gamma(m + a + 1.0) / math.factorial(m) for m in range(11)])
    G = (tab * w) @ tab.T / np.sqrt(np.outer(norms, norms))
    assert np.abs(G - np.eye(11)).max() < 1e-10


@settings(max_examples=60, deadline=None)
@given(m=st.integers(0, 20), a=st.floats(0.0, 10.0), t=st.floats(0.0, 30.0))
def test_kummer_laguerre_identity(m, a, t):
    lag = laguerre(m, a, t)
    km = binom(m + a, m) * kummer_m(-m, a + 1.0, t)
    ref = float(mpmath.laguerre(m, a, t))
    assert kummer_m(-m, a + 1.0, t) == pytest.approx(float(mpmath.hyp1f1(-m, a + 1.0, t)), rel=1e-15, abs=1e-300)
    assert abs(lag - km) <= 1e-12 * max(1.0, abs(ref))


def test_kummer_general_against_mpmath():
    for c, b, t in [(0.5, 1.5, 2.0), (1.25, 3.0, 10.0), (-2.5, 0.7, 1.0)]:
        assert kummer_m(c, b, t) == pytest.approx(float(mpmath.hyp1f1(c, b, t)), rel=1e-12)


def test_kummer_rejects_bad_b_and_cancellation():
    with pytest.raises(DomainError):
        kummer_m(0.5, -2, 1.0)
    with pytest.raises(ConvergenceError):
        kummer_m(-40.5, 1.0, 60.0)


def test_legendre_and_gegenbauer():
    t = np.linspace(-1.0, 1.0, 41)
    for l in (0, 1, 4, 17):
        assert np.allclose(legendre_p(l, t), special.eval_legendre(l, t), atol=1e-13)
        assert np.allclose(gegenbauer(l, 1.5, t), special.eval_gegenbauer(l, 1.5, t), rtol=1e-12, atol=1e-12)
        assert np.allclose(gegenbauer(l, 0.5, t), legendre_p(l, t), atol=1e-13)
    with pytest.raises(DomainError):
        legendre_p(2, 1.5)


def test_asymptotic_remainder_constant():
    # J_{1/2} is exactly its leading term
    assert bessel_asymptotic_constant(0.5) < 1e-9
    for s in (0.0, 1.0, 2.5, 10.0):
        c = bessel_asymptotic_constant(s)
        # the first correction term alone forces this much
        assert c >= abs(4 * s * s - 1) / 8 * math.sqrt(2 / math.pi) * 0.99
        assert c == pytest.approx(bessel_asymptotic_constant(s, z_max=800.0), rel=0.01)
    with pytest.raises(DomainError):
        bessel_asymptotic_constant(-1.0)
