import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st
from scipy import integrate, stats

from mebk.ebkernel import (EBKernelParams, Interval, eb_density, eb_l2_factor, eb_log_density,
                           eb_mean_shift, eb_normalization_check, eb_variance, log_eb)

# log EB_{x,h,a,b}(u) at 40 significant digits (mpmath), rounded to float
FROZEN_LOG_VALUES = [
    ((2.0, 2.0, 0.1, 1.0, 5.0), -0.25757882108216024367),
    ((1.5, 3.0, 0.05, 1.0, 5.0), -8.344709951837598264),
    ((0.3, 0.0, 0.2, 0.0, 1.0), 0.0083847495343932382888),
    ((0.999, 0.5, 0.001, 0.0, 1.0), -2758.001873310693391),
    ((4.9, 5.0, 0.5, 1.0, 5.0), -0.33831768842036049606),
    ((-1.0, 7.0, 0.25, -2.0, 9.0), -7.5821819345280059114),
]

# shape parameters near 1e6: the two log terms and betaln cancel to ~1e-10 absolute
FROZEN_SHARP = ((0.5, 0.5, 1e-6, 0.0, 1.0), 6.6819646763369096427)


def params(x, h, a=1.0, b=5.0):
    return EBKernelParams(x, h, Interval(a, b))


@pytest.mark.parametrize("args,expected", FROZEN_LOG_VALUES)
def test_log_density_matches_high_precision_values(args, expected):
    u, x, h, a, b = args
    assert eb_log_density(params(x, h, a, b), u) == pytest.approx(expected, rel=1e-11, abs=1e-12)


def test_log_density_for_very_sharp_kernel():
    (u, x, h, a, b), expected = FROZEN_SHARP
    assert eb_log_density(params(x, h, a, b), u) == pytest.approx(expected, abs=1e-9)


def test_matches_scaled_beta_density(rng):
    for _ in range(50):
        a = rng.uniform(-3, 3)
        b = a + rng.uniform(0.1, 10)
        x = rng.uniform(a, b)
        h = math.exp(rng.uniform(math.log(0.01), math.log(3)))
        u = rng.uniform(a, b, size=7)
        w = b - a
        ref = stats.beta.pdf((u - a) / w, 1 + (x - a) / (w * h), 1 + (b - x) / (w * h)) / w
        np.testing.assert_allclose(eb_density(params(x, h, a, b), u), ref, rtol=1e-9)


def test_mode_is_target():
    p = params(2.3, 0.2)
    u = np.linspace(1, 5, 40001)
    assert u[np.argmax(eb_density(p, u))] == pytest.approx(2.3, abs=1e-4)


def test_zero_outside_support():
    p = params(2.0, 0.3)
    assert eb_density(p, 0.99) == 0.0
    assert eb_density(p, 5.01) == 0.0
    assert eb_log_density(p, 6.0) == -math.inf


def test_edge_targets_are_power_functions():
    # x = a gives (1 + 1/h) ((b-u)/w)^(1/h) / w
    h = 0.4
    u = np.array([1.0, 2.0, 4.5])
    ref = (1 + 1 / h) * ((5 - u) / 4) ** (1 / h) / 4
    np.testing.assert_allclose(eb_density(params(1.0, h), u), ref, rtol=1e-12)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        params(2.0, 0.0)
    with pytest.raises(ValueError):
        params(6.0, 0.1)
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    with pytest.raises(ValueError):
        eb_normalization_check(params(2.0, 0.1), quad_order=8)


def test_tiny_bandwidth_stays_finite():
    p = params(3.0, 1e-7)
    assert np.isfinite(eb_log_density(p, 3.0))
    assert eb_density(p, 1.5) == 0.0


@given(x=st.floats(0, 1), h=st.floats(1e-3, 5.0), a=st.floats(-10, 10), w=st.floats(0.05, 20))
def test_normalization(x, h, a, w):
    p = EBKernelParams(a + x * w, h, Interval(a, a + w))
    assert eb_normalization_check(p) == pytest.approx(1.0, abs=1e-8)


def inner(p):
    # quad breakpoint at the mode, unless it (nearly) coincides with an endpoint
    a, b = p.support.a, p.support.b
    return [p.x] if a + 1e-9 * (b - a) < p.x < b - 1e-9 * (b - a) else None


# positions on a 2^-30 grid keep a + b - x and a + b - u exact
@given(i=st.integers(0, 2**30), h=st.floats(1e-3, 5.0), k=st.integers(0, 2**30))
def test_reflection_symmetry(i, h, k):
    a, b = 1.0, 5.0
    xx, uu = a + 4 * i / 2**30, a + 4 * k / 2**30
    left = log_eb(uu, xx, h, a, b)
    right = log_eb(a + b - uu, a + b - xx, h, a, b)
    if np.isfinite(left):
        assert abs(left - right) <= 1e-12 * max(1.0, abs(left))
    else:
        assert left == right


@given(x=st.floats(0, 1), h=st.floats(0.02, 3.0))
@example(x=2.220446049250313e-16, h=1.5)
def test_moments_against_quadrature(x, h):
    a, b = -2.0, 9.0
    p = EBKernelParams(a + 11 * x, h, Interval(a, b))
    f = lambda u: eb_density(p, u)
    m1, _ = integrate.quad(lambda u: u * f(u), a, b, points=inner(p), epsabs=0, epsrel=1e-12, limit=200)
    m2, _ = integrate.quad(lambda u: (u - m1) ** 2 * f(u), a, b, points=inner(p), epsabs=0,
                           epsrel=1e-12, limit=200)
    assert p.x + eb_mean_shift(p) == pytest.approx(m1, rel=1e-8)
    assert eb_variance(p) == pytest.approx(m2, rel=1e-7)


@given(x=st.floats(0, 1), h=st.floats(0.02, 3.0))
@example(x=2.220446049250313e-16, h=1.5)
def test_l2_factor_against_quadrature(x, h):
    p = params(1 + 4 * x, h)
    val, _ = integrate.quad(lambda u: eb_density(p, u) ** 2, 1, 5, points=inner(p), epsabs=0,
                            epsrel=1e-12, limit=200)
    assert eb_l2_factor(p) == pytest.approx(val, rel=1e-8)


def test_mean_shift_and_variance_vanish_with_h():
    for h in (1e-2, 1e-4, 1e-6):
        p = params(2.0, h)
        assert abs(eb_mean_shift(p)) < 3 * h
        assert eb_variance(p) < 3 * 4 * h
