import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mebk.errors import IntegrationError, NumericalError, ParameterError
from mebk.numerics import (QMC, TENSOR, CubatureSpec, gauss_legendre, integrate_box,
                           make_rng, nelder_mead_min, parallel_map, qmc_rule, sample_beta,
                           sample_logit_normal, sample_mixture, sample_mvnormal, sample_pert,
                           sample_truncated_mvnormal, tensor_rule)


@given(st.integers(min_value=0, max_value=2 * 12 - 1))
def test_gauss_legendre_exact_for_polynomials(k):
    t, w = gauss_legendre(12)
    exact = 0.0 if k % 2 else 2.0 / (k + 1)
    assert np.dot(w, t**k) == pytest.approx(exact, abs=1e-13)


def test_graded_rule_weights_sum_to_length_and_nodes_inside():
    spec = CubatureSpec(nodes_per_dim=16, graded_panels=9, grading=0.3)
    (nodes, w), = tensor_rule([[2.0, 7.0]], spec)
    assert nodes.shape == (16 * 9,)
    assert np.sum(w) == pytest.approx(5.0, rel=1e-14)
    assert np.all((nodes > 2.0) & (nodes < 7.0))


def test_graded_rule_beats_plain_rule_on_edge_singularity():
    f = lambda x: x[:, 0] ** -0.5
    plain = integrate_box(f, [[0.0, 1.0]], CubatureSpec(nodes_per_dim=32))
    graded = integrate_box(f, [[0.0, 1.0]],
                           CubatureSpec(nodes_per_dim=32, graded_panels=40, grading=0.3))
    assert abs(graded - 2.0) < 1e-6 < abs(plain - 2.0)


def test_tensor_box_integral_of_separable_polynomial():
    f = lambda x: x[:, 0] ** 2 * (1.0 + x[:, 1]) * x[:, 2] ** 3
    val = integrate_box(f, [[0, 1], [-1, 2], [1, 2]], CubatureSpec(TENSOR, nodes_per_dim=8))
    assert val == pytest.approx((1 / 3) * 4.5 * (15 / 4), rel=1e-13)


def test_qmc_integral_and_determinism():
    spec = CubatureSpec(QMC, total_points=2**14, seed=3)
    f = lambda x: np.prod(np.sin(np.pi * x), axis=1)
    box = [[0, 1]] * 4
    v1 = integrate_box(f, box, spec)
    v2 = integrate_box(f, box, spec)
    assert v1 == v2
    assert v1 == pytest.approx((2 / np.pi) ** 4, rel=1e-3)
    pts, w = qmc_rule(box, spec)
    assert pts.shape == (2**14, 4) and w == pytest.approx(2.0**-14)


def test_integrand_nan_reports_point():
    def f(x):
        out = np.ones(len(x))
        out[x[:, 0] > 0.5] = np.nan
        return out

    with pytest.raises(IntegrationError) as info:
        integrate_box(f, [[0.0, 1.0]], CubatureSpec(nodes_per_dim=8))
    assert info.value.point[0] > 0.5


def test_cubature_spec_validation():
    with pytest.raises(ParameterError):
        CubatureSpec(method="simpson")
    with pytest.raises(ParameterError):
        CubatureSpec(TENSOR, dimension=4)
    with pytest.raises(ParameterError):
        CubatureSpec(grading=1.5)
    with pytest.raises(ParameterError):
        integrate_box(lambda x: x[:, 0], [[1.0, 0.0]])


def test_nelder_mead_recovers_quadratic_minimum():
    target = np.array([0.3, 2.5])
    res = nelder_mead_min(lambda h: float(np.sum((np.log(h) - np.log(target)) ** 2)),
                          [1.0, 1.0], tol=1e-8)
    assert res.converged
    np.testing.assert_allclose(res.x, target, atol=1e-4)
    x, fun = res
    assert fun < 1e-10


def test_nelder_mead_bounds_and_multistart():
    f = lambda h: float((h[0] - 0.05) ** 2 * (h[0] - 3.0) ** 2 - 0.1 * (h[0] > 1.0))
    res = nelder_mead_min(f, [0.1], bounds=(1e-3, 10.0), extra_starts=[[2.0]])
    assert len(res.starts) == 2
    assert res.x[0] == pytest.approx(3.0, abs=1e-3)
    with pytest.raises(ParameterError):
        nelder_mead_min(f, [-1.0])
    with pytest.raises(NumericalError):
        nelder_mead_min(lambda h: np.nan, [1.0])


def test_make_rng_streams_are_reproducible_and_distinct():
    a = make_rng(7, 3).random(5)
    b = make_rng(7, 3).random(5)
    c = make_rng(7, 4).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(ParameterError):
        make_rng(-1)


def test_parallel_map_preserves_order():
    items = list(range(40))
    assert parallel_map(lambda k: k * k, items, workers=4) == [k * k for k in items]


def test_worker_count_reads_environment(monkeypatch):
    from mebk.numerics import worker_count
    monkeypatch.setenv("MEBK_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("MEBK_THREADS", "junk")
    assert worker_count() == 1


def test_beta_and_pert_samplers_match_distribution():
    rng = make_rng(11)
    x = sample_beta(rng, 2.0, 4.0, 4000)
    assert stats.kstest(x, stats.beta(2, 4).cdf).pvalue > 1e-3
    y = sample_pert(rng, (1.0, 5.0), 5.0, 1.0, 4000)
    assert stats.kstest(y, stats.beta(5, 1, loc=1, scale=4).cdf).pvalue > 1e-3
    with pytest.raises(ParameterError):
        sample_beta(rng, 0.0, 1.0)


def test_mvnormal_moments_and_rejects_non_pd():
    rng = make_rng(12)
    cov = [[1.0, 0.6], [0.6, 2.0]]
    x = sample_mvnormal(rng, [1.0, -1.0], cov, 20000)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.06)
    with pytest.raises(ParameterError):
        sample_mvnormal(rng, [0, 0], [[1.0, 2.0], [2.0, 1.0]])


def test_truncated_mvnormal_inside_box():
    rng = make_rng(13)
    stats_ = {}
    x = sample_truncated_mvnormal(rng, [2.0, 2.0], [[1.0, 0.5], [0.5, 1.0]],
                                  [[-1, 5], [-1, 5]], 500, stats=stats_)
    assert x.shape == (500, 2)
    assert np.all((x >= -1) & (x <= 5))
    assert stats_["accepted"] == 500 and stats_["proposed"] >= 500
    with pytest.raises(NumericalError):
        sample_truncated_mvnormal(rng, [0.0], [[1.0]], [[10.0, 11.0]], 1, max_rejections=1000)


def test_logit_normal_in_unit_interval():
    x = sample_logit_normal(make_rng(14), 0.0, 1.5, 2000)
    assert np.all((x > 0) & (x < 1))
    z = np.log(x / (1 - x))
    assert stats.kstest(z, stats.norm(0, 1.5).cdf).pvalue > 1e-3


def test_mixture_labels_and_groups():
    rng = make_rng(15)
    comps = [lambda r, m: np.zeros(m), lambda r, m: np.ones(m)]
    x, lab = sample_mixture(rng, [0.6, 0.4], comps, 10000, return_labels=True)
    np.testing.assert_array_equal(x, lab.astype(float))
    assert abs(np.mean(lab == 0) - 0.6) < 0.02
    with pytest.raises(ParameterError):
        sample_mixture(rng, [0.5, 0.6], comps, 10)
