import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from mebk.errors import ParameterError
from mebk.estimator import DensityEstimate, Sample, Support, ise
from mebk.numerics import CubatureSpec, integrate_box, make_rng
from mebk.simlab import (BENCHMARK_COLUMNS, ISE_COLUMNS, LOGLIK_COLUMNS, SCENARIO_IDS,
                         avg_loglik_crossval, cpu_benchmark, format_table, get_scenario,
                         pert_derivatives, pert_pdf, run_ise_replications, scenario_density,
                         scenario_ise, scenario_sample, sensitivity_sweep, separable_ise,
                         standardized_errors, truncated_normal_mass)
from mebk.support import GIVEN, SupportPolicy


def marginal_mass(pdf, a, b):
    return integrate.quad(pdf, a, b, limit=400, epsabs=1e-13)[0]


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_every_scenario_density_has_unit_mass(sid):
    sc = get_scenario(sid)
    if sc.marginals is not None:
        mass = 1.0
        for j, m in enumerate(sc.marginals):
            a, b = sc.domain.bounds[j]
            if sid == "D":
                mass *= integrate_box(lambda p: m(p[:, 0]), [[a, b]], sc.ise_cubature)
            else:
                mass *= marginal_mass(m, a, b)
    else:
        mass = integrate_box(sc.pdf, sc.domain.bounds, CubatureSpec(nodes_per_dim=200))
    tol = 1e-3 if sid == "I" else 1e-4
    assert mass == pytest.approx(1.0, abs=tol)


def test_scenario_b_vanishes_on_edges_and_a_is_increasing():
    assert scenario_density("B", 1.0) == 0.0 and scenario_density("B", 5.0) == 0.0
    xs = np.linspace(1.1, 4.9, 20)
    assert np.all(np.diff(scenario_density("A", xs[:, None])) > 0)
    with pytest.raises(ParameterError):
        get_scenario("Z")


def test_pert_derivatives_match_finite_differences():
    x, eps = 2.3, 1e-5
    f, d1, d2 = pert_derivatives(x, 1.0, 5.0, 2.0, 4.0)
    p = lambda t: float(pert_pdf(t, 1.0, 5.0, 2.0, 4.0))
    assert f == pytest.approx(p(x), rel=1e-12)
    assert d1 == pytest.approx((p(x + eps) - p(x - eps)) / (2 * eps), rel=1e-6)
    assert d2 == pytest.approx((p(x + eps) - 2 * p(x) + p(x - eps)) / eps ** 2, rel=1e-4)


def test_scenario_c_mixture_weight():
    sc = get_scenario("C")
    x = sc.draw(make_rng(5), 100_000)[:, 0]
    m1 = -2 + 11 * (17 / 11) / (66 / 11)
    m2 = -2 + 11 * (47 / 11) / (66 / 11)
    assert (x.mean() - m2) / (m1 - m2) == pytest.approx(0.6, abs=0.01)
    assert np.all((x >= -2) & (x <= 9))


@pytest.mark.parametrize("sid", ["A", "B", "D"])
def test_one_dimensional_samplers_match_their_densities(sid):
    sc = get_scenario(sid)
    x = sc.draw(make_rng(6), 3000)[:, 0]
    a, b = sc.domain.bounds[0]
    cdf = lambda t: np.array([marginal_mass(lambda u: sc.pdf([[u]])[0], a, s) for s in t])
    grid = np.linspace(a, b, 41)[1:-1]
    emp = np.array([np.mean(x <= g) for g in grid])
    assert np.max(np.abs(emp - cdf(grid))) < 1.63 / math.sqrt(3000)


def test_multivariate_samplers():
    g = get_scenario("G").draw(make_rng(7), 4000)
    assert np.all((g >= -1) & (g <= 5))
    assert np.corrcoef(g.T)[0, 1] > 0.5
    f = get_scenario("F").draw(make_rng(8), 20000)
    assert np.mean(f, axis=0) == pytest.approx([7.0, 7.0], abs=0.05)
    i = get_scenario("I").draw(make_rng(9), 10)
    assert i.shape == (10, 5)


def test_truncated_normal_mass_matches_bivariate_cdf():
    mvn = stats.multivariate_normal(mean=[0, 0], cov=[[1, 0.8], [0.8, 1]])
    F = lambda x, y: mvn.cdf([x, y])
    ref = F(5, 5) - F(-1, 5) - F(5, -1) + F(-1, -1)
    assert truncated_normal_mass(-1.0, 5.0, 0.8) == pytest.approx(ref, abs=1e-5)


def test_f_l2_norm_matches_numeric_integral():
    sc = get_scenario("F")
    num = integrate_box(lambda p: sc.pdf(p) ** 2, sc.domain.bounds, CubatureSpec(nodes_per_dim=200))
    assert sc.l2_norm == pytest.approx(num, rel=1e-8)


def test_separable_ise_matches_generic_quadrature():
    sample = scenario_sample("E", 40, seed=1)
    est = DensityEstimate(sample, [0.08, 0.12])
    sep = separable_ise(est, get_scenario("E").marginals)
    gen = ise(est, get_scenario("E").density, CubatureSpec(nodes_per_dim=160))
    assert sep == pytest.approx(gen, rel=1e-6)


def test_f_ise_includes_outside_mass():
    sc = get_scenario("F")
    sample = scenario_sample("F", 60, seed=2)
    est = DensityEstimate(sample, [0.1, 0.1])
    val = scenario_ise(est, sc)
    inside = ise(est, sc.density, sc.ise_cubature)
    mass2 = integrate_box(lambda p: sc.pdf(p) ** 2, sample.support.bounds, sc.ise_cubature)
    assert val == pytest.approx(inside + sc.l2_norm - mass2, rel=1e-12)
    assert val > inside


def test_replications_are_deterministic_across_workers():
    a = run_ise_replications("B", 40, N=6, seed=3, workers=1)
    b = run_ise_replications("B", 40, N=6, seed=3, workers=3)
    assert a.to_dict() == b.to_dict()
    assert a.ok.size == 6 and a.mean > 0 and a.sd > 0
    row = a.row()
    assert set(row) == set(ISE_COLUMNS)
    assert row["alpha"] == pytest.approx(40 ** 0.4) and row["beta"] == 0.25
    assert set(a.to_dict(timings=True)["wall_clock"]) == {"total_s", "mean_s", "max_s"}


def test_sweep_cell_equals_direct_run():
    from mebk.bandwidth import PriorConfig
    rows = sensitivity_sweep("B", 30, [5.0], [0.5], N=3, seed=4)
    direct = run_ise_replications("B", 30, prior=PriorConfig(5.0, (0.5,)), N=3, seed=4)
    assert rows == [direct.row()]


def test_replication_arguments_are_validated():
    with pytest.raises(ParameterError):
        run_ise_replications("B", 1, N=2)
    with pytest.raises(ParameterError):
        run_ise_replications("B", 10, selector="oracle", N=2)


def test_ucv_replication_runs():
    rep = run_ise_replications("B", 30, selector="ucv", N=2, seed=5)
    assert rep.prior is None and rep.ok.size == 2
    assert rep.row()["alpha"] == ""


def test_cpu_benchmark_rows():
    rows = cpu_benchmark("B", [20, 30], seed=1)
    assert [r["n"] for r in rows] == [20, 30]
    for r in rows:
        assert set(r) == set(BENCHMARK_COLUMNS)
        assert r["t_ucv_s"] > 0 and r["t_bayes_s"] > 0


def test_loglik_rows_and_validation():
    rng = np.random.default_rng(10)
    X = rng.beta(3, 3, size=60)
    rows = avg_loglik_crossval(X, m_list=(10, 20), R=5, seed=1)
    assert [r["m"] for r in rows] == [10, 20]
    for r in rows:
        assert set(r) == set(LOGLIK_COLUMNS)
        assert np.isfinite(r["mean_loglik"]) and r["failed"] == 0 and r["n_floor"] == 0
    again = avg_loglik_crossval(X, m_list=(10, 20), R=5, seed=1, workers=3)
    assert again == rows
    with pytest.raises(ParameterError):
        avg_loglik_crossval(X, m_list=(60,))
    with pytest.raises(ParameterError):
        avg_loglik_crossval(X, m_list=(1,))
    with pytest.raises(ParameterError):
        avg_loglik_crossval(X, floor=0.0)


def test_loglik_floors_points_outside_the_fitted_box():
    X = np.concatenate([np.linspace(0.3, 0.7, 30), [0.0, 1.0]])
    policy = SupportPolicy("estimated")
    rows = avg_loglik_crossval(X, m_list=(10,), R=4, seed=2, policy=policy, floor=1e-10)
    assert rows[0]["n_floor"] > 0
    assert rows[0]["mean_loglik"] > math.log(1e-10)
    given = SupportPolicy(GIVEN, Support.from_bounds([[0, 1]]))
    rows = avg_loglik_crossval(X, m_list=(10,), R=4, seed=2, policy=given)
    assert rows[0]["n_floor"] == 0


def test_standardized_errors():
    z = standardized_errors("B", 2.5, 200, 200 ** -0.75, reps=20, seed=1)
    assert z.shape == (20,) and np.all(np.isfinite(z))
    np.testing.assert_array_equal(z, standardized_errors("B", 2.5, 200, 200 ** -0.75, 20, 1))
    with pytest.raises(ParameterError):
        standardized_errors("C", 2.5, 50, 0.1, reps=2)


def test_format_table():
    rows = [{"n": 10, "t_ucv_s": 0.5, "t_bayes_s": 0.1}]
    text = format_table(rows, BENCHMARK_COLUMNS, meta={"seed": 1})
    lines = text.splitlines()
    assert lines[0] == '# {"seed": 1}'
    assert lines[1] == "n,t_ucv_s,t_bayes_s" and lines[2] == "10,0.5,0.1"
    body = json.loads(format_table(rows, BENCHMARK_COLUMNS, fmt="json"))
    assert body["rows"] == rows and body["columns"] == list(BENCHMARK_COLUMNS)
    with pytest.raises(ParameterError):
        format_table(rows, BENCHMARK_COLUMNS, fmt="xml")
