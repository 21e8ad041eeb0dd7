"""Simulation laboratory: test scenarios, ISE replications, sweeps, timings.

Scenarios
---------
====  ===  =========================================================
id    d    target
====  ===  =========================================================
A     1    Beta(5, 1) rescaled to [1, 5] (convex, increasing)
B     1    PERT with shapes (2, 4) on [1, 5]
C     1    0.6 PERT(17/11, 49/11) + 0.4 PERT(47/11, 19/11) on [-2, 9]
D     1    logit-normal, location 0.25, scale 3 (U-shaped on [0, 1])
E     2    product of two B marginals on [1, 5]^2
F     2    4/11 N(mu2, I) + 3/11 N(mu3, S3) + 4/11 N(mu4, I), unbounded
G     2    N((0, 0), [[1, .8], [.8, 1]]) truncated to [-1, 5]^2
H     3    product of three C marginals on [-2, 9]^3
I     5    product of five B marginals on [1, 5]^5
====  ===  =========================================================

Scenario F has no natural box, so each replication estimates one from its
own sample (see :mod:`mebk.support`) and the ISE adds the true density's
squared mass outside that box.  For product scenarios the ISE is computed
exactly through the separable form ``int f~^2 - 2 int f~ f + int f^2``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import betaln

from .bandwidth import PriorConfig, bayes_adaptive_bandwidths, default_prior, ucv_select
from .ebkernel import Interval
from .errors import MEBKError, ParameterError
from .estimator import (DensityEstimate, Sample, Support, axis_kernel_matrix,
                        bias_variance_leading_terms, ise)
from .numerics import (CubatureSpec, QMC, TENSOR, integrate_box, make_rng, parallel_map,
                       sample_logit_normal, sample_mixture, sample_mvnormal, sample_pert,
                       sample_truncated_mvnormal, tensor_rule)
from .support import ESTIMATED, GIVEN, SAMPLE_RANGE, SupportPolicy, resolve_support

__all__ = [
    "SCENARIO_IDS",
    "Scenario",
    "get_scenario",
    "scenario_density",
    "scenario_sample",
    "pert_pdf",
    "pert_derivatives",
    "separable_ise",
    "scenario_ise",
    "select_bandwidths",
    "ReplicationReport",
    "run_ise_replications",
    "sensitivity_sweep",
    "cpu_benchmark",
    "avg_loglik_crossval",
    "standardized_errors",
    "ISE_COLUMNS",
    "BENCHMARK_COLUMNS",
    "LOGLIK_COLUMNS",
    "format_table",
    "write_table",
]

SCENARIO_IDS = tuple("ABCDEFGHI")
SELECTORS = ("bayes", "ucv")


# ---------------------------------------------------------------------------
# Target densities
# ---------------------------------------------------------------------------


def pert_pdf(x, a: float, b: float, s1: float, s2: float) -> np.ndarray:
    """Beta(s1, s2) density rescaled to ``[a, b]``; zero outside."""
    x = np.asarray(x, dtype=float)
    return stats.beta.pdf((x - a) / (b - a), s1, s2) / (b - a)


def pert_derivatives(x, a: float, b: float, s1: float, s2: float):
    """Density and its first two derivatives at an interior point ``x``."""
    x = float(np.squeeze(x))
    u, v = x - a, b - x
    p, q = s1 - 1.0, s2 - 1.0
    f = math.exp(p * math.log(u) + q * math.log(v) - (s1 + s2 - 1.0) * math.log(b - a)
                 - betaln(s1, s2))
    g = p / u - q / v
    return f, f * g, f * (g * g - p / u ** 2 - q / v ** 2)


def _logit_normal_pdf(x, mu: float = 0.25, sigma: float = 3.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    ok = (x > 0) & (x < 1)
    xi = x[ok]
    z = np.log(xi) - np.log1p(-xi)
    logf = (-0.5 * ((z - mu) / sigma) ** 2 - math.log(sigma * math.sqrt(2 * math.pi))
            - np.log(xi) - np.log1p(-xi))
    out[ok] = np.exp(logf)
    return out


_C_WEIGHTS = (0.6, 0.4)
_C_SHAPES = ((17 / 11, 49 / 11), (47 / 11, 19 / 11))
_F_WEIGHTS = (4 / 11, 3 / 11, 4 / 11)
_F_MEANS = (np.array([5.0, 9.0]), np.array([7.0, 7.0]), np.array([9.0, 5.0]))
_F_COVS = (np.eye(2), np.array([[0.80, -0.72], [-0.72, 0.80]]), np.eye(2))
_G_MEAN = np.zeros(2)
_G_COV = np.array([[1.0, 0.8], [0.8, 1.0]])
_G_BOX = ((-1.0, 5.0), (-1.0, 5.0))


@lru_cache(maxsize=None)
def truncated_normal_mass(lo: float = -1.0, hi: float = 5.0, rho: float = 0.8) -> float:
    """``P(lo <= Z1, Z2 <= hi)`` for a standard bivariate normal, correlation ``rho``.

    Conditioning on ``Z1`` reduces it to a smooth one-dimensional integral.
    """
    s = math.sqrt(1.0 - rho * rho)

    def inner(z1):
        return stats.norm.pdf(z1) * (stats.norm.cdf((hi - rho * z1) / s)
                                     - stats.norm.cdf((lo - rho * z1) / s))

    val, _ = integrate.quad(inner, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


def _gaussian_mixture_l2(weights, means, covs) -> float:
    # integral over R^d of the squared mixture density
    tot = 0.0
    for wk, mk, ck in zip(weights, means, covs):
        for wl, ml, cl in zip(weights, means, covs):
            tot += wk * wl * stats.multivariate_normal.pdf(mk, mean=ml, cov=ck + cl)
    return float(tot)


@dataclass(frozen=True)
class Scenario:
    """A simulation target: density, exact sampler and estimation policy.

    ``density`` maps an ``(m, d)`` array to ``(m,)`` values and ``sampler``
    maps ``(rng, n)`` to an ``(n, d)`` array.  ``domain`` is the box used to
    check normalization (for F, a box holding all but ~1e-12 of the mass).
    ``marginals`` lists one 1-d density per axis for product scenarios.
    ``l2_norm`` is the integral of ``density**2`` over R^d when the target is
    unbounded.
    """

    id: str
    dimension: int
    support_policy: SupportPolicy
    density: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    domain: Support
    ise_cubature: CubatureSpec
    marginals: tuple | None = None
    l2_norm: float | None = None
    derivatives: Callable | None = field(default=None, compare=False)

    @property
    def support(self) -> Support | None:
        return self.support_policy.given

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dimension == 1 and x.shape[1] != 1:
            x = x.reshape(-1, 1)
        return np.asarray(self.density(x), dtype=float)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.sampler(rng, int(n)), dtype=float).reshape(int(n), self.dimension)


def _box(*pairs) -> Support:
    return Support(tuple(Interval(a, b) for a, b in pairs))


def _product_density(marginals):
    def density(x):
        out = np.ones(x.shape[0])
        for j, m in enumerate(marginals):
            out *= m(x[:, j])
        return out
    return density


def _mixture_marginal(box):
    a, b = box

    def pdf(x):
        return sum(w * pert_pdf(x, a, b, *s) for w, s in zip(_C_WEIGHTS, _C_SHAPES))

    def draw(rng, size):
        comps = [lambda r, m, s=s: sample_pert(r, (a, b), *s, size=m) for s in _C_SHAPES]
        return sample_mixture(rng, _C_WEIGHTS, comps, size)

    return pdf, draw


def _b_marginal(x):
    return pert_pdf(x, 1.0, 5.0, 2.0, 4.0)


def get_scenario(sid: str, mixture_box=(-2.0, 9.0)) -> Scenario:
    """Build scenario ``sid`` (one of ``A``..``I``).

    ``mixture_box`` is the interval carrying the two PERT components of
    scenarios C and H; the estimation support is ``[-2, 9]`` per axis either
    way.
    """
    sid = str(sid).upper()
    if sid not in SCENARIO_IDS:
        raise ParameterError(f"unknown scenario {sid!r}; expected one of {SCENARIO_IDS}")
    mixture_box = (float(mixture_box[0]), float(mixture_box[1]))
    if sid in "ABEI":
        d = {"A": 1, "B": 1, "E": 2, "I": 5}[sid]
        s1, s2 = (5.0, 1.0) if sid == "A" else (2.0, 4.0)
        marg = (lambda x: pert_pdf(x, 1.0, 5.0, s1, s2),) * d
        box = _box(*[(1.0, 5.0)] * d)
        cub = {1: CubatureSpec(nodes_per_dim=128), 2: CubatureSpec(nodes_per_dim=128),
               5: CubatureSpec(QMC, total_points=2**17, dimension=5)}[d]
        return Scenario(
            sid, d, SupportPolicy(GIVEN, box), _product_density(marg),
            lambda rng, n: sample_pert(rng, (1.0, 5.0), s1, s2, size=(n, d)),
            box, cub, marginals=marg,
            derivatives=(lambda x: pert_derivatives(x, 1.0, 5.0, s1, s2)),
        )
    if sid in "CH":
        d = 1 if sid == "C" else 3
        pdf, draw = _mixture_marginal(mixture_box)
        box = _box(*[(-2.0, 9.0)] * d)
        cub = CubatureSpec(nodes_per_dim=128 if d == 1 else 64)
        return Scenario(
            sid, d, SupportPolicy(GIVEN, box), _product_density((pdf,) * d),
            lambda rng, n: np.stack([draw(rng, n) for _ in range(d)], axis=1),
            box, cub, marginals=(pdf,) * d,
        )
    if sid == "D":
        box = _box((0.0, 1.0))
        return Scenario(
            sid, 1, SupportPolicy(GIVEN, box), lambda x: _logit_normal_pdf(x[:, 0]),
            lambda rng, n: sample_logit_normal(rng, 0.25, 3.0, size=(n, 1)),
            box, CubatureSpec(nodes_per_dim=32, graded_panels=24, grading=0.3),
            marginals=(_logit_normal_pdf,),
        )
    if sid == "F":
        comps = [lambda r, m, k=k: sample_mvnormal(r, _F_MEANS[k], _F_COVS[k], m)
                 for k in range(3)]

        def density(x):
            return sum(w * stats.multivariate_normal.pdf(x, mean=m, cov=c).reshape(-1)
                       for w, m, c in zip(_F_WEIGHTS, _F_MEANS, _F_COVS))

        return Scenario(
            sid, 2, SupportPolicy(ESTIMATED), density,
            lambda rng, n: sample_mixture(rng, _F_WEIGHTS, comps, n),
            _box((-3.0, 17.0), (-3.0, 17.0)), CubatureSpec(nodes_per_dim=128),
            l2_norm=_gaussian_mixture_l2(_F_WEIGHTS, _F_MEANS, _F_COVS),
        )
    # G
    box = _box(*_G_BOX)

    def density(x):
        z = truncated_normal_mass(_G_BOX[0][0], _G_BOX[0][1], _G_COV[0, 1])
        inside = box.contains(x)
        vals = stats.multivariate_normal.pdf(x, mean=_G_MEAN, cov=_G_COV).reshape(-1)
        return np.where(inside, vals / z, 0.0)

    return Scenario(
        sid, 2, SupportPolicy(GIVEN, box), density,
        lambda rng, n: sample_truncated_mvnormal(rng, _G_MEAN, _G_COV, box.bounds, n),
        box, CubatureSpec(nodes_per_dim=128),
    )


def _scenario(s) -> Scenario:
    return s if isinstance(s, Scenario) else get_scenario(s)


def scenario_density(sid, x) -> np.ndarray:
    """Target density of scenario ``sid`` at ``x`` (``(m, d)`` or one point)."""
    sc = _scenario(sid)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and sc.dimension > 1)
    vals = sc.pdf(x.reshape(1, -1) if single else x)
    return float(vals[0]) if single else vals


def scenario_sample(sid, n: int, seed: int, prior: PriorConfig | None = None,
                    stream: Sequence[int] = ()) -> Sample:
    """Seeded sample of size ``n`` with the scenario's estimation support."""
    sc = _scenario(sid)
    X = sc.draw(make_rng(seed, *stream), n)
    if sc.support_policy.mode == ESTIMATED and prior is None:
        prior = default_prior(n, sc.dimension)
    return Sample(X, resolve_support(X, sc.support_policy, prior))


# ---------------------------------------------------------------------------
# ISE
# ---------------------------------------------------------------------------


def separable_ise(est: DensityEstimate, marginals, cubature: CubatureSpec | None = None) -> float:
    """ISE against a product density, via one-dimensional quadratures only.

    ``int (f~ - f)^2 = int f~^2 - 2 int f~ f + int f^2``; each term factorizes
    over axes because both the kernels and the target are products.
    """
    if cubature is None or cubature.method != TENSOR:
        cubature = CubatureSpec(nodes_per_dim=128)
    S = est.support
    X = est.sample.data
    n = X.shape[0]
    H = np.broadcast_to(est.bandwidths, X.shape) if est.bandwidths.ndim == 1 else est.bandwidths
    gram = np.ones((n, n))
    cross = np.ones(n)
    ff = 1.0
    for j, (nodes, w) in enumerate(tensor_rule(S.bounds, cubature)):
        K = axis_kernel_matrix(nodes, X[:, j], H[:, j], *S.bounds[j])
        fj = np.asarray(marginals[j](nodes), dtype=float)
        gram *= (K * w[:, None]).T @ K
        cross *= (w * fj) @ K
        ff *= float(w @ (fj * fj))
    cn = est.normalization
    val = gram.sum() / (n * n * cn * cn) - 2.0 * cross.sum() / (n * cn) + ff
    return float(max(val, 0.0))


def scenario_ise(est: DensityEstimate, sc: Scenario, cubature: CubatureSpec | None = None) -> float:
    """ISE of ``est`` against scenario ``sc`` over the scenario's domain.

    For an unbounded target the squared true density outside the estimation
    box is added, using the closed-form ``l2_norm``.
    """
    cubature = cubature or sc.ise_cubature
    if sc.marginals is not None and est.support == sc.domain:
        return separable_ise(est, sc.marginals, cubature)
    val = ise(est, sc.density, cubature)
    if sc.l2_norm is not None:
        inside = integrate_box(lambda p: sc.density(p) ** 2, est.support.bounds, cubature)
        val += max(sc.l2_norm - inside, 0.0)
    return float(val)


# ---------------------------------------------------------------------------
# Replications
# ---------------------------------------------------------------------------


def resolve_prior(n: int, d: int, alpha="auto", beta=0.25) -> PriorConfig:
    """Prior for sample size ``n``: ``alpha="auto"`` means ``n**(2/5)``."""
    return default_prior(n, d, beta=beta, alpha=alpha)


def select_bandwidths(sample: Sample, selector: str, prior: PriorConfig | None = None,
                      ucv_cubature: CubatureSpec | None = None) -> np.ndarray:
    """Bandwidths from ``"bayes"`` (adaptive, needs ``prior``) or ``"ucv"`` (global)."""
    if selector == "bayes":
        if prior is None:
            raise ParameterError("the Bayes selector needs a prior")
        return bayes_adaptive_bandwidths(sample, prior)
    if selector == "ucv":
        return ucv_select(sample, ucv_cubature)
    raise ParameterError(f"selector must be one of {SELECTORS}, got {selector!r}")


@dataclass
class ReplicationReport:
    """Per-replication ISE values for one (scenario, n, selector, prior) cell.

    Failed replications store ``nan`` and appear in ``failures`` as
    ``(index, message)``; ``mean`` and ``sd`` use the successful ones.
    """

    scenario: str
    n: int
    selector: str
    prior: dict | None
    N: int
    seed: int
    ise: np.ndarray
    failures: list
    seconds: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.ise[np.isfinite(self.ise)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.ok)) if self.ok.size else math.nan

    @property
    def sd(self) -> float:
        return float(np.std(self.ok, ddof=1)) if self.ok.size > 1 else 0.0

    @property
    def wall_clock(self) -> dict:
        return {"total_s": float(self.seconds.sum()), "mean_s": float(self.seconds.mean()),
                "max_s": float(self.seconds.max())}

    def row(self) -> dict:
        p = self.prior or {}
        beta = p.get("beta")
        return {
            "scenario": self.scenario,
            "n": self.n,
            "alpha": p.get("alpha", ""),
            "beta": beta[0] if beta and len(set(beta)) == 1 else (beta or ""),
            "mean_ise_x1000": 1000.0 * self.mean,
            "sd_x1000": 1000.0 * self.sd,
            "selector": self.selector,
            "reps": self.N,
            "failed": len(self.failures),
        }

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "scenario": self.scenario, "n": self.n, "selector": self.selector,
            "prior": self.prior, "N": self.N, "seed": self.seed,
            "ise": [float(v) for v in self.ise], "mean": self.mean, "sd": self.sd,
            "failures": [list(f) for f in self.failures],
        }
        if timings:
            out["wall_clock"] = self.wall_clock
        return out


def _one_replication(sc: Scenario, n: int, selector: str, prior: PriorConfig | None,
                     seed: int, r: int, cubature: CubatureSpec | None,
                     ucv_cubature: CubatureSpec | None):
    t0 = time.perf_counter()
    try:
        X = sc.draw(make_rng(seed, r), n)
        box = resolve_support(X, sc.support_policy, prior or default_prior(n, sc.dimension))
        sample = Sample(X, box)
        h = select_bandwidths(sample, selector, prior, ucv_cubature)
        est = DensityEstimate(sample, h, cubature=cubature or sc.ise_cubature)
        val, err = scenario_ise(est, sc, cubature), None
    except (MEBKError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        val, err = math.nan, f"{type(exc).__name__}: {exc}"
    return val, err, time.perf_counter() - t0


def run_ise_replications(scenario, n: int, selector: str = "bayes", prior: PriorConfig | None = None,
                         N: int = 100, seed: int = 0, cubature: CubatureSpec | None = None,
                         alpha="auto", beta=0.25, ucv_cubature: CubatureSpec | None = None,
                         workers: int | None = None) -> ReplicationReport:
    """Monte Carlo ISE of the normalized estimate over ``N`` replications.

    Replication ``r`` draws from its own stream ``(seed, r)`` and results are
    stored by position, so the report does not depend on ``workers``.  When
    ``prior`` is omitted it is built from ``alpha`` and ``beta``.
    """
    sc = _scenario(scenario)
    n, N = int(n), int(N)
    if n < 2 or N < 1:
        raise ParameterError("need n >= 2 and N >= 1")
    if selector not in SELECTORS:
        raise ParameterError(f"selector must be one of {SELECTORS}, got {selector!r}")
    if selector == "bayes" and prior is None:
        prior = resolve_prior(n, sc.dimension, alpha, beta)
    res = parallel_map(
        lambda r: _one_replication(sc, n, selector, prior, seed, r, cubature, ucv_cubature),
        range(N), workers)
    vals = np.array([v for v, _, _ in res])
    fails = [(r, e) for r, (_, e, _) in enumerate(res) if e is not None]
    secs = np.array([t for _, _, t in res])
    return ReplicationReport(sc.id, n, selector, prior.to_dict() if prior else None, N,
                             int(seed), vals, fails, secs)


def sensitivity_sweep(scenario, n: int, alphas: Sequence[float], betas: Sequence[float],
                      N: int = 100, seed: int = 0, cubature: CubatureSpec | None = None,
                      workers: int | None = None) -> list[dict]:
    """Bayes ISE table over an ``alpha x beta`` grid.

    Every cell reuses the same replication streams, so differences between
    cells reflect the prior only.
    """
    sc = _scenario(scenario)
    rows = []
    for b in betas:
        for a in alphas:
            prior = PriorConfig(float(a), (float(b),) * sc.dimension)
            rep = run_ise_replications(sc, n, "bayes", prior, N, seed, cubature, workers=workers)
            rows.append(rep.row())
    return rows


def cpu_benchmark(scenario, sizes: Sequence[int], seed: int = 0, alpha="auto", beta=0.25,
                  ucv_cubature: CubatureSpec | None = None) -> list[dict]:
    """Wall-clock seconds of both selectors on one shared sample per size."""
    sc = _scenario(scenario)
    rows = []
    for k, n in enumerate(sizes):
        n = int(n)
        sample = scenario_sample(sc, n, seed, stream=(k,))
        prior = resolve_prior(n, sc.dimension, alpha, beta)
        t0 = time.perf_counter()
        ucv_select(sample, ucv_cubature)
        t1 = time.perf_counter()
        bayes_adaptive_bandwidths(sample, prior)
        t2 = time.perf_counter()
        rows.append({"n": n, "t_ucv_s": t1 - t0, "t_bayes_s": t2 - t1})
    return rows


# ---------------------------------------------------------------------------
# Cross-validated average log-likelihood
# ---------------------------------------------------------------------------


def avg_loglik_crossval(data, selector: str = "bayes", m_list: Sequence[int] = (15,),
                        R: int = 100, seed: int = 0, policy: SupportPolicy | None = None,
                        alpha="auto", beta=0.5, floor: float = 1e-300,
                        workers: int | None = None) -> list[dict]:
    """Held-out mean log-density over ``R`` random splits per subset size.

    For each ``m`` a random subset of ``m`` rows (without replacement) fits the
    normalized estimate and the other ``n - m`` rows are scored by their mean
    log-density.  Held-out points outside the fitted support score
    ``log(floor)`` and are counted in ``n_floor``.  A ``sample_range`` policy
    uses the range of the full data for every split; an estimated support is
    recomputed from each training subset.  ``alpha="auto"`` means
    ``n**(2/5)`` with ``n`` the full data size.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    policy = policy or SupportPolicy("sample_range")
    if not floor > 0:
        raise ParameterError("floor must be positive")
    for m in m_list:
        if not 2 <= int(m) < n:
            raise ParameterError(f"subset size must satisfy 2 <= m < n={n}, got {m}")
    prior = resolve_prior(n, d, alpha, beta)
    if policy.mode == SAMPLE_RANGE:
        # one box for every split: the range of the full data
        policy = SupportPolicy(GIVEN, resolve_support(X, policy), policy.inflation)
    log_floor = math.log(floor)

    def score(args):
        k, r, m = args
        idx = make_rng(seed, k, r).permutation(n)
        train, test = X[idx[:m]], X[idx[m:]]
        try:
            box = resolve_support(train, policy, prior)
            sample = Sample(train, box)
            est = DensityEstimate(sample, select_bandwidths(sample, selector, prior))
            inside = box.contains(test)
            logs = np.full(test.shape[0], log_floor)
            if inside.any():
                vals = est.evaluate(test[inside])
                with np.errstate(divide="ignore"):
                    logs[inside] = np.maximum(np.log(vals), log_floor)
            return float(logs.mean()), int(np.sum(logs <= log_floor)), None
        except (MEBKError, ArithmeticError, ValueError) as exc:
            return math.nan, 0, f"{type(exc).__name__}: {exc}"

    rows = []
    for k, m in enumerate(m_list):
        res = parallel_map(score, [(k, r, int(m)) for r in range(R)], workers)
        vals = np.array([v for v, _, _ in res])
        ok = vals[np.isfinite(vals)]
        rows.append({
            "m": int(m),
            "selector": selector,
            "mean_loglik": float(ok.mean()) if ok.size else math.nan,
            "sd_loglik": float(ok.std(ddof=1)) if ok.size > 1 else 0.0,
            "reps": int(R),
            "n_floor": int(sum(c for _, c, _ in res)),
            "failed": int(sum(e is not None for _, _, e in res)),
        })
    return rows


# ---------------------------------------------------------------------------
# Pointwise standardized errors
# ---------------------------------------------------------------------------


def standardized_errors(scenario, x, n: int, h, reps: int, seed: int = 0) -> np.ndarray:
    """``(f_hat(x) - f(x)) / sqrt(leading variance)`` over ``reps`` samples.

    Uses the raw estimate with a fixed bandwidth ``h`` and the leading
    variance ``f(x) ||K_x||^2 / n``.
    """
    sc = _scenario(scenario)
    if sc.derivatives is None or sc.support is None:
        raise ParameterError(f"scenario {sc.id} has no closed-form derivatives")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (sc.dimension,))
    fx = float(sc.pdf(x[None, :])[0])
    _, var = bias_variance_leading_terms(
        lambda p: (fx, np.zeros(sc.dimension), np.zeros(sc.dimension)), x, h, n, sc.support)
    z = np.empty(int(reps))
    for r in range(int(reps)):
        sample = Sample(sc.draw(make_rng(seed, r), n), sc.support)
        est = DensityEstimate(sample, h, mode="raw")
        z[r] = (est.evaluate(x[None, :])[0] - fx) / math.sqrt(var)
    return z


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

ISE_COLUMNS = ("scenario", "n", "alpha", "beta", "mean_ise_x1000", "sd_x1000",
               "selector", "reps", "failed")
BENCHMARK_COLUMNS = ("n", "t_ucv_s", "t_bayes_s")
LOGLIK_COLUMNS = ("m", "selector", "mean_loglik", "sd_loglik", "reps", "n_floor", "failed")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(u) for u in v)
    return str(v)


def format_table(rows: Sequence[dict], columns: Sequence[str], fmt: str = "csv",
                 meta: dict | None = None) -> str:
    """Render rows as CSV (``meta`` in leading ``#`` lines) or as JSON."""
    if fmt == "json":
        body = {"meta": meta or {}, "columns": list(columns),
                "rows": [{c: r.get(c) for c in columns} for r in rows]}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"
    if fmt != "csv":
        raise ParameterError(f"format must be 'csv' or 'json', got {fmt!r}")
    buf = io.StringIO()
    if meta:
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_table(rows: Sequence[dict], columns: Sequence[str], path, fmt: str = "csv",
                meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_table(rows, columns, fmt, meta))
