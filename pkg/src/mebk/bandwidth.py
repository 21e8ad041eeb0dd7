"""Bandwidth selectors: Bayesian adaptive (closed form) and global UCV.

Bayesian adaptive bandwidths
----------------------------
Each observation ``i`` gets its own bandwidth vector ``h_i`` with independent
inverse-gamma priors ``IG(alpha, beta_l)``.  Scoring ``X_i`` with the
leave-one-out estimate and replacing the gamma functions of the kernel
normalizer by Stirling's formula turns the posterior into a mixture over
donors ``j != i`` of products of two-component inverse-gamma mixtures, one
per axis:

* ``X_il`` interior:      ``A IG(alpha+1/2, B) + C IG(alpha-1/2, B)`` with
  ``B = beta_l + KL(p_i || p_j)`` (Bernoulli KL of the relative positions);
* ``X_il`` at ``a_l``:    ``F IG(alpha, E) + H IG(alpha+1, E)`` with
  ``E = beta_l - log((b_l - X_jl) / (b_l - a_l))``;
* ``X_il`` at ``b_l``:    ``J IG(alpha, G) + K IG(alpha+1, G)`` with
  ``G = beta_l - log((X_jl - a_l) / (b_l - a_l))``.

The boundary branches are exact (the kernel with target on an edge is a power
function); only the interior branch relies on Stirling.  The posterior mean is
a donor-weighted average of per-donor mixture means, computed here in log
space with a max-shift before summing over donors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ParameterError
from .estimator import (DensityEstimate, Sample, check_bandwidths, has_ties, integrate_square,
                        loo_values)
from .numerics import CubatureSpec, NelderMeadResult, nelder_mead_min

__all__ = [
    "PriorConfig",
    "default_prior",
    "PosteriorCoefficients",
    "posterior_coefficients",
    "bayes_adaptive_bandwidths",
    "posterior_density",
    "ucv_objective",
    "ucv_select",
    "UCVResult",
    "LEFT",
    "INTERIOR",
    "RIGHT",
]

LEFT, INTERIOR, RIGHT = 0, 1, 2
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class PriorConfig:
    """Inverse-gamma hyperparameters: common shape ``alpha``, per-axis scales."""

    alpha: float
    beta: tuple

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        if not self.alpha > 1.5 or not math.isfinite(self.alpha):
            raise ParameterError(f"alpha must exceed 3/2, got {self.alpha}")
        if not beta or any(not (b > 0 and math.isfinite(b)) for b in beta):
            raise ParameterError("every beta must be positive and finite")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", beta)

    def beta_vector(self, d: int) -> np.ndarray:
        if len(self.beta) == 1:
            return np.full(d, self.beta[0])
        if len(self.beta) != d:
            raise ParameterError(f"prior has {len(self.beta)} scales for {d} axes")
        return np.asarray(self.beta)

    def prior_mean(self, d: int) -> np.ndarray:
        return self.beta_vector(d) / (self.alpha - 1.0)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": list(self.beta)}


def default_prior(n: int, d: int = 1, beta=0.25, alpha=None) -> PriorConfig:
    """``alpha = n**(2/5)`` unless given; ``beta`` defaults to 0.25 per axis."""
    if alpha is None or alpha == "auto":
        alpha = float(n) ** 0.4
    return PriorConfig(float(alpha), tuple(np.broadcast_to(np.asarray(beta, float), (d,))))


def classify(X: np.ndarray, bounds: np.ndarray, rtol: float = BOUNDARY_RTOL) -> np.ndarray:
    """Branch of every coordinate: LEFT, INTERIOR or RIGHT."""
    a, b = bounds[:, 0], bounds[:, 1]
    tol = rtol * (b - a)
    out = np.full(X.shape, INTERIOR, dtype=np.int8)
    out[np.abs(X - a) <= tol] = LEFT
    out[np.abs(b - X) <= tol] = RIGHT
    return out


def _pair_terms(X: np.ndarray, bounds: np.ndarray, prior: PriorConfig, rows: np.ndarray):
    """Mixture parameters for every (i in rows, donor j, axis l).

    Returns a dict of ``(r, n, d)`` arrays: ``scale`` (B, E or G), ``kl``
    (``scale - beta``), ``logc1``/``logc2`` (log of A/F/J and C/H/K) and
    ``shape1``/``shape2``; plus ``branch`` of shape ``(r, d)``.
    """
    n, d = X.shape
    alpha = prior.alpha
    beta = prior.beta_vector(d)
    Xi = X[rows]
    branch = classify(Xi, bounds)
    r = rows.size
    shape = (r, n, d)
    kl = np.empty(shape)
    logc1 = np.empty(shape)
    logc2 = np.empty(shape)
    shape1 = np.empty((r, 1, d))
    shape2 = np.empty((r, 1, d))
    lg_hi, lg_lo = gammaln(alpha + 0.5), gammaln(alpha - 0.5)
    lg_a, lg_a1 = gammaln(alpha), gammaln(alpha + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for l in range(d):
            a, b = bounds[l]
            w = b - a
            xi = Xi[:, l][:, None]
            xj = X[:, l][None, :]
            br = branch[:, l][:, None]
            lb = math.log(beta[l])

            # interior: Bernoulli KL between relative positions, log1p form
            p = (xi - a) / w
            q = (b - xi) / w
            delta = (xj - xi) / w
            kl_int = -p * np.log1p(delta / np.where(p > 0, p, 1.0)) \
                - q * np.log1p(-delta / np.where(q > 0, q, 1.0))
            kl_int = np.where((xj - a <= 0) | (b - xj <= 0), np.inf, np.maximum(kl_int, 0.0))
            pref = -0.5 * np.log(2.0 * np.pi * np.maximum((xi - a) * (b - xi), 1e-300)) \
                + alpha * lb
            logB = np.log(beta[l] + kl_int)
            int_c1 = pref + lg_hi - (alpha + 0.5) * logB
            int_c2 = pref + lg_lo - (alpha - 0.5) * logB

            # left edge: E = beta - log((b - X_j)/(b - a))
            kl_left = -np.log((b - xj) / w) + np.zeros_like(xi)
            kl_left = np.where(b - xj <= 0, np.inf, np.maximum(kl_left, 0.0))
            logE = np.log(beta[l] + kl_left)
            edge_pref = alpha * lb - math.log(w)
            left_c1 = edge_pref + lg_a - alpha * logE
            left_c2 = edge_pref + lg_a1 - (alpha + 1.0) * logE

            # right edge: G = beta - log((X_j - a)/(b - a))
            kl_right = -np.log((xj - a) / w) + np.zeros_like(xi)
            kl_right = np.where(xj - a <= 0, np.inf, np.maximum(kl_right, 0.0))
            logG = np.log(beta[l] + kl_right)
            right_c1 = edge_pref + lg_a - alpha * logG
            right_c2 = edge_pref + lg_a1 - (alpha + 1.0) * logG

            kl[:, :, l] = np.select([br == LEFT, br == RIGHT], [kl_left, kl_right], kl_int)
            logc1[:, :, l] = np.select([br == LEFT, br == RIGHT], [left_c1, right_c1], int_c1)
            logc2[:, :, l] = np.select([br == LEFT, br == RIGHT], [left_c2, right_c2], int_c2)
            edge = (branch[:, l] != INTERIOR)
            shape1[:, 0, l] = np.where(edge, alpha, alpha + 0.5)
            shape2[:, 0, l] = np.where(edge, alpha + 1.0, alpha - 0.5)
    scale = beta[None, None, :] + kl
    return {"kl": kl, "scale": scale, "logc1": logc1, "logc2": logc2,
            "shape1": shape1, "shape2": shape2, "branch": branch}


def _donor_log_weights(terms: dict, rows: np.ndarray) -> np.ndarray:
    logw = np.logaddexp(terms["logc1"], terms["logc2"]).sum(axis=2)
    logw = np.where(np.isnan(logw), -np.inf, logw)
    logw[np.arange(rows.size), rows] = -np.inf
    return logw


def _donor_means(terms: dict) -> np.ndarray:
    # per-donor posterior mean of each axis: scale * sum_k w_k / (shape_k - 1)
    with np.errstate(invalid="ignore"):
        w1 = 1.0 / (1.0 + np.exp(terms["logc2"] - terms["logc1"]))
    w2 = 1.0 - w1
    return terms["scale"] * (w1 / (terms["shape1"] - 1.0) + w2 / (terms["shape2"] - 1.0))


@dataclass
class PosteriorCoefficients:
    """Mixture coefficients of the bandwidth posterior for one observation.

    All per-donor arrays have shape ``(n, d)`` with the row of ``i`` itself
    masked out by ``donors``.  Coefficients are stored as logs; the named
    properties return them on the natural scale for the axes of the matching
    branch and NaN elsewhere.
    """

    i: int
    branch: np.ndarray
    donors: np.ndarray
    scale: np.ndarray
    kl: np.ndarray
    log_first: np.ndarray
    log_second: np.ndarray
    shape_first: np.ndarray
    shape_second: np.ndarray
    log_weight: np.ndarray
    log_D: float
    donor_means: np.ndarray

    def _pick(self, arr, which):
        out = np.where(self.branch[None, :] == which, arr, np.nan)
        out[~self.donors] = np.nan
        return out

    @property
    def D(self) -> float:
        return math.exp(self.log_D)

    # interior axes
    @property
    def A(self):
        return self._pick(np.exp(self.log_first), INTERIOR)

    @property
    def B(self):
        return self._pick(self.scale, INTERIOR)

    @property
    def C(self):
        return self._pick(np.exp(self.log_second), INTERIOR)

    # left-edge axes
    @property
    def E(self):
        return self._pick(self.scale, LEFT)

    @property
    def F(self):
        return self._pick(np.exp(self.log_first), LEFT)

    @property
    def H(self):
        return self._pick(np.exp(self.log_second), LEFT)

    # right-edge axes
    @property
    def G(self):
        return self._pick(self.scale, RIGHT)

    @property
    def J(self):
        return self._pick(np.exp(self.log_first), RIGHT)

    @property
    def K(self):
        return self._pick(np.exp(self.log_second), RIGHT)


def _check_prior(sample: Sample, prior: PriorConfig):
    if sample.n < 2:
        raise ParameterError("Bayesian bandwidths need at least two observations")
    prior.beta_vector(sample.d)


def posterior_coefficients(sample: Sample, prior: PriorConfig, i: int) -> PosteriorCoefficients:
    """Coefficient records of the posterior of ``h_i`` (the ``D_i`` normalizer too).

    The weights carry the common factor ``Gamma(alpha)**-d / (n-1)`` implicitly
    (it cancels in every ratio).
    """
    _check_prior(sample, prior)
    rows = np.array([int(i)])
    t = _pair_terms(sample.data, sample.support.bounds, prior, rows)
    logw = _donor_log_weights(t, rows)[0]
    donors = np.ones(sample.n, dtype=bool)
    donors[i] = False
    return PosteriorCoefficients(
        i=int(i), branch=t["branch"][0], donors=donors, scale=t["scale"][0], kl=t["kl"][0],
        log_first=t["logc1"][0], log_second=t["logc2"][0],
        shape_first=np.broadcast_to(t["shape1"][0], (sample.n, sample.d)),
        shape_second=np.broadcast_to(t["shape2"][0], (sample.n, sample.d)),
        log_weight=logw, log_D=float(logsumexp(logw)), donor_means=_donor_means(t)[0])


def _block_rows(n: int, d: int, budget: int = 4_000_000) -> int:
    return max(1, min(n, budget // max(1, n * d)))


def bayes_adaptive_bandwidths(sample: Sample, prior: PriorConfig, return_info: bool = False):
    """Posterior-mean bandwidths ``(n, d)``, one row per observation.

    Rows are processed in blocks; each row depends only on the data, so the
    result does not depend on block size or worker count.  Rows whose donors
    all carry zero weight fall back to the prior mean ``beta/(alpha-1)``.
    """
    _check_prior(sample, prior)
    X = sample.data
    n, d = X.shape
    bounds = sample.support.bounds
    out = np.empty((n, d))
    fallback = []
    step = _block_rows(n, d)
    for s in range(0, n, step):
        rows = np.arange(s, min(n, s + step))
        t = _pair_terms(X, bounds, prior, rows)
        logw = _donor_log_weights(t, rows)
        means = _donor_means(t)
        top = logw.max(axis=1, keepdims=True)
        dead = ~np.isfinite(top[:, 0])
        wts = np.exp(logw - np.where(np.isfinite(top), top, 0.0))
        wts[dead] = 0.0
        means = np.where(wts[:, :, None] > 0, means, 0.0)
        num = np.einsum("rj,rjd->rd", wts, means)
        den = wts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[rows] = num / den[:, None]
        if dead.any():
            out[rows[dead]] = prior.prior_mean(d)
            fallback.extend(rows[dead].tolist())
    if fallback:
        warnings.warn(f"{len(fallback)} observation(s) had no usable donors; "
                      "used the prior mean bandwidth", RuntimeWarning, stacklevel=2)
    if return_info:
        return out, {"fallback_rows": fallback}
    return out


def _log_ig(h, shape, scale):
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(h) - scale / h


def posterior_density(i: int, sample: Sample, prior: PriorConfig, h) -> np.ndarray:
    """Posterior density of ``h_i`` at one d-vector or an ``(m, d)`` array.

    Integrates to one over the positive orthant.
    """
    c = posterior_coefficients(sample, prior, i)
    H = np.atleast_2d(np.asarray(h, dtype=float))
    if H.shape[1] != sample.d:
        H = H.reshape(-1, sample.d)
    if np.any(H <= 0):
        raise ParameterError("bandwidth arguments must be positive")
    donors = np.flatnonzero(c.donors & np.isfinite(c.log_weight))
    if donors.size == 0:
        raise ParameterError(f"observation {i} has no donors with positive weight")
    sc = c.scale[donors][None]                  # (1, J, d)
    s1 = c.shape_first[donors][None]
    s2 = c.shape_second[donors][None]
    hh = H[:, None, :]                          # (m, 1, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        comp = np.logaddexp(c.log_first[donors][None] + _log_ig(hh, s1, sc),
                            c.log_second[donors][None] + _log_ig(hh, s2, sc))
    logp = logsumexp(comp.sum(axis=2), axis=1) - c.log_D
    out = np.exp(logp)
    return out if np.ndim(h) > 1 else float(out[0])


# ---------------------------------------------------------------------------
# Unbiased cross-validation
# ---------------------------------------------------------------------------


def ucv_objective(sample: Sample, h, cubature: CubatureSpec | None = None,
                  drop_ties: bool = False) -> float:
    """``int f_hat^2 - (2/n) sum_i f_hat_{-i}(X_i)`` for a global bandwidth.

    With ``drop_ties`` the leave-one-out term leaves out every copy of
    ``X_i``.  Without it, tied observations make the objective unbounded
    below as ``h -> 0``.
    """
    h = check_bandwidths(h, sample.n, sample.d)
    if h.ndim != 1:
        raise ParameterError("UCV takes a global bandwidth vector")
    est = DensityEstimate(sample, h, mode="raw", cubature=cubature or CubatureSpec(nodes_per_dim=256))
    return integrate_square(est) - 2.0 * float(np.mean(loo_values(sample, h, drop_ties)))


@dataclass
class UCVResult:
    h: np.ndarray
    value: float
    converged: bool
    nfev: int
    optimizer: NelderMeadResult


def ucv_select(sample: Sample, cubature: CubatureSpec | None = None, starts=(0.05, 0.3, 1.0),
               tol: float = 1e-4, max_iter: int = 500, bounds=(1e-3, 10.0),
               ties: str = "auto", return_result: bool = False):
    """Global bandwidth minimizing UCV (multi-start Nelder-Mead over ``log h``).

    Starting points are ``s * range_j / (b_j - a_j)`` for each ``s`` in
    ``starts``.  ``bounds`` restricts every component; the lower end guards
    against drifting to ``h -> 0``.  ``ties`` is ``"keep"`` (plain
    leave-one-out), ``"drop"`` (leave out all copies of ``X_i``) or ``"auto"``
    (drop only when the sample contains repeated rows).
    """
    if ties not in ("auto", "keep", "drop"):
        raise ParameterError(f"ties must be 'auto', 'keep' or 'drop', got {ties!r}")
    drop = ties == "drop" or (ties == "auto" and has_ties(sample.data))
    cubature = cubature or CubatureSpec(nodes_per_dim=256)
    X = sample.data
    rel_range = (X.max(axis=0) - X.min(axis=0)) / (sample.support.upper - sample.support.lower)
    rel_range = np.where(rel_range > 0, rel_range, 1.0)
    lo, hi = bounds
    pts = [np.clip(s * rel_range, lo * 1.0001, hi * 0.9999) for s in starts]
    res = nelder_mead_min(lambda h: ucv_objective(sample, h, cubature, drop), pts[0], tol=tol,
                          max_iter=max_iter, bounds=bounds, extra_starts=pts[1:])
    out = UCVResult(np.asarray(res.x, dtype=float), res.fun, res.converged, res.nfev, res)
    return out if return_result else out.h
