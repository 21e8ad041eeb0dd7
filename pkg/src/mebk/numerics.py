"""Numerical services: cubature over boxes, Nelder-Mead, seeded random streams.

Random streams use numpy's Philox4x64 counter-based bit generator.  A stream
is identified by a 64-bit root seed plus an integer path (for example
``(seed, replication_index)``), so replication ``r`` always sees the same
draws no matter how many workers run or in which order they finish.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import IntegrationError, NumericalError, ParameterError

__all__ = [
    "CubatureSpec",
    "box_bounds",
    "gauss_legendre",
    "tensor_rule",
    "qmc_rule",
    "integrate_box",
    "default_cubature",
    "NelderMeadResult",
    "nelder_mead_min",
    "make_rng",
    "worker_count",
    "parallel_map",
    "sample_beta",
    "sample_pert",
    "sample_normal",
    "sample_mvnormal",
    "sample_truncated_mvnormal",
    "sample_logit_normal",
    "sample_mixture",
]

TENSOR = "gauss_legendre_tensor"
QMC = "quasi_monte_carlo"


# ---------------------------------------------------------------------------
# Cubature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubatureSpec:
    """How to integrate over a box.

    ``graded_panels > 1`` switches each axis of the tensor rule to a composite
    Gauss-Legendre rule whose panels shrink geometrically toward both ends
    (ratio ``grading``); useful for integrands with edge spikes.
    """

    method: str = TENSOR
    nodes_per_dim: int = 64
    total_points: int = 2**16
    dimension: int | None = None
    seed: int = 0
    graded_panels: int = 1
    grading: float = 0.25

    def __post_init__(self):
        if self.method not in (TENSOR, QMC):
            raise ParameterError(f"unknown cubature method {self.method!r}")
        if self.method == TENSOR:
            if self.nodes_per_dim < 1:
                raise ParameterError("nodes_per_dim must be positive")
            if self.dimension is not None and self.dimension > 3:
                raise ParameterError("tensor Gauss-Legendre is limited to d <= 3")
        elif self.total_points < 2:
            raise ParameterError("total_points must be at least 2")
        if self.graded_panels < 1 or not 0.0 < self.grading < 1.0:
            raise ParameterError("graded_panels >= 1 and 0 < grading < 1 required")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "nodes_per_dim": self.nodes_per_dim,
            "total_points": self.total_points,
            "dimension": self.dimension,
            "seed": self.seed,
            "graded_panels": self.graded_panels,
            "grading": self.grading,
        }


def default_cubature(d: int, nodes_per_dim: int = 64, total_points: int = 2**16) -> CubatureSpec:
    """Tensor Gauss-Legendre for d <= 3, scrambled Sobol beyond."""
    if d <= 3:
        return CubatureSpec(TENSOR, nodes_per_dim=nodes_per_dim, dimension=d)
    return CubatureSpec(QMC, total_points=total_points, dimension=d)


def box_bounds(box) -> np.ndarray:
    """``(d, 2)`` array of bounds from a Support-like object or pair list."""
    if hasattr(box, "bounds"):
        box = box.bounds
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParameterError(f"box must be a sequence of (a, b) pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 0] >= arr[:, 1]):
        raise ParameterError("box bounds must be finite with a < b on every axis")
    return arr


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1] (read-only arrays)."""
    t, w = np.polynomial.legendre.leggauss(int(n))
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _graded_breaks(panels: int, ratio: float) -> np.ndarray:
    # Panel widths shrink by `ratio` toward each end of [0, 1].
    half = panels // 2
    widths = ratio ** np.arange(half)[::-1]
    if panels % 2:
        widths = np.concatenate([widths, [widths[-1] / ratio], widths[::-1]])
    else:
        widths = np.concatenate([widths, widths[::-1]])
    return np.concatenate([[0.0], np.cumsum(widths) / widths.sum()])


def _axis_rule(a: float, b: float, spec: CubatureSpec) -> tuple[np.ndarray, np.ndarray]:
    t, w = gauss_legendre(spec.nodes_per_dim)
    if spec.graded_panels == 1:
        return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w
    breaks = a + (b - a) * _graded_breaks(spec.graded_panels, spec.grading)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    return nodes.ravel(), weights.ravel()


def tensor_rule(box, spec: CubatureSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-axis (nodes, weights); the full rule is their tensor product."""
    bounds = box_bounds(box)
    return [_axis_rule(a, b, spec) for a, b in bounds]


def qmc_rule(box, spec: CubatureSpec) -> tuple[np.ndarray, float]:
    """Scrambled Sobol points strictly inside the box and their common weight."""
    bounds = box_bounds(box)
    d = bounds.shape[0]
    m = int(np.ceil(np.log2(spec.total_points)))
    u = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(spec.seed)).random_base2(m)
    eps = np.finfo(float).eps
    u = np.clip(u, eps, 1.0 - eps)
    lo, hi = bounds[:, 0], bounds[:, 1]
    vol = float(np.prod(hi - lo))
    return lo + u * (hi - lo), vol / u.shape[0]


def _check_finite(vals: np.ndarray, points: np.ndarray) -> None:
    bad = np.isnan(vals)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        pt = np.atleast_1d(points[k])
        raise IntegrationError(f"integrand returned NaN at point {pt.tolist()}", pt)


def integrate_box(f: Callable[[np.ndarray], np.ndarray], box, spec: CubatureSpec | None = None,
                  chunk: int = 1 << 16) -> float:
    """Integrate ``f`` over a box.

    ``f`` maps an ``(m, d)`` array of points to ``m`` values.  Tensor rules are
    evaluated in chunks and summed in node order, so the result is a
    deterministic function of ``spec``.
    """
    bounds = box_bounds(box)
    d = bounds.shape[0]
    spec = spec or default_cubature(d)
    if spec.method == QMC:
        pts, w = qmc_rule(bounds, spec)
        total = 0.0
        for s in range(0, pts.shape[0], chunk):
            block = pts[s:s + chunk]
            vals = np.asarray(f(block), dtype=float)
            _check_finite(vals, block)
            total += float(np.sum(vals))
        return total * w
    if d > 3:
        raise ParameterError("tensor Gauss-Legendre is limited to d <= 3")
    axes = tensor_rule(bounds, spec)
    grids = np.meshgrid(*[n for n, _ in axes], indexing="ij")
    wgrid = np.ones(())
    for _, w in axes:
        wgrid = np.multiply.outer(wgrid, w)
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wflat = wgrid.ravel()
    total = 0.0
    for s in range(0, pts.shape[0], chunk):
        block = pts[s:s + chunk]
        vals = np.asarray(f(block), dtype=float)
        _check_finite(vals, block)
        total += float(np.dot(wflat[s:s + chunk], vals))
    return total


# ---------------------------------------------------------------------------
# Minimization
# ---------------------------------------------------------------------------


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    converged: bool
    nit: int
    nfev: int
    starts: list = field(default_factory=list)

    def __iter__(self):
        # allows ``argmin, value = nelder_mead_min(...)``
        yield self.x
        yield self.fun


def nelder_mead_min(objective: Callable[[np.ndarray], float], start, tol: float = 1e-6,
                    max_iter: int = 2000, log_space: bool = True,
                    bounds: tuple[float, float] | None = None,
                    extra_starts: Sequence = ()) -> NelderMeadResult:
    """Minimize ``objective`` over the positive orthant with Nelder-Mead.

    The simplex lives in ``log(h)`` when ``log_space`` is set, so every trial
    point is strictly positive.  ``bounds=(lo, hi)`` clamps the search to a box
    (in the original scale) by returning ``+inf`` outside.  Convergence means
    the simplex diameter dropped below ``tol``; otherwise the best point seen is
    returned with ``converged=False`` and a warning.
    """
    starts = [np.atleast_1d(np.asarray(start, dtype=float))]
    starts += [np.atleast_1d(np.asarray(s, dtype=float)) for s in extra_starts]
    if log_space and any(np.any(s <= 0) for s in starts):
        raise ParameterError("log-space search needs strictly positive starting points")

    lo, hi = (None, None) if bounds is None else (float(bounds[0]), float(bounds[1]))

    def to_x(z):
        return np.exp(z) if log_space else z

    def wrapped(z):
        x = to_x(z)
        if lo is not None and (np.any(x < lo) or np.any(x > hi)):
            return np.inf
        v = float(objective(x))
        return v if np.isfinite(v) else np.inf

    best = None
    runs = []
    for s in starts:
        z0 = np.log(s) if log_space else s
        if not np.isfinite(wrapped(z0)):
            raise NumericalError(f"objective is not finite at start {s.tolist()}")
        res = minimize(wrapped, z0, method="Nelder-Mead",
                       options={"xatol": tol, "fatol": np.inf, "maxiter": max_iter,
                                "maxfev": 4 * max_iter})
        run = NelderMeadResult(to_x(res.x), float(res.fun), bool(res.success),
                               int(res.nit), int(res.nfev))
        runs.append(run)
        if best is None or run.fun < best.fun:
            best = run
    best = NelderMeadResult(best.x, best.fun, best.converged, best.nit,
                            sum(r.nfev for r in runs), starts=runs)
    if not best.converged:
        warnings.warn("Nelder-Mead hit max_iter before the simplex collapsed", RuntimeWarning,
                      stacklevel=2)
    return best


# ---------------------------------------------------------------------------
# Random streams and samplers
# ---------------------------------------------------------------------------


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and the stream path ``stream``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParameterError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    """Thread count from ``MEBK_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MEBK_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Ordered map; results are assembled by position, never by completion."""
    workers = worker_count() if workers is None else max(1, int(workers))
    items = list(items)
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_beta(rng: np.random.Generator, shape1: float, shape2: float, size=None):
    if shape1 <= 0 or shape2 <= 0:
        raise ParameterError("beta shapes must be positive")
    return rng.beta(shape1, shape2, size=size)


def sample_pert(rng: np.random.Generator, interval, shape1: float, shape2: float, size=None):
    """Beta(shape1, shape2) rescaled to ``interval`` (an Interval or (a, b))."""
    a, b = (interval.a, interval.b) if hasattr(interval, "a") else map(float, interval)
    return a + (b - a) * sample_beta(rng, shape1, shape2, size)


def sample_normal(rng: np.random.Generator, mean: float, sd: float, size=None):
    if sd <= 0:
        raise ParameterError("sd must be positive")
    return rng.normal(mean, sd, size=size)


def _cholesky(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise ParameterError("covariance must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ParameterError("covariance matrix is not positive definite") from None


def sample_mvnormal(rng: np.random.Generator, mean, cov, size: int = 1) -> np.ndarray:
    """``(size, d)`` draws via a Cholesky factor (rejects non-PD covariance)."""
    mean = np.asarray(mean, dtype=float)
    L = _cholesky(cov)
    z = rng.standard_normal((int(size), mean.shape[0]))
    return mean + z @ L.T


def sample_truncated_mvnormal(rng: np.random.Generator, mean, cov, box, size: int = 1,
                              max_rejections: int = 10**6, stats: dict | None = None) -> np.ndarray:
    """Rejection sampling of a normal restricted to ``box``.

    Draws in batches; fails after ``max_rejections`` consecutive rejections.
    If ``stats`` is given, it receives ``proposed`` and ``accepted`` counts.
    """
    mean = np.asarray(mean, dtype=float)
    bounds = box_bounds(box)
    L = _cholesky(cov)
    size = int(size)
    out = np.empty((size, mean.shape[0]))
    filled = proposed = streak = 0
    while filled < size:
        batch = max(64, 2 * (size - filled))
        z = mean + rng.standard_normal((batch, mean.shape[0])) @ L.T
        ok = np.all((z >= bounds[:, 0]) & (z <= bounds[:, 1]), axis=1)
        for k in range(batch):
            proposed += 1
            if ok[k]:
                out[filled] = z[k]
                filled += 1
                streak = 0
                if filled == size:
                    break
            else:
                streak += 1
                if streak >= max_rejections:
                    raise NumericalError(
                        f"truncated normal: {max_rejections} consecutive rejections")
    if stats is not None:
        stats["proposed"] = stats.get("proposed", 0) + proposed
        stats["accepted"] = stats.get("accepted", 0) + size
    return out


def sample_logit_normal(rng: np.random.Generator, mu: float, sigma: float, size=None):
    """Logistic transform of Normal(mu, sigma); values lie in (0, 1)."""
    z = sample_normal(rng, mu, sigma, size)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sample_mixture(rng: np.random.Generator, weights, components: Sequence[Callable],
                   size: int = 1, return_labels: bool = False):
    """Draw component labels, then fill each group from its sampler.

    ``components[k](rng, m)`` must return ``m`` draws (shape ``(m,)`` or
    ``(m, d)``).
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
        raise ParameterError("mixture weights must be nonnegative and sum to one")
    labels = rng.choice(len(weights), size=int(size), p=weights)
    parts = {}
    for k in range(len(weights)):
        m = int(np.sum(labels == k))
        parts[k] = np.asarray(components[k](rng, m)) if m else None
    probe = next(p for p in parts.values() if p is not None)
    out = np.empty((int(size),) + probe.shape[1:])
    for k, p in parts.items():
        if p is not None:
            out[labels == k] = p
    return (out, labels) if return_labels else out
