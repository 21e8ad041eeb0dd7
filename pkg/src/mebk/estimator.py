"""Multiple extended-beta kernel (MEBK) density estimator.

For a sample ``X`` (n x d) on the box ``[a_1,b_1] x ... x [a_d,b_d]`` the raw
estimate at ``x`` is

    f_hat(x) = (1/n) sum_i prod_j EB_{x_j, h_ij, a_j, b_j}(X_ij)

with either one global bandwidth vector (``h_ij = h_j``) or one row of
bandwidths per observation.  The normalized estimate divides by
``C_n = integral of f_hat over the box``.

Because the product kernel is separable, every integral of ``f_hat`` or
``f_hat**2`` over the box reduces to one-dimensional quadratures per axis;
:func:`normalization_constant` and :func:`integrate_square` exploit that.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ebkernel import Interval, eb_mean_shift_arr, eb_variance_arr, log_eb, log_eb_l2_factor
from .errors import DomainError, ParameterError
from .numerics import CubatureSpec, QMC, TENSOR, integrate_box, tensor_rule

__all__ = [
    "Support",
    "Sample",
    "check_bandwidths",
    "DensityEstimate",
    "kernel_log_terms",
    "mebk_eval",
    "mebk_eval_grid",
    "axis_kernel_matrix",
    "normalization_constant",
    "integrate_square",
    "loo_values",
    "tie_mask",
    "has_ties",
    "leave_one_out_eval",
    "bias_variance_leading_terms",
    "ise",
]


@dataclass(frozen=True)
class Support:
    """Product of closed intervals, one per axis."""

    intervals: tuple

    def __post_init__(self):
        ivs = tuple(iv if isinstance(iv, Interval) else Interval(*iv) for iv in self.intervals)
        if not ivs:
            raise ParameterError("support needs at least one axis")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_bounds(cls, bounds) -> "Support":
        arr = np.asarray(bounds, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        return cls(tuple(Interval(float(a), float(b)) for a, b in arr))

    @property
    def d(self) -> int:
        return len(self.intervals)

    @property
    def bounds(self) -> np.ndarray:
        return np.array([[iv.a, iv.b] for iv in self.intervals], dtype=float)

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def to_list(self) -> list:
        return [[iv.a, iv.b] for iv in self.intervals]


@dataclass(frozen=True)
class Sample:
    """Observations (n x d) together with the support they live on."""

    data: np.ndarray
    support: Support

    def __post_init__(self):
        X = np.asarray(self.data, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise ParameterError("sample must be a non-empty n x d matrix")
        if X.shape[1] != self.support.d:
            raise ParameterError(
                f"sample has {X.shape[1]} columns but support has {self.support.d} axes")
        if not np.all(np.isfinite(X)):
            raise ParameterError("sample contains non-finite values")
        outside = ~self.support.contains(X)
        if outside.any():
            k = int(np.flatnonzero(outside)[0])
            raise DomainError(f"observation {k} = {X[k].tolist()} lies outside the support")
        X = X.copy()
        X.setflags(write=False)
        object.__setattr__(self, "data", X)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def check_bandwidths(h, n: int, d: int) -> np.ndarray:
    """Validate a global ``(d,)`` vector or an adaptive ``(n, d)`` matrix."""
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        h = np.full(d, float(h))
    if h.ndim == 1 and d == 1 and h.shape[0] == n and n != 1:
        h = h[:, None]
    if not (h.shape == (d,) or h.shape == (n, d)):
        raise ParameterError(f"bandwidths must have shape ({d},) or ({n}, {d}), got {h.shape}")
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise ParameterError("bandwidths must be positive and finite")
    return h


def _as_matrix(h: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(h, (n, h.shape[-1])) if h.ndim == 1 else h


def kernel_log_terms(points, data, h, bounds, chunk: int = 4096) -> np.ndarray:
    """``(m, n)`` matrix of ``sum_j log EB_{x_mj, h_ij}(X_ij)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    X = np.asarray(data, dtype=float)
    H = _as_matrix(np.asarray(h, dtype=float), X.shape[0])
    out = np.empty((pts.shape[0], X.shape[0]))
    for s in range(0, pts.shape[0], chunk):
        blk = pts[s:s + chunk]
        acc = np.zeros((blk.shape[0], X.shape[0]))
        for j, (a, b) in enumerate(bounds):
            acc += log_eb(X[None, :, j], blk[:, None, j], H[None, :, j], a, b)
        out[s:s + chunk] = acc
    return out


def axis_kernel_matrix(nodes, data_col, h_col, a: float, b: float) -> np.ndarray:
    """``(g, n)`` matrix of kernel values with targets at ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    return np.exp(log_eb(np.asarray(data_col)[None, :], nodes[:, None],
                         np.asarray(h_col)[None, :], a, b))


class DensityEstimate:
    """A fitted MEBK model.

    Immutable after construction.  ``mode="normalized"`` divides by ``C_n``,
    which is computed on first use with ``cubature`` and then cached.
    """

    def __init__(self, sample: Sample, bandwidths, mode: str = "normalized",
                 cubature: CubatureSpec | None = None, normalization: float | None = None):
        if mode not in ("raw", "normalized"):
            raise ParameterError(f"mode must be 'raw' or 'normalized', got {mode!r}")
        self.sample = sample
        self.bandwidths = check_bandwidths(bandwidths, sample.n, sample.d)
        self.bandwidths.setflags(write=False)
        self.mode = mode
        self.cubature = cubature or CubatureSpec(nodes_per_dim=128)
        self._cn = normalization
        if normalization is not None and not normalization > 0:
            raise ParameterError("normalization constant must be positive")

    @property
    def support(self) -> Support:
        return self.sample.support

    @property
    def adaptive(self) -> bool:
        return self.bandwidths.ndim == 2

    @property
    def normalization(self) -> float:
        """``C_n`` in normalized mode, 1.0 in raw mode."""
        if self.mode == "raw":
            return 1.0
        if self._cn is None:
            self._cn = normalization_constant(self.sample, self.bandwidths, self.cubature)
        return self._cn

    def raw_integral(self) -> float:
        return normalization_constant(self.sample, self.bandwidths, self.cubature)

    def evaluate(self, points) -> np.ndarray:
        """Density at an ``(m, d)`` array of points (or one d-vector)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.sample.d:
            if self.sample.d == 1 and pts.shape[0] == 1:
                pts = pts.T
            else:
                raise ParameterError(f"points must have {self.sample.d} columns")
        inside = self.support.contains(pts)
        if not inside.all():
            k = int(np.flatnonzero(~inside)[0])
            raise DomainError(f"evaluation point {pts[k].tolist()} outside the support")
        logk = kernel_log_terms(pts, self.sample.data, self.bandwidths, self.support.bounds)
        return np.exp(logk).sum(axis=1) / (self.sample.n * self.normalization)

    __call__ = evaluate

    def grid(self, axes: Sequence) -> np.ndarray:
        return mebk_eval_grid(self, axes)

    def with_mode(self, mode: str) -> "DensityEstimate":
        return DensityEstimate(self.sample, self.bandwidths, mode, self.cubature,
                               self._cn if mode == "normalized" else None)


def mebk_eval(est: DensityEstimate, x) -> float:
    """Density of ``est`` at a single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(est.evaluate(x[None, :])[0])


def mebk_eval_grid(est: DensityEstimate, axes: Sequence) -> np.ndarray:
    """Density on the tensor grid spanned by per-axis node lists.

    Builds one ``(g_j, n)`` kernel matrix per axis and contracts them, so the
    cost is ``n * sum(g_j)`` kernel evaluations plus the contraction.
    """
    axes = [np.atleast_1d(np.asarray(g, dtype=float)) for g in axes]
    S = est.support
    if len(axes) != S.d:
        raise ParameterError(f"grid needs {S.d} axes, got {len(axes)}")
    for j, g in enumerate(axes):
        iv = S.intervals[j]
        if np.any((g < iv.a) | (g > iv.b)):
            raise DomainError(f"grid axis {j} has nodes outside [{iv.a}, {iv.b}]")
    X = est.sample.data
    H = _as_matrix(est.bandwidths, X.shape[0])
    mats = [axis_kernel_matrix(g, X[:, j], H[:, j], *S.bounds[j]) for j, g in enumerate(axes)]
    letters = "abcdefghijklm"[:len(mats)]
    expr = ",".join(f"{c}z" for c in letters) + "->" + letters
    vals = np.einsum(expr, *mats, optimize=True)
    return vals / (X.shape[0] * est.normalization)


def _axis_rules(support: Support, cubature: CubatureSpec):
    # per-axis 1-d rules; separable integrands never need QMC
    spec = cubature
    if cubature.method == QMC:
        spec = CubatureSpec(TENSOR, nodes_per_dim=cubature.nodes_per_dim,
                            graded_panels=cubature.graded_panels, grading=cubature.grading)
    return tensor_rule(support.bounds, spec)


def normalization_constant(sample: Sample, bandwidths, cubature: CubatureSpec | None = None,
                           warn: bool = True) -> float:
    """``C_n``: integral of the raw estimate over the support.

    Uses the separable form ``(1/n) sum_i prod_j int EB_{x, h_ij}(X_ij) dx``.
    """
    cubature = cubature or CubatureSpec(nodes_per_dim=128)
    H = _as_matrix(check_bandwidths(bandwidths, sample.n, sample.d), sample.n)
    X = sample.data
    log_mass = np.zeros(sample.n)
    for j, (nodes, w) in enumerate(_axis_rules(sample.support, cubature)):
        a, b = sample.support.bounds[j]
        K = axis_kernel_matrix(nodes, X[:, j], H[:, j], a, b)
        with np.errstate(divide="ignore"):
            log_mass += np.log(w @ K)
    cn = float(np.mean(np.exp(log_mass)))
    if warn and not 0.5 < cn < 2.0:
        warnings.warn(f"normalization constant C_n={cn:.4g} is far from 1", RuntimeWarning,
                      stacklevel=2)
    if not cn > 0:
        raise ParameterError("normalization constant is not positive")
    return cn


def integrate_square(est: DensityEstimate, cubature: CubatureSpec | None = None) -> float:
    """Integral of ``est**2`` over its support (separable Gram form)."""
    cubature = cubature or est.cubature
    X = est.sample.data
    n = X.shape[0]
    H = _as_matrix(est.bandwidths, n)
    rules = _axis_rules(est.support, cubature)
    if est.sample.d == 1:
        nodes, w = rules[0]
        K = axis_kernel_matrix(nodes, X[:, 0], H[:, 0], *est.support.bounds[0])
        fx = K.sum(axis=1) / n
        total = float(w @ (fx * fx))
    else:
        gram = np.ones((n, n))
        for j, (nodes, w) in enumerate(rules):
            K = axis_kernel_matrix(nodes, X[:, j], H[:, j], *est.support.bounds[j])
            gram *= (K * w[:, None]).T @ K
        total = float(gram.sum()) / (n * n)
    return total / est.normalization ** 2


def _loo_log_matrix(X: np.ndarray, H: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    # entry [i, k] = sum_l log EB_{X_il, H_il}(X_kl)
    L = np.zeros((X.shape[0], X.shape[0]))
    for j, (a, b) in enumerate(bounds):
        L += log_eb(X[None, :, j], X[:, None, j], H[:, None, j], a, b)
    return L


def tie_mask(X: np.ndarray) -> np.ndarray:
    """``(n, n)`` boolean matrix, true where rows ``i`` and ``k`` are identical."""
    X = np.asarray(X, dtype=float)
    return np.all(X[:, None, :] == X[None, :, :], axis=2)


def has_ties(X: np.ndarray) -> bool:
    X = np.asarray(X, dtype=float)
    return np.unique(X, axis=0).shape[0] < X.shape[0]


def loo_values(sample: Sample, bandwidths, drop_ties: bool = False) -> np.ndarray:
    """Leave-one-out estimates at every observation, ``(n,)``.

    Observation ``i`` is scored with its own bandwidth row in adaptive mode.
    With ``drop_ties`` every copy of ``X_i`` is left out, not only ``X_i``
    itself; an observation with no distinct partner scores 0.
    """
    if sample.n < 2:
        raise ParameterError("leave-one-out needs at least two observations")
    H = _as_matrix(check_bandwidths(bandwidths, sample.n, sample.d), sample.n)
    K = np.exp(_loo_log_matrix(sample.data, H, sample.support.bounds))
    if not drop_ties:
        np.fill_diagonal(K, 0.0)
        return K.sum(axis=1) / (sample.n - 1)
    same = tie_mask(sample.data)
    K[same] = 0.0
    others = sample.n - same.sum(axis=1)
    return np.where(others > 0, K.sum(axis=1) / np.maximum(others, 1), 0.0)


def leave_one_out_eval(sample: Sample, bandwidths, i: int) -> float:
    """Leave-one-out estimate at observation ``i``."""
    if sample.n < 2:
        raise ParameterError("leave-one-out needs at least two observations")
    h = check_bandwidths(bandwidths, sample.n, sample.d)
    hi = h[i] if h.ndim == 2 else h
    X = sample.data
    others = np.delete(np.arange(sample.n), i)
    acc = np.zeros(others.size)
    for j, (a, b) in enumerate(sample.support.bounds):
        acc += log_eb(X[others, j], X[i, j], hi[j], a, b)
    return float(np.exp(acc).sum() / (sample.n - 1))


def bias_variance_leading_terms(f_derivs: Callable, x, bandwidths, sample_size: int,
                                support: Support, variance_form: str = "kernel"):
    """Leading bias and variance of the fixed-bandwidth estimate at ``x``.

    ``f_derivs(x)`` returns ``(f(x), grad, second_partials)`` with the last two
    of length d.  The bias is ``sum_j s_j f_j + 1/2 sum_j (s_j^2 + v_j) f_jj``
    with ``s_j`` the kernel mean shift and ``v_j`` the kernel variance; the
    variance is ``f(x) * ||prod_j EB||_2^2 / n``.

    ``variance_form="alternative"`` swaps ``v_j`` for the alternative product
    ``{x-a+(b-a)h}{a-x+(b-a)h}/((1+2h)^2 (1+3h))`` (no trailing ``h``), kept
    only for comparison.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    a, b = support.lower, support.upper
    fx, grad, hess = f_derivs(x)
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    hess = np.atleast_1d(np.asarray(hess, dtype=float))
    shift = eb_mean_shift_arr(x, h, a, b)
    if variance_form == "kernel":
        v = eb_variance_arr(x, h, a, b)
    elif variance_form == "alternative":
        w = b - a
        v = (x - a + w * h) * (a - x + w * h) / ((1 + 2 * h) ** 2 * (1 + 3 * h))
    else:
        raise ParameterError(f"unknown variance_form {variance_form!r}")
    bias = float(np.sum(shift * grad) + 0.5 * np.sum((shift ** 2 + v) * hess))
    l2 = math.exp(float(np.sum(log_eb_l2_factor(x, h, a, b))))
    var = float(fx) * l2 / sample_size
    return bias, var


def ise(est: DensityEstimate, density: Callable[[np.ndarray], np.ndarray],
        cubature: CubatureSpec | None = None, box=None) -> float:
    """Integrated squared error ``int (est - density)^2`` over ``box``.

    ``box`` defaults to the estimate's support; the estimate is taken as zero
    outside its support.
    """
    cubature = cubature or est.cubature
    S = est.support
    box = S if box is None else box
    bounds = box.bounds if hasattr(box, "bounds") else np.asarray(box, dtype=float)
    same_box = np.allclose(bounds, S.bounds)
    if cubature.method == TENSOR and same_box:
        rules = tensor_rule(bounds, cubature)
        fhat = mebk_eval_grid(est, [r[0] for r in rules])
        mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        ftrue = np.asarray(density(pts), dtype=float).reshape(fhat.shape)
        wgrid = np.ones(())
        for _, w in rules:
            wgrid = np.multiply.outer(wgrid, w)
        return float(np.sum(wgrid * (fhat - ftrue) ** 2))

    def integrand(pts):
        out = np.zeros(pts.shape[0])
        inside = S.contains(pts)
        if inside.any():
            out[inside] = est.evaluate(pts[inside])
        return (out - np.asarray(density(pts), dtype=float)) ** 2

    return integrate_box(integrand, bounds, cubature)
