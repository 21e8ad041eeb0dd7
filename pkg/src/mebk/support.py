"""Support policies and two-stage support estimation.

When the box the data live on is unknown, it is estimated by extending the
per-axis sample range by the adaptive bandwidths of the extreme observations:

    [X_(1)j - h_(1)j,  X_(n)j + h_(n)j]  for every axis j,

where ``h_(1)j`` (``h_(n)j``) is the j-th bandwidth of the observation holding
the minimum (maximum) of axis j.  Bandwidths come from one Bayes adaptive pass
on the sample-range box; the extension is applied once, without iterating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandwidth import PriorConfig, bayes_adaptive_bandwidths
from .ebkernel import Interval
from .errors import DomainError, ParameterError
from .estimator import Sample, Support

__all__ = [
    "GIVEN",
    "SAMPLE_RANGE",
    "ESTIMATED",
    "SupportPolicy",
    "sample_range",
    "estimate_support",
    "resolve_support",
]

GIVEN = "given"
SAMPLE_RANGE = "sample_range"
ESTIMATED = "estimated"
_MODES = (GIVEN, SAMPLE_RANGE, ESTIMATED)


@dataclass(frozen=True)
class SupportPolicy:
    """How the estimation box is obtained.

    ``inflation`` holds one ``(left, right)`` pair of nonnegative margins per
    axis, added outside the resolved box.
    """

    mode: str
    given: Support | None = None
    inflation: tuple | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ParameterError(f"support mode must be one of {_MODES}, got {self.mode!r}")
        if self.mode == GIVEN and self.given is None:
            raise ParameterError("mode 'given' needs a support")
        if self.inflation is not None:
            infl = tuple((float(lo), float(hi)) for lo, hi in self.inflation)
            if any(lo < 0 or hi < 0 for lo, hi in infl):
                raise ParameterError("inflation margins must be nonnegative")
            object.__setattr__(self, "inflation", infl)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "given": None if self.given is None else self.given.to_list(),
            "inflation": None if self.inflation is None else [list(p) for p in self.inflation],
        }


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ParameterError("data must be a non-empty (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ParameterError("data contain non-finite values")
    return X


def sample_range(X) -> Support:
    """Per-axis ``[min, max]`` box; fails on a constant column."""
    X = _as_matrix(X)
    lo, hi = X.min(axis=0), X.max(axis=0)
    flat = np.flatnonzero(~(hi > lo))
    if flat.size:
        raise ParameterError(f"column {int(flat[0])} is constant; its range has zero width")
    return Support(tuple(Interval(a, b) for a, b in zip(lo, hi)))


def estimate_support(X, prior: PriorConfig, return_bandwidths: bool = False):
    """Two-stage support estimate for an ``(n, d)`` sample.

    Stage one fits Bayes adaptive bandwidths on the sample-range box.  Stage
    two widens each axis by the bandwidths of the observations holding that
    axis' minimum and maximum (first index on ties).

    Returns
    -------
    Support, or ``(Support, bandwidths)`` with the stage-one ``(n, d)``
    bandwidths when ``return_bandwidths`` is true.
    """
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise ParameterError("support estimation needs at least two observations")
    box = sample_range(X)
    H = bayes_adaptive_bandwidths(Sample(X, box), prior)
    lo_idx = np.argmin(X, axis=0)
    hi_idx = np.argmax(X, axis=0)
    cols = np.arange(X.shape[1])
    lower = X[lo_idx, cols] - H[lo_idx, cols]
    upper = X[hi_idx, cols] + H[hi_idx, cols]
    est = Support(tuple(Interval(a, b) for a, b in zip(lower, upper)))
    return (est, H) if return_bandwidths else est


def resolve_support(X, policy: SupportPolicy, prior: PriorConfig | None = None) -> Support:
    """Box prescribed by ``policy`` for the data ``X``."""
    X = _as_matrix(X)
    if policy.mode == GIVEN:
        box = policy.given
        if box.d != X.shape[1]:
            raise ParameterError(f"support has {box.d} axes, data have {X.shape[1]}")
        if not box.contains(X).all():
            raise DomainError("data fall outside the given support")
    elif policy.mode == SAMPLE_RANGE:
        box = sample_range(X)
    else:
        if prior is None:
            raise ParameterError("estimated support needs a prior")
        box = estimate_support(X, prior)
    if policy.inflation is not None:
        if len(policy.inflation) != box.d:
            raise ParameterError("inflation needs one (left, right) pair per axis")
        box = Support(tuple(Interval(iv.a - lo, iv.b + hi)
                            for iv, (lo, hi) in zip(box.intervals, policy.inflation)))
    return box
