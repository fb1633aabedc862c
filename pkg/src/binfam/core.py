"""Shared types: weighted samples, moment summaries, logit helpers, chain sampler.

Components are indexed from 0.  A binary vector is a 1-D ``uint8`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ContractViolation(ValueError):
    """A caller-supplied object broke its documented contract."""


class DimensionMismatch(ValueError):
    pass


def as_binary(rows, d: int | None = None) -> np.ndarray:
    """Coerce ``rows`` to a ``uint8`` array of zeros and ones, validating entries."""
    arr = np.asarray(rows)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("binary vectors must contain only 0 and 1")
    arr = arr.astype(np.uint8)
    if d is not None and arr.shape[-1] != d:
        raise DimensionMismatch(f"expected dimension {d}, got {arr.shape[-1]}")
    return arr


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ContractViolation("an explicit seed or Generator is required")
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(frozen=True)
class WeightedSample:
    """``n`` binary rows with nonnegative weights, normalised to sum to one."""

    rows: np.ndarray
    weights: np.ndarray

    def __init__(self, rows, weights=None):
        X = as_binary(rows)
        if X.ndim != 2:
            raise DimensionMismatch("rows must be a 2-D array")
        n = X.shape[0]
        if n < 1:
            raise ValueError("a sample needs at least one row")
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (n,):
                raise DimensionMismatch(f"{w.shape[0] if w.ndim else 0} weights for {n} rows")
            if not np.all(np.isfinite(w)) or (w < 0).any():
                raise ValueError("weights must be finite and nonnegative")
            total = w.sum()
            if total <= 0:
                raise ValueError("weights sum to zero")
            w = w / total
        X.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "rows", X)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    second: np.ndarray
    corr: np.ndarray
    degenerate: np.ndarray  # True where the mean is 0 or 1
    n: int = 0

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def compute_moments(sample: WeightedSample) -> MomentSummary:
    """Weighted first and second moments and the weighted sample correlation.

    Correlations involving a constant column are stored as 0 and the column
    is marked in ``degenerate``; the diagonal of ``corr`` is always 1.
    """
    X = sample.rows.astype(np.float64)
    w = sample.weights
    mean = w @ X
    second = X.T @ (w[:, None] * X)
    second = 0.5 * (second + second.T)
    # both quantities are weighted averages of {0,1}; guard against rounding
    mean = np.clip(mean, 0.0, 1.0)
    np.fill_diagonal(second, mean)
    second = np.clip(second, 0.0, 1.0)
    return _summary_from(mean, second, sample.n)


def _summary_from(mean, second, n):
    var = mean * (1.0 - mean)
    degenerate = var <= 0.0
    sd = np.sqrt(np.where(degenerate, 1.0, var))
    cov = second - np.outer(mean, mean)
    corr = cov / np.outer(sd, sd)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    for a in (mean, second, corr, degenerate):
        a.setflags(write=False)
    return MomentSummary(mean=mean, second=second, corr=corr, degenerate=degenerate, n=n)


def moments_from_arrays(mean, second, n: int = 0) -> MomentSummary:
    """Build a summary from exact (e.g. enumerated) first and second moments."""
    mean = np.array(mean, dtype=np.float64)
    second = np.array(second, dtype=np.float64)
    np.fill_diagonal(second, mean)
    return _summary_from(mean, second, n)


def frechet_bounds(marginals: Sequence[float]) -> tuple[float, float]:
    """Sharp bounds on P(all components in the set equal 1) given their marginals."""
    m = np.asarray(marginals, dtype=np.float64)
    if m.size == 0:
        raise ValueError("frechet_bounds needs a nonempty index set")
    if ((m < 0) | (m > 1)).any():
        raise ValueError("marginals must lie in [0, 1]")
    lower = max(float(m.sum()) - m.size + 1.0, 0.0)
    return lower, float(m.min())


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    if ((p <= 0) | (p >= 1)).any():
        raise ValueError("logit is defined on the open interval (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def logit_inverse(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


class ConditionalProvider:
    """P(component i = 1 | the first i components) for a fixed dimension.

    Subclasses implement :meth:`prob`; :meth:`prob_batch` may be overridden
    with a vectorised version.
    """

    d: int

    def prob(self, prefix: np.ndarray) -> float:
        raise NotImplementedError

    def __call__(self, prefix) -> float:
        return self.prob(np.asarray(prefix, dtype=np.uint8))

    def prob_batch(self, prefixes: np.ndarray) -> np.ndarray:
        return np.array([self.prob(p) for p in prefixes], dtype=np.float64)


class FunctionConditionals(ConditionalProvider):
    def __init__(self, d: int, fn: Callable[[np.ndarray], float]):
        self.d = int(d)
        self._fn = fn

    def prob(self, prefix):
        return float(self._fn(prefix))


def _check_prob(r: float, i: int) -> float:
    if not (0.0 <= r <= 1.0):
        raise ContractViolation(f"conditional probability {r!r} for component {i} is outside [0, 1]")
    return r


def chain_rule_sample(cond: ConditionalProvider, rng) -> tuple[np.ndarray, float]:
    """Draw one vector component by component; also return its probability.

    One uniform is consumed per component, so the result is a deterministic
    function of the generator state.
    """
    rng = make_rng(rng)
    d = cond.d
    y = np.zeros(d, dtype=np.uint8)
    p = 1.0
    for i in range(d):
        r = _check_prob(float(cond(y[:i])), i)
        if rng.random() < r:
            y[i] = 1
            p *= r
        else:
            p *= 1.0 - r
    return y, p


def chain_rule_sample_batch(cond: ConditionalProvider, rng, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`chain_rule_sample` over ``m`` rows.

    Uses ``rng.random((m, d))`` which yields the same stream as ``m * d``
    scalar draws, so row ``k`` matches the ``k``-th sequential call.
    """
    rng = make_rng(rng)
    d = cond.d
    U = rng.random((m, d))
    Y = np.zeros((m, d), dtype=np.uint8)
    p = np.ones(m)
    for i in range(d):
        r = np.asarray(cond.prob_batch(Y[:, :i]), dtype=np.float64)
        if ((r < 0) | (r > 1)).any():
            raise ContractViolation(f"conditional probability outside [0, 1] for component {i}")
        hit = U[:, i] < r
        Y[:, i] = hit
        p *= np.where(hit, r, 1.0 - r)
    return Y, p


@dataclass(frozen=True)
class SampleBatch:
    rows: np.ndarray
    logprob: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)
