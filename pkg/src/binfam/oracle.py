"""Exhaustive enumeration of small binary spaces.

Every state of {0,1}^d is an integer whose bit ``i`` holds component ``i``
(little-endian).  These routines are the ground truth the family modules are
checked against, so they stay deliberately naive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from binfam import kernels
from binfam.core import ConditionalProvider, as_binary, make_rng

MAX_ORACLE_DIM = 20


class OracleDimensionError(ValueError):
    pass


@lru_cache(maxsize=32)
def _states(d: int) -> np.ndarray:
    idx = np.arange(1 << d, dtype=np.int64)
    S = ((idx[:, None] >> np.arange(d)[None, :]) & 1).astype(np.uint8)
    S.setflags(write=False)
    return S


def all_states(d: int) -> np.ndarray:
    """All 2^d binary vectors, row ``k`` being the encoding of integer ``k``."""
    if d < 0 or d > MAX_ORACLE_DIM:
        raise OracleDimensionError(f"enumeration supports 0 <= d <= {MAX_ORACLE_DIM}, got {d}")
    return _states(d)


def encode(rows) -> np.ndarray:
    Y = as_binary(rows)
    weights = 1 << np.arange(Y.shape[-1], dtype=np.int64)
    return Y.astype(np.int64) @ weights


def _index_set(I: Iterable[int], d: int) -> tuple[int, ...]:
    I = tuple(int(i) for i in I)
    for i in I:
        if not 0 <= i < d:
            raise IndexError(f"component {i} out of range for d={d}")
    if len(set(I)) != len(I):
        raise ValueError("index set has repeated entries")
    return I


def _mask(I: Iterable[int]) -> int:
    m = 0
    for i in I:
        m |= 1 << i
    return m


@dataclass(frozen=True)
class ExplicitDistribution:
    """Dense table of all 2^d probabilities.

    ``nonnegative`` is False for signed tables, which arise from truncated
    expansions and from linear-quadratic fits; such tables are still
    returned so the caller can inspect the failure.
    """

    d: int
    probs: np.ndarray
    nonnegative: bool = True

    def __init__(self, d: int, probs, allow_negative: bool = False):
        if d > MAX_ORACLE_DIM:
            raise OracleDimensionError(f"explicit tables are capped at d={MAX_ORACLE_DIM}")
        p = np.array(probs, dtype=np.float64)
        if p.shape != (1 << d,):
            raise ValueError(f"table for d={d} needs {1 << d} entries, got {p.shape}")
        total = p.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        nonneg = bool((p >= 0).all())
        if not nonneg and not allow_negative:
            raise ValueError("table has negative entries")
        p.setflags(write=False)
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "nonnegative", nonneg)

    def prob(self, gamma) -> float:
        return float(self.probs[encode(np.atleast_2d(gamma))[0]])

    def means(self) -> np.ndarray:
        return self.probs @ all_states(self.d)

    def second_moments(self) -> np.ndarray:
        S = all_states(self.d).astype(np.float64)
        return S.T @ (self.probs[:, None] * S)


def uniform(d: int) -> ExplicitDistribution:
    return ExplicitDistribution(d, np.full(1 << d, 1.0 / (1 << d)))


def point_mass(gamma) -> ExplicitDistribution:
    g = as_binary(gamma)
    p = np.zeros(1 << g.shape[0])
    p[encode(g[None, :])[0]] = 1.0
    return ExplicitDistribution(g.shape[0], p)


def random_table(d: int, rng, positive: bool = True) -> ExplicitDistribution:
    rng = make_rng(rng)
    p = rng.random(1 << d) + (0.05 if positive else 0.0)
    return ExplicitDistribution(d, p / p.sum())


def cross_moment(dist: ExplicitDistribution, I: Iterable[int]) -> float:
    """P(all components in ``I`` equal 1); the empty set gives 1."""
    I = _index_set(I, dist.d)
    m = _mask(I)
    idx = np.arange(1 << dist.d)
    return float(dist.probs[(idx & m) == m].sum())


def correlation_order(dist: ExplicitDistribution, I: Iterable[int]) -> float:
    I = _index_set(I, dist.d)
    S = all_states(dist.d).astype(np.float64)
    m = dist.means()
    prod = np.ones(1 << dist.d)
    for i in I:
        if not 0.0 < m[i] < 1.0:
            raise ValueError(f"component {i} is degenerate (mean {m[i]})")
        prod *= (S[:, i] - m[i]) / np.sqrt(m[i] * (1.0 - m[i]))
    return float(dist.probs @ prod)


def marginalize(dist: ExplicitDistribution, I: Iterable[int]) -> ExplicitDistribution:
    """Marginal table over the components ``I``, in the order given."""
    I = _index_set(I, dist.d)
    if not I:
        raise ValueError("marginalize needs a nonempty index set")
    S = all_states(dist.d)
    new_idx = S[:, list(I)].astype(np.int64) @ (1 << np.arange(len(I), dtype=np.int64))
    table = np.bincount(new_idx, weights=dist.probs, minlength=1 << len(I))
    return ExplicitDistribution(len(I), table, allow_negative=not dist.nonnegative)


def prefix_marginals(dist: ExplicitDistribution) -> list[np.ndarray]:
    """``out[k]`` is the marginal table of the first ``k`` components (k = 0..d)."""
    out = [np.array([1.0])]
    for k in range(1, dist.d + 1):
        out.append(dist.probs.reshape(1 << (dist.d - k), 1 << k).sum(axis=0))
    return out


class TableConditionals(ConditionalProvider):
    """Chain-rule conditionals read off an explicit table.

    A prefix of probability zero yields 0; the count of such queries is
    kept in ``zero_prefix_hits``.
    """

    def __init__(self, dist: ExplicitDistribution):
        self.d = dist.d
        self._marg = prefix_marginals(dist)
        self.zero_prefix_hits = 0

    def prob(self, prefix):
        i = len(prefix)
        code = int(encode(np.asarray(prefix, dtype=np.uint8)[None, :])[0]) if i else 0
        t = self._marg[i + 1]
        p1 = t[code | (1 << i)]
        p0 = t[code]
        tot = p1 + p0
        if tot <= 0.0:
            self.zero_prefix_hits += 1
            return 0.0
        return float(min(max(p1 / tot, 0.0), 1.0))

    def prob_batch(self, prefixes):
        prefixes = np.asarray(prefixes, dtype=np.uint8)
        i = prefixes.shape[1]
        code = encode(prefixes) if i else np.zeros(prefixes.shape[0], dtype=np.int64)
        t = self._marg[i + 1]
        p1 = t[code | (1 << i)]
        tot = p1 + t[code]
        zero = tot <= 0.0
        self.zero_prefix_hits += int(zero.sum())
        r = np.where(zero, 0.0, p1 / np.where(zero, 1.0, tot))
        return np.clip(r, 0.0, 1.0)


def conditionals(dist: ExplicitDistribution) -> TableConditionals:
    return TableConditionals(dist)


# --- Bahadur expansion -----------------------------------------------------


def _standardized_products(means: np.ndarray, d: int) -> np.ndarray:
    """Matrix V with V[s, I] = prod_{i in I} (s_i - m_i) / sd_i over states s, subsets I."""
    S = all_states(d).astype(np.float64)
    Z = (S - means) / np.sqrt(means * (1.0 - means))
    V = np.ones((1 << d, 1 << d))
    for mask in range(1, 1 << d):
        low = (mask & -mask).bit_length() - 1
        V[:, mask] = V[:, mask ^ (1 << low)] * Z[:, low]
    return V


def extract_correlations(dist: ExplicitDistribution) -> tuple[np.ndarray, dict[tuple[int, ...], float]]:
    """Means and all correlations of order >= 2, keyed by sorted index tuples."""
    m = dist.means()
    if ((m <= 0) | (m >= 1)).any():
        raise ValueError("every mean must lie strictly inside (0, 1)")
    V = _standardized_products(m, dist.d)
    c = dist.probs @ V
    out = {}
    for mask in range(1 << dist.d):
        if bin(mask).count("1") >= 2:
            out[tuple(i for i in range(dist.d) if mask >> i & 1)] = float(c[mask])
    return m, out


def bahadur_reconstruct(means, correlations: Mapping[Iterable[int], float]) -> ExplicitDistribution:
    """Product distribution times ``1 + sum_I c_I v_I``; missing correlations count as zero.

    The result can be signed if the correlations are truncated or
    inconsistent; check ``.nonnegative``.
    """
    m = np.asarray(means, dtype=np.float64)
    d = m.shape[0]
    if ((m <= 0) | (m >= 1)).any():
        raise ValueError("means must lie strictly inside (0, 1)")
    coef = np.zeros(1 << d)
    coef[0] = 1.0
    for I, c in correlations.items():
        I = _index_set(I, d)
        if len(I) < 2:
            if len(I) == 1 and abs(c) > 0:
                raise ValueError("first-order correlations are identically zero")
            continue
        coef[_mask(I)] = float(c)
    V = _standardized_products(m, d)
    S = all_states(d).astype(np.float64)
    prod = np.prod(np.where(S == 1, m, 1.0 - m), axis=1)
    table = prod * (V @ coef)
    return ExplicitDistribution(d, table, allow_negative=True)


# --- alias table -----------------------------------------------------------


@dataclass(frozen=True)
class AliasTable:
    d: int
    threshold: np.ndarray
    alias: np.ndarray

    def probabilities(self) -> np.ndarray:
        """Reconstruct the source probabilities from the table."""
        n = self.threshold.shape[0]
        p = self.threshold.copy()
        np.add.at(p, self.alias, 1.0 - self.threshold)
        return p / n


def build_alias(dist: ExplicitDistribution) -> AliasTable:
    if not dist.nonnegative:
        raise ValueError("alias tables need a nonnegative distribution")
    thresh, alias = kernels.alias_build(dist.probs)
    return AliasTable(dist.d, np.asarray(thresh), np.asarray(alias, dtype=np.int64))


def alias_sample(table: AliasTable, rng, m: int | None = None) -> np.ndarray:
    """One draw (``m=None``) or an ``(m, d)`` batch."""
    rng = make_rng(rng)
    k = 1 if m is None else m
    n = table.threshold.shape[0]
    col = rng.integers(0, n, size=k)
    u = rng.random(k)
    idx = np.where(u < table.threshold[col], col, table.alias[col])
    rows = all_states(table.d)[idx]
    return rows[0].copy() if m is None else rows


# --- family enumeration ----------------------------------------------------


def enumerate_family(family, d: int | None = None) -> ExplicitDistribution:
    """Tabulate and normalise a family over all 2^d states.

    ``family`` must expose ``log_unnormalized(states)`` or
    ``unnormalized(states)``.  Signed values are kept and flagged via
    ``nonnegative=False`` with a warning.
    """
    d = family.d if d is None else d
    if d != getattr(family, "d", d):
        raise ValueError("dimension mismatch between family and requested d")
    if d > MAX_ORACLE_DIM:
        raise OracleDimensionError(f"enumeration is capped at d={MAX_ORACLE_DIM}")
    S = all_states(d)
    if hasattr(family, "log_unnormalized"):
        lv = np.asarray(family.log_unnormalized(S), dtype=np.float64)
        v = np.exp(lv - lv.max())
    elif hasattr(family, "unnormalized"):
        v = np.asarray(family.unnormalized(S), dtype=np.float64)
    else:
        raise TypeError(f"{type(family).__name__} does not support pointwise evaluation")
    total = v.sum()
    if not total > 0:
        raise ValueError("unnormalized values do not have a positive total")
    table = v / total
    if (table < 0).any():
        warnings.warn("family takes negative values; table flagged as not a distribution", stacklevel=2)
    return ExplicitDistribution(d, table, allow_negative=True)


def tv_distance(p: ExplicitDistribution | np.ndarray, q: ExplicitDistribution | np.ndarray) -> float:
    a = p.probs if isinstance(p, ExplicitDistribution) else np.asarray(p)
    b = q.probs if isinstance(q, ExplicitDistribution) else np.asarray(q)
    return 0.5 * float(np.abs(a - b).sum())


def kl_divergence(p: ExplicitDistribution, q: ExplicitDistribution) -> float:
    """KL(p || q); infinite when p charges a state q does not."""
    a, b = p.probs, q.probs
    sup = a > 0
    if (b[sup] <= 0).any():
        return float("inf")
    return float(np.sum(a[sup] * (np.log(a[sup]) - np.log(b[sup]))))


def empirical_table(rows, d: int, weights=None) -> ExplicitDistribution:
    codes = encode(rows)
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    counts = np.bincount(codes, weights=w, minlength=1 << d).astype(np.float64)
    return ExplicitDistribution(d, counts / counts.sum())


def subsets(d: int, min_size: int = 1):
    for k in range(min_size, d + 1):
        yield from combinations(range(d), k)
