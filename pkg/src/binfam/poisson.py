"""Poisson reduction family.

Independent counts ``v_k ~ Poisson(lam_k)`` are shared between components;
component ``i`` is 1 exactly when every count in its set ``S_i`` is zero.
Only nonnegative dependence is representable.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from binfam import kernels
from binfam.core import MomentSummary, SampleBatch, WeightedSample, as_binary, compute_moments, make_rng

log = logging.getLogger(__name__)

FAMILY = "poisson"
MAX_MASS_ZEROS = 20
MAX_MASK_VARS = 62
MAX_BRUTE_VARS = 20


class BudgetExceeded(ValueError):
    pass


class PoissonFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PoiParams:
    """``sets[i]`` lists the (0-based) counts feeding component ``i``."""

    sets: tuple
    lam: np.ndarray

    family = FAMILY

    def __post_init__(self):
        lam = np.array(self.lam, dtype=np.float64).ravel()
        if not (np.isfinite(lam).all() and (lam > 0).all()):
            raise ValueError("Poisson rates must be positive and finite")
        n = lam.shape[0]
        sets = tuple(tuple(sorted(set(int(k) for k in S))) for S in self.sets)
        for i, S in enumerate(sets):
            if not S:
                raise ValueError(f"set {i} is empty")
            if S[0] < 0 or S[-1] >= n:
                raise ValueError(f"set {i} refers to a count outside 0..{n - 1}")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sets", sets)

    @property
    def d(self) -> int:
        return len(self.sets)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def incidence(self) -> np.ndarray:
        M = np.zeros((self.d, self.n), dtype=np.int64)
        for i, S in enumerate(self.sets):
            M[i, list(S)] = 1
        return M

    def masks(self) -> np.ndarray:
        if self.n > MAX_MASK_VARS:
            raise BudgetExceeded(f"bitmask evaluation supports at most {MAX_MASK_VARS} counts")
        return np.array([sum(1 << k for k in S) for S in self.sets], dtype=np.int64)

    def sample(self, rng, m: int) -> SampleBatch:
        return poi_sample(self, rng, m)

    def log_unnormalized(self, states) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log([poi_mass(self, g) for g in np.atleast_2d(states)])


def _union_rate(params: PoiParams, I: Iterable[int]) -> float:
    U = set()
    for i in I:
        U.update(params.sets[i])
    return float(params.lam[sorted(U)].sum()) if U else 0.0


def poi_cross_moment(params: PoiParams, I: Iterable[int]) -> float:
    """P(gamma_i = 1 for all i in I): no count in the union of the S_i fires."""
    return float(np.exp(-_union_rate(params, I)))


def poi_cross_moment_intersection(params: PoiParams, I: Iterable[int]) -> float:
    """Same expression with the intersection of the S_i; incorrect, kept for contrast checks."""
    I = list(I)
    if not I:
        return 1.0
    common = set(params.sets[I[0]])
    for i in I[1:]:
        common &= set(params.sets[i])
    return float(np.exp(-params.lam[sorted(common)].sum())) if common else 1.0


def poi_mass(params: PoiParams, gamma) -> float:
    """Exact mass by inclusion-exclusion over the zero components (at most 20)."""
    g = as_binary(gamma, params.d)
    ones = np.flatnonzero(g == 1)
    zeros = np.flatnonzero(g == 0)
    if zeros.shape[0] > MAX_MASS_ZEROS:
        raise BudgetExceeded(f"{zeros.shape[0]} zero components exceed the budget of {MAX_MASS_ZEROS}")
    masks = params.masks()
    covered = 0
    for i in ones:
        covered |= int(masks[i])
    base = poi_cross_moment(params, ones)
    rest = np.array([int(masks[i]) & ~covered for i in zeros], dtype=np.int64)
    v = base * (1.0 - kernels.exclusion_sum(rest, params.lam))
    return max(v, 0.0)


def poi_mass_intersection(params: PoiParams, gamma) -> float:
    """Mass formula with intersections in place of unions; incorrect, kept for contrast checks."""
    g = as_binary(gamma, params.d)
    ones = [int(i) for i in np.flatnonzero(g == 1)]
    zeros = [int(i) for i in np.flatnonzero(g == 0)]
    total = 0.0
    for t in range(1, len(zeros) + 1):
        for I in itertools.combinations(zeros, t):
            total += (-1) ** (t - 1) * poi_cross_moment_intersection(params, list(I) + ones)
    return poi_cross_moment_intersection(params, ones) - total if ones else 1.0 - total


def poi_table_bruteforce(params: PoiParams) -> np.ndarray:
    """Mass table (little-endian state order) from all zero/positive patterns of the counts."""
    n, d = params.n, params.d
    if n > MAX_BRUTE_VARS:
        raise BudgetExceeded(f"brute force limited to {MAX_BRUTE_VARS} counts")
    pz = np.exp(-params.lam)
    Z = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(bool)  # True: count is zero
    w = np.prod(np.where(Z, pz, 1.0 - pz), axis=1)
    M = params.incidence().astype(bool)
    # component i is one iff no count in S_i is positive
    pos = ~Z
    G = ~(pos[:, None, :] & M[None, :, :]).any(axis=2)
    codes = G.astype(np.int64) @ (1 << np.arange(d, dtype=np.int64))
    return np.bincount(codes, weights=w, minlength=1 << d)


def poi_sample(params: PoiParams, rng, m: int | None = None):
    rng = make_rng(rng)
    single = m is None
    V = rng.poisson(params.lam, size=(1 if single else m, params.n))
    Y = ((V @ params.incidence().T) == 0).astype(np.uint8)
    if single:
        return Y[0]
    return SampleBatch(Y, None)


@dataclass(frozen=True)
class PoiFit:
    params: PoiParams
    shared_pairs: list = field(default_factory=list)
    dropped_negative: list = field(default_factory=list)
    skipped_capped: list = field(default_factory=list)
    skipped_budget: list = field(default_factory=list)
    mean_clamped: list = field(default_factory=list)


def fit_poi_greedy(data, delta: float = 0.0, max_vars: int = MAX_MASK_VARS) -> PoiFit:
    """One private count per component plus one shared count per positive pair.

    Pairs are taken by decreasing correlation.  Holding the component means
    fixed, the shared rate that reproduces the pair moment is
    ``log(m_ij / (m_i m_j))``; it is accepted only if both components still
    have nonnegative private rate left.  Pairs with negative correlation cannot
    be represented and are dropped.
    """
    moments: MomentSummary = compute_moments(data) if isinstance(data, WeightedSample) else data
    d = moments.d
    n_obs = moments.n
    lo = 1.0 / (2.0 * n_obs) if n_obs > 0 else 1e-12
    mean = np.clip(moments.mean, lo, 1.0 - lo)
    clamped = [int(i) for i in np.flatnonzero(mean != moments.mean)]
    total = -np.log(mean)
    residual = total.copy()

    dropped, capped, budget, shared = [], [], [], []
    cand = []
    for i in range(d):
        for j in range(i + 1, d):
            r = float(moments.corr[i, j])
            if r < 0 and abs(r) > delta:
                dropped.append((i, j))
            elif r > 0 and r > delta:
                cand.append((-r, i, j))
    cand.sort()
    for _, i, j in cand:
        mij = float(moments.second[i, j])
        if mij <= 0:
            capped.append((i, j))
            continue
        rate = float(np.log(mij) + total[i] + total[j])
        if rate <= 0:
            continue
        if rate > residual[i] or rate > residual[j]:
            capped.append((i, j))
            continue
        if d + len(shared) >= max_vars:
            budget.append((i, j))
            continue
        residual[i] -= rate
        residual[j] -= rate
        shared.append(((i, j), rate))
    if dropped:
        warnings.warn(f"negative correlations cannot be represented; dropped pairs {dropped}", PoissonFitWarning, stacklevel=2)
    if capped:
        warnings.warn(f"shared rate would exceed a private rate; skipped pairs {capped}", PoissonFitWarning, stacklevel=2)
    if budget:
        warnings.warn(f"count budget of {max_vars} reached; skipped pairs {budget}", PoissonFitWarning, stacklevel=2)

    sets = [[] for _ in range(d)]
    lam = []
    for i in range(d):
        if residual[i] > 0:
            sets[i].append(len(lam))
            lam.append(float(residual[i]))
    for (i, j), rate in shared:
        sets[i].append(len(lam))
        sets[j].append(len(lam))
        lam.append(rate)
    params = PoiParams(tuple(tuple(s) for s in sets), np.array(lam))
    return PoiFit(params, [p for p, _ in shared], dropped, capped, budget, clamped)

