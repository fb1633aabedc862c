"""Linear-quadratic family  q(g) = mu * (a0 + g' A g).

Cross-moments, prefix marginals and the chain-rule conditionals are all
closed-form and polynomial in d.  Fitted parameters frequently produce
negative masses; every path that depends on nonnegativity raises
:class:`NegativeMass` unless ``force`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

from binfam import kernels
from binfam.core import ConditionalProvider, SampleBatch, WeightedSample, as_binary, compute_moments, make_rng

FAMILY = "linquad"


class NegativeMass(ArithmeticError):
    """The fitted function is not a distribution: a partial sum went negative."""

    def __init__(self, prefix, message: str | None = None):
        self.prefix = tuple(int(v) for v in prefix)
        super().__init__(message or f"negative mass below prefix {self.prefix}")


class SingularSystem(np.linalg.LinAlgError):
    pass


def tri_index(i: int, j: int) -> int:
    """Flat position of the symmetric-matrix entry (i, j), 0-based, row-major lower triangle."""
    if j > i:
        i, j = j, i
    return i * (i + 1) // 2 + j


def tri_pairs(d: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(d) for j in range(i + 1)]


@dataclass(frozen=True)
class LinQuParams:
    A: np.ndarray
    a0: float

    family = FAMILY

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise ValueError("A must be symmetric")
        A = 0.5 * (A + A.T)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def denominator(self) -> float:
        return 4.0 * self.a0 + float(self.A.sum()) + float(np.trace(self.A))

    @property
    def mu(self) -> float:
        den = self.denominator
        if den <= 0:
            raise ZeroDivisionError("normalizer undefined: 4*a0 + 1'A1 + tr A must be positive")
        return 2.0 ** (-self.d + 2) / den

    def unnormalized(self, states) -> np.ndarray:
        S = np.asarray(states, dtype=np.float64)
        return self.a0 + np.einsum("ki,ij,kj->k", S, self.A, S)

    def nonnegative(self) -> Optional[bool]:
        """Whether every mass is >= 0; ``None`` when d is too large to enumerate."""
        from binfam.oracle import MAX_ORACLE_DIM, all_states

        if self.d > MAX_ORACLE_DIM:
            return None
        return bool((self.unnormalized(all_states(self.d)) >= -1e-12 * _scale(self)).all())

    def sample(self, rng, m: int, force: bool = False) -> SampleBatch:
        rng = make_rng(rng)
        U = rng.random((m, self.d))
        Y, logp, bad_row, bad_comp = kernels.linquad_chain(self.A, self.a0, U=U, force=force)
        if bad_row >= 0 and not force:
            raise NegativeMass(Y[bad_row, :bad_comp])
        info = {"clamped": bad_row >= 0}
        return SampleBatch(Y, logp, info)

    def logpdf(self, rows, force: bool = False) -> np.ndarray:
        """Log-probability via the chain-rule factorisation; checks every prefix."""
        Y = as_binary(np.atleast_2d(rows), self.d)
        _, logp, bad_row, bad_comp = kernels.linquad_chain(self.A, self.a0, Y=Y, force=force)
        if bad_row >= 0 and not force:
            raise NegativeMass(Y[bad_row, :bad_comp])
        return logp

    def conditionals(self, force: bool = False) -> "LinQuConditionals":
        return LinQuConditionals(self, force=force)


def _scale(p: LinQuParams) -> float:
    return 4.0 * abs(p.a0) + 4.0 * float(np.abs(p.A).sum()) + 1e-300


def eval_linquad(params: LinQuParams, gamma) -> float:
    g = as_binary(gamma, params.d).astype(np.float64)
    v = params.a0 + g @ params.A @ g
    if v < -1e-12 * _scale(params):
        raise NegativeMass(as_binary(gamma), f"negative mass at {tuple(as_binary(gamma))}")
    return params.mu * max(v, 0.0)


def linquad_cross_moment(params: LinQuParams, I: Iterable[int]) -> float:
    """Closed-form P(all components in I equal 1)."""
    I = sorted(set(int(i) for i in I))
    if not I:
        return 1.0
    den = params.denominator
    if den == 0:
        raise ZeroDivisionError("4*a0 + 1'A1 + tr A vanishes")
    A = params.A
    row = A.sum(axis=1)
    num = 0.0
    for i in I:
        num += 2.0 * row[i] + sum(A[i, j] for j in I if j != i)
    k = len(I)
    return 1.0 / 2**k + num / (2**k * den)


def linquad_mean(params: LinQuParams) -> np.ndarray:
    return 0.5 + params.A.sum(axis=1) / params.denominator


def s_partial(params: LinQuParams, prefix) -> float:
    """Partial sum ``s_k`` of the first-k marginal, with 4x weight on the prefix terms.

    The marginal of the first ``k`` components is ``mu * 2**(d-k-2) * s_k``;
    at ``k = d`` this is exactly ``mu * (a0 + g' A g)``.
    """
    A = params.A
    g = np.asarray(prefix, dtype=np.float64)
    k = g.shape[0]
    head = A[:k, :k]
    cross = A[:k, k:].sum(axis=1)
    tail = A[k:, k:]
    return (
        4.0 * params.a0
        + 4.0 * float(g @ head @ g + g @ cross)
        + float(tail.sum() + np.trace(tail))
    )


def linquad_marginal(params: LinQuParams, prefix) -> float:
    g = as_binary(prefix)
    k = g.shape[0]
    if not 0 <= k <= params.d:
        raise ValueError("prefix longer than the dimension")
    return params.mu * 2.0 ** (params.d - k - 2) * s_partial(params, g)


class LinQuConditionals(ConditionalProvider):
    def __init__(self, params: LinQuParams, force: bool = False):
        self.d = params.d
        self._p = params
        self._force = force
        self._tol = 1e-12 * _scale(params)

    def prob(self, prefix):
        g = np.asarray(prefix, dtype=np.uint8)
        s1 = s_partial(self._p, np.append(g, 1))
        s0 = s_partial(self._p, np.append(g, 0))
        if (s1 < -self._tol or s0 < -self._tol) and not self._force:
            raise NegativeMass(g)
        s1, s0 = max(s1, 0.0), max(s0, 0.0)
        tot = s1 + s0
        if tot <= 0:
            return 0.0 if not self._force else 0.5
        return s1 / tot


def linquad_conditionals(params: LinQuParams, force: bool = False) -> LinQuConditionals:
    return LinQuConditionals(params, force=force)


# --- moment matching -------------------------------------------------------


@lru_cache(maxsize=64)
def _moment_system(d: int):
    """Matrix mapping (A upper triangle, a0) to (second moments, total mass).

    Derived from sum_g prod_{k in M} g_k = 2^(d-|M|): the equation for the
    index set I reads 2^(d-|I|-2) [4 a0 + sum_{k,l} 2^(1_I(k) + 1_{I+k}(l)) a_kl].
    """
    pairs = tri_pairs(d)
    p = len(pairs)
    M = np.zeros((p + 1, p + 1))
    targets = [frozenset(pr) for pr in pairs] + [frozenset()]
    for r, I in enumerate(targets):
        scale = 2.0 ** (d - len(I) - 2)
        M[r, p] = 4.0 * scale
        for c, (k, l) in enumerate(pairs):
            e_kl = (k in I) + (l in I or l == k)
            if k == l:
                M[r, c] = scale * 2.0**e_kl
            else:
                e_lk = (l in I) + (k in I or k == l)
                M[r, c] = scale * (2.0**e_kl + 2.0**e_lk)
    lu = scipy.linalg.lu_factor(M)
    rcond = 1.0 / np.linalg.cond(M, 1)
    M.setflags(write=False)
    return M, lu, rcond


@dataclass(frozen=True)
class LinQuFit:
    params: LinQuParams
    residual: float
    nonnegative: Optional[bool]


def fit_linquad(sample: WeightedSample | None = None, *, second=None) -> LinQuFit:
    """Match all first and second weighted moments and the total mass exactly.

    Either pass a sample or the symmetric matrix of second moments (diagonal =
    means) directly via ``second``.
    """
    if second is None:
        if sample is None:
            raise TypeError("fit_linquad needs a sample or a second-moment matrix")
        second = compute_moments(sample).second
    X = np.asarray(second, dtype=np.float64)
    d = X.shape[0]
    M, lu, rcond = _moment_system(d)
    if rcond < 1e-14:
        raise SingularSystem(f"moment system for d={d} is numerically singular")
    pairs = tri_pairs(d)
    rhs = np.array([X[i, j] for i, j in pairs] + [1.0])
    theta = scipy.linalg.lu_solve(lu, rhs)
    residual = float(np.max(np.abs(M @ theta - rhs)))
    A = np.zeros((d, d))
    for c, (i, j) in enumerate(pairs):
        A[i, j] = A[j, i] = theta[c]
    params = LinQuParams(A, float(theta[-1]))
    return LinQuFit(params, residual, params.nonnegative())
