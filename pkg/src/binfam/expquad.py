"""Exponential-quadratic family  q(g) ∝ exp(g' A g).

The normaliser is not available for large d, so sampling goes through a
proxy: marginals are approximated one component at a time by a second-order
expansion of log cosh, which keeps each approximate marginal in the same
family and yields logistic conditionals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from binfam import kernels
from binfam.core import SampleBatch, WeightedSample, as_binary, make_rng

FAMILY = "expquad"
MAX_TV_DIM = 12


class RankDeficientDesign(UserWarning):
    pass


@dataclass(frozen=True)
class ExpQuParams:
    A: np.ndarray

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

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def log_unnormalized(self, states) -> np.ndarray:
        S = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return np.einsum("ki,ij,kj->k", S, self.A, S)


def expquad_eval_unnorm(params: ExpQuParams, gamma) -> float:
    """Log of the unnormalised mass, g' A g."""
    g = as_binary(gamma, params.d).astype(np.float64)
    return float(g @ params.A @ g)


def taylor_marginal_step(A) -> tuple[np.ndarray, float]:
    """Integrate out the last component approximately.

    Returns the (k-1)x(k-1) matrix of the approximate marginal and
    ``log(1 + e^c)``, the log of the factor picked up by the normaliser.
    Exact when the last component does not interact with the others.
    """
    A = np.asarray(A, dtype=np.float64)
    k = A.shape[0]
    if k < 2:
        raise ValueError("need at least a 2x2 matrix")
    Ap = A[:-1, :-1]
    b = A[-1, :-1]
    c = A[-1, -1]
    t = np.tanh(c / 2.0)
    sech2 = 1.0 - t * t
    At = Ap + (1.0 + t) * np.diag(b) + 0.5 * sech2 * np.outer(b, b)
    return 0.5 * (At + At.T), float(np.logaddexp(0.0, c))


@dataclass(frozen=True)
class ProxyChain:
    """Logistic chain approximating an exponential-quadratic distribution.

    ``B`` is lower-triangular in chain order: ``B[i, i]`` is the intercept of
    component ``order[i]`` and ``B[i, j]`` its slope on chain position ``j``.
    """

    B: np.ndarray
    order: np.ndarray
    log_factors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def d(self) -> int:
        return self.B.shape[0]

    def _to_chain(self, rows):
        return np.ascontiguousarray(as_binary(np.atleast_2d(rows), self.d)[:, self.order])

    def logpdf(self, rows) -> np.ndarray:
        return kernels.logistic_chain_logpdf(self.B, self._to_chain(rows))

    log_unnormalized = logpdf

    def sample(self, rng, m: int) -> SampleBatch:
        rng = make_rng(rng)
        U = rng.random((m, self.d))
        Yc, logp = kernels.logistic_chain_sample(self.B, U)
        Y = np.empty_like(Yc)
        Y[:, self.order] = Yc
        return SampleBatch(Y, logp)

    def conditional(self, i: int, prefix) -> float:
        """P(chain position i = 1 | earlier chain positions)."""
        g = np.asarray(prefix, dtype=np.float64)
        eta = self.B[i, i] + g @ self.B[i, :i]
        return float(1.0 / (1.0 + np.exp(-eta)))


def build_proxy(params: ExpQuParams, order: Optional[Sequence[int]] = None) -> ProxyChain:
    """Recursively approximate the marginals and read off logistic conditionals.

    With ``order`` the chain runs over the permuted components
    ``order[0], order[1], ...``; drawn vectors are returned in the original
    coordinates.
    """
    d = params.d
    order = np.arange(d) if order is None else np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(d)):
        raise ValueError("order must be a permutation of range(d)")
    A = params.A[np.ix_(order, order)]
    B = np.zeros((d, d))
    logs = np.zeros(d)
    current = A
    for i in range(d - 1, -1, -1):
        # the conditional of the last component of a quadratic form is
        # logistic in (c + 2 b' g) because the off-diagonal terms appear twice
        B[i, i] = current[i, i]
        B[i, :i] = 2.0 * current[i, :i]
        if i > 0:
            current, logs[i] = taylor_marginal_step(current)
        else:
            logs[0] = float(np.logaddexp(0.0, current[0, 0]))
    return ProxyChain(B, order, logs)


def expquad_exact(params: ExpQuParams):
    from binfam.oracle import enumerate_family

    return enumerate_family(params)


def proxy_tv_distance(params: ExpQuParams, proxy: Optional[ProxyChain] = None) -> float:
    """Total variation between the proxy and the exactly normalised family (d <= 12)."""
    from binfam.oracle import all_states, tv_distance

    if params.d > MAX_TV_DIM:
        raise ValueError(f"TV diagnostic limited to d <= {MAX_TV_DIM}")
    proxy = build_proxy(params) if proxy is None else proxy
    exact = expquad_exact(params)
    approx = np.exp(proxy.logpdf(all_states(params.d)))
    return tv_distance(exact.probs, approx)


@dataclass(frozen=True)
class ExpQuFit:
    params: ExpQuParams
    intercept: float
    residual: float
    rank: int
    n_coef: int


def expquad_design(rows) -> np.ndarray:
    """Columns x_i x_j for i >= j in lower-triangle order."""
    X = np.asarray(rows, dtype=np.float64)
    d = X.shape[1]
    cols = [X[:, i] * X[:, j] for i in range(d) for j in range(i + 1)]
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def fit_expquad(sample: WeightedSample, log_target) -> ExpQuFit:
    """Least-squares fit of g' A g + const to log target values.

    The constant column absorbs an unknown normaliser.  Off-diagonal
    coefficients enter g' A g twice, so they are halved on the way back.
    Rank-deficient designs give the minimum-norm solution and a warning.
    """
    y = np.asarray(log_target, dtype=np.float64)
    X = sample.rows
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError(f"need {n} log-target values, got {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError("log-target values must be finite")
    D = np.column_stack([np.ones(n), expquad_design(X)])
    coef, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
    if rank < D.shape[1]:
        warnings.warn(
            f"design has rank {rank} < {D.shape[1]}; returning the minimum-norm solution",
            RankDeficientDesign,
            stacklevel=2,
        )
    A = np.zeros((d, d))
    c = 1
    for i in range(d):
        for j in range(i + 1):
            if i == j:
                A[i, i] = coef[c]
            else:
                A[i, j] = A[j, i] = 0.5 * coef[c]
            c += 1
    resid = float(np.sqrt(np.sum((D @ coef - y) ** 2)))
    return ExpQuFit(ExpQuParams(A), float(coef[0]), resid, int(rank), D.shape[1])
