"""Sparse logistic-conditionals family.

Component ``i`` is Bernoulli with logit ``b_ii + sum_{j in L_i} b_ij g_j``.
Components with extreme means form the independent set; the others regress
on earlier components whose sample correlation exceeds ``delta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from binfam import kernels
from binfam.core import (
    ConditionalProvider,
    MomentSummary,
    SampleBatch,
    WeightedSample,
    as_binary,
    compute_moments,
    make_rng,
)

log = logging.getLogger(__name__)

FAMILY = "logcond"


@dataclass(frozen=True)
class FitConfig:
    epsilon_marginal: float = 0.01
    delta_corr: float = 0.10
    penalty: float = 1e-4
    newton_tol: float = 1e-3
    max_iter: int = 50
    blowup_threshold: float = 25.0

    def __post_init__(self):
        if not 0 <= self.epsilon_marginal < 0.5:
            raise ValueError("epsilon_marginal must lie in [0, 0.5)")
        if self.delta_corr < 0:
            raise ValueError("delta_corr must be nonnegative")
        if self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        if self.newton_tol <= 0 or self.max_iter < 1 or self.blowup_threshold <= 0:
            raise ValueError("newton_tol, max_iter and blowup_threshold must be positive")


@dataclass(frozen=True)
class LogCoParams:
    """Lower-triangular ``B`` in chain order plus the sparsity pattern.

    ``order[p]`` is the original column sitting at chain position ``p``;
    ``independent`` and ``predictors`` use chain positions.
    """

    B: np.ndarray
    independent: frozenset = frozenset()
    predictors: dict = field(default_factory=dict)
    order: Optional[np.ndarray] = None

    family = FAMILY

    def __post_init__(self):
        B = np.array(self.B, dtype=np.float64)
        d = B.shape[0]
        if B.shape != (d, d):
            raise ValueError("B must be square")
        if np.any(np.triu(B, 1) != 0):
            raise ValueError("B must be lower triangular")
        order = np.arange(d) if self.order is None else np.asarray(self.order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(d)):
            raise ValueError("order must be a permutation of range(d)")
        preds = {int(i): tuple(sorted(int(j) for j in L)) for i, L in self.predictors.items()}
        indep = frozenset(int(i) for i in self.independent)
        for i in range(d):
            allowed = set(preds.get(i, ())) | {i}
            if i in indep:
                allowed = {i}
            off = [j for j in range(i) if B[i, j] != 0 and j not in allowed]
            if off:
                raise ValueError(f"row {i} has coefficients outside its predictor set: {off}")
        B.setflags(write=False)
        order.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "predictors", preds)
        object.__setattr__(self, "independent", indep)

    @classmethod
    def dense(cls, B, order=None) -> "LogCoParams":
        """Saturated pattern: every nonzero below-diagonal entry is a predictor."""
        B = np.asarray(B, dtype=np.float64)
        preds = {i: tuple(np.flatnonzero(B[i, :i])) for i in range(B.shape[0])}
        return cls(B, frozenset(), preds, order)

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

    def conditionals(self) -> ConditionalProvider:
        return _LogCoConditionals(self.B)


class _LogCoConditionals(ConditionalProvider):
    def __init__(self, B):
        self.d = B.shape[0]
        self._B = B

    def prob(self, prefix):
        i = len(prefix)
        eta = self._B[i, i] + np.asarray(prefix, dtype=np.float64) @ self._B[i, :i]
        return float(1.0 / (1.0 + np.exp(-eta)))

    def prob_batch(self, prefixes):
        i = prefixes.shape[1]
        eta = self._B[i, i] + prefixes.astype(np.float64) @ self._B[i, :i]
        return 1.0 / (1.0 + np.exp(-eta))


def logcond_eval(params: LogCoParams, gamma) -> float:
    return float(params.logpdf(np.atleast_2d(gamma))[0])


def logcond_sample(params: LogCoParams, rng) -> tuple[np.ndarray, float]:
    batch = params.sample(rng, 1)
    return batch.rows[0], float(np.exp(batch.logprob[0]))


def select_structure(moments: MomentSummary, cfg: FitConfig = FitConfig()):
    """Independent set and predictor sets (0-based positions)."""
    eps, delta = cfg.epsilon_marginal, cfg.delta_corr
    m = moments.mean
    d = m.shape[0]
    indep = {i for i in range(d) if not (eps < m[i] < 1.0 - eps)}
    preds = {}
    for i in range(d):
        if i in indep:
            continue
        preds[i] = tuple(j for j in range(i) if j not in indep and abs(moments.corr[i, j]) > delta)
    return frozenset(indep), preds


@dataclass
class ComponentReport:
    component: int
    iterations: int = 0
    converged: bool = True
    demoted: bool = False
    reason: str = ""


@dataclass(frozen=True)
class LogCoFit:
    params: LogCoParams
    reports: list

    @property
    def demoted(self) -> list[int]:
        return [r.component for r in self.reports if r.demoted]


def _objective(b, Z, y, w, penalty):
    eta = Z @ b
    ll = np.sum(w * (y * eta - np.logaddexp(0.0, eta)))
    return ll - 0.5 * penalty * float(b @ b)


def penalized_newton(Z, y, w, b0, cfg: FitConfig):
    """Maximise the weighted logistic log-likelihood minus ``penalty/2 * |b|^2``.

    Each step solves ``(Z' W Q Z + penalty I) delta = Z' W (y - p) - penalty b``
    by Cholesky; a step that lowers the objective is halved until it does not.
    Returns ``(b, iterations, status)`` with status one of ``converged``,
    ``blowup``, ``max_iter`` or ``singular``.
    """
    b = np.array(b0, dtype=np.float64)
    k = b.shape[0]
    obj = _objective(b, Z, y, w, cfg.penalty)
    for it in range(1, cfg.max_iter + 1):
        eta = Z @ b
        p = 1.0 / (1.0 + np.exp(-eta))
        q = p * (1.0 - p)
        H = Z.T @ ((w * q)[:, None] * Z) + cfg.penalty * np.eye(k)
        g = Z.T @ (w * (y - p)) - cfg.penalty * b
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g)
        except (np.linalg.LinAlgError, ValueError):
            return b, it, "singular"
        t = 1.0
        for _ in range(40):
            cand = b + t * step
            new = _objective(cand, Z, y, w, cfg.penalty)
            if new >= obj - 1e-15 * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            cand, new = b, obj
        delta = cand - b
        b, obj = cand, new
        if np.max(np.abs(b)) > cfg.blowup_threshold:
            return b, it, "blowup"
        if np.max(np.abs(delta)) < cfg.newton_tol:
            return b, it, "converged"
    return b, cfg.max_iter, "max_iter"


def _clamped_logit(p, n):
    lo = 1.0 / (2.0 * n)
    p = min(max(p, lo), 1.0 - lo)
    return float(np.log(p) - np.log1p(-p))


def fit_logcond(
    sample: WeightedSample,
    cfg: FitConfig = FitConfig(),
    init: Optional[LogCoParams] = None,
    order: Optional[Sequence[int]] = None,
) -> LogCoFit:
    """Fit the sparse logistic chain to a weighted sample.

    ``init`` warm-starts each regression from its row of ``B``.  Components
    whose coefficients blow up, whose Newton iterations do not converge, or
    whose Hessian cannot be factorised are moved to the independent set.
    """
    d = sample.d
    order = np.arange(d) if order is None else np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(d)):
        raise ValueError("order must be a permutation of range(d)")
    X = sample.rows[:, order]
    chain_sample = WeightedSample(X, sample.weights)
    moments = compute_moments(chain_sample)
    indep, preds = select_structure(moments, cfg)
    indep = set(indep)
    n = sample.n
    # likelihood in count units: an unweighted sample has unit weights, which
    # keeps the ridge penalty small relative to the data as n grows
    w = sample.weights * n
    Xf = X.astype(np.float64)
    B = np.zeros((d, d))
    reports = []
    for i in range(d):
        rep = ComponentReport(i)
        if i not in indep:
            L = list(preds[i])
            Z = np.column_stack([Xf[:, L], np.ones(n)])
            if init is not None:
                b0 = np.append(init.B[i, L], init.B[i, i])
            else:
                b0 = np.zeros(len(L) + 1)
                b0[-1] = _clamped_logit(moments.mean[i], n)
            b, iters, status = penalized_newton(Z, Xf[:, i], w, b0, cfg)
            rep.iterations = iters
            if status == "converged":
                B[i, L] = b[:-1]
                B[i, i] = b[-1]
            else:
                log.info("component %d demoted to the independent set (%s)", i, status)
                rep.converged = False
                rep.demoted = True
                rep.reason = status
                indep.add(i)
                preds.pop(i, None)
        if i in indep:
            B[i, :i] = 0.0
            B[i, i] = _clamped_logit(moments.mean[i], n)
        reports.append(rep)
    preds = {i: L for i, L in preds.items() if i not in indep}
    params = LogCoParams(B, frozenset(indep), preds, order)
    return LogCoFit(params, reports)
