"""Gaussian copula family: threshold a correlated normal vector.

``y_i = 1`` iff ``v_i <= mu_i`` with ``v ~ N(0, Sigma)``.  Means and pairwise
moments are available through the univariate and bivariate normal CDFs, so
the fit is a moment match; pointwise probabilities would need a
d-dimensional orthant integral and are deliberately not offered.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from binfam import kernels
from binfam.core import MomentSummary, SampleBatch, WeightedSample, compute_moments, make_rng

log = logging.getLogger(__name__)

FAMILY = "gaussian_copula"

# eigenvalue floor below which a matrix is repaired, and the ridge added afterwards
PD_THRESHOLD = 1e-13
PD_NUDGE = 1e-12

NO_EVAL_REASON = (
    "gaussian_copula has no pointwise mass: it would require a d-dimensional "
    "normal orthant integral; use it for sampling or compare via empirical tables"
)


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


def phi1(y):
    return ndtr(y)


def phi1_inv(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)) or not np.isfinite(p).all():
        raise ValueError("phi1_inv needs probabilities strictly inside (0, 1)")
    out = ndtri(p)
    return float(out) if out.ndim == 0 else out


def phi2(y1, y2, sigma) -> float:
    """P(X1 <= y1, X2 <= y2) for standard normals with correlation ``sigma``."""
    sigma = float(sigma)
    if not abs(sigma) <= 1.0:
        raise ValueError(f"correlation {sigma} outside [-1, 1]")
    p1, p2 = float(ndtr(y1)), float(ndtr(y2))
    if sigma == 1.0:
        return min(p1, p2)
    if sigma == -1.0:
        return max(0.0, p1 + p2 - 1.0)
    if sigma == 0.0:
        return p1 * p2
    return float(kernels.bvn_cdf(y1, y2, sigma))


def bvn_density(y1, y2, sigma) -> float:
    """Bivariate standard normal density; the derivative of ``phi2`` in ``sigma``."""
    om = 1.0 - sigma * sigma
    if om <= 0.0:
        return 0.0
    q = (y1 * y1 - 2.0 * sigma * y1 * y2 + y2 * y2) / (2.0 * om)
    return math.exp(-q) / (2.0 * math.pi * math.sqrt(om))


@dataclass(frozen=True)
class GauCConfig:
    epsilon_marginal: float = 0.01
    delta_corr: float = 0.10
    step_tol: float = 1e-3
    value_tol: float = 1e-9
    max_iter: int = 200


@dataclass(frozen=True)
class GauCParams:
    mu: np.ndarray
    Sigma: np.ndarray
    association: frozenset = frozenset()
    repair_shift: float = 0.0

    family = FAMILY

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).ravel()
        S = np.array(self.Sigma, dtype=np.float64)
        d = mu.shape[0]
        if S.shape != (d, d):
            raise ValueError("Sigma must be d x d")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12):
            raise ValueError("Sigma must be symmetric")
        if np.any(np.abs(np.diag(S) - 1.0) > 1e-12):
            raise ValueError("Sigma must have unit diagonal")
        if np.any(np.abs(S) > 1.0 + 1e-12):
            raise ValueError("correlations must lie in [-1, 1]")
        if not np.isfinite(mu).all():
            raise ValueError("thresholds must be finite")
        S = np.clip(0.5 * (S + S.T), -1.0, 1.0)
        np.fill_diagonal(S, 1.0)
        mu.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "association", frozenset(tuple(sorted(p)) for p in self.association))
        object.__setattr__(self, "repair_shift", float(self.repair_shift))

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def means(self) -> np.ndarray:
        return ndtr(self.mu)

    def second_moments(self) -> np.ndarray:
        d = self.d
        M = np.diag(self.means())
        for i in range(d):
            for j in range(i):
                M[i, j] = M[j, i] = phi2(self.mu[i], self.mu[j], self.Sigma[i, j])
        return M

    def sample(self, rng, m: int) -> SampleBatch:
        return gauc_sample(self, rng, m)


# --- fitting ----------------------------------------------------------------


def association_set(moments: MomentSummary, epsilon: float, delta: float) -> frozenset:
    m = moments.mean
    d = m.shape[0]
    keep = [i for i in range(d) if epsilon < m[i] < 1.0 - epsilon]
    return frozenset(
        (i, j) for a, i in enumerate(keep) for j in keep[a + 1:] if abs(moments.corr[i, j]) > delta
    )


def _clamp_mean(p: float, n: int) -> tuple[float, bool]:
    lo = 1.0 / (2.0 * n) if n > 0 else 1e-12
    q = min(max(p, lo), 1.0 - lo)
    return q, q != p


def fit_gauc_mean(moments: MomentSummary) -> tuple[np.ndarray, np.ndarray]:
    """Thresholds ``phi1_inv(mean)``; boundary means are clamped and flagged."""
    out = np.empty(moments.d)
    flags = np.zeros(moments.d, dtype=bool)
    for i, p in enumerate(moments.mean):
        q, flags[i] = _clamp_mean(float(p), moments.n)
        out[i] = ndtri(q)
    return out, flags


@dataclass
class PairReport:
    pair: tuple
    target: float
    sigma: float = 0.0
    residual: float = 0.0
    iterations: int = 0
    bisections: int = 0
    clamped: bool = False
    converged: bool = True


def solve_pair(y1: float, y2: float, target: float, cfg: GauCConfig = GauCConfig(), pair=(0, 1)) -> PairReport:
    """Find sigma with phi2(y1, y2; sigma) = target.

    Newton from 0 inside a shrinking bracket; an iterate that leaves the
    bracket, or a vanishing density, triggers a bisection step instead.
    Targets outside the attainable range are clamped to its endpoints.
    """
    rep = PairReport(tuple(pair), float(target))
    lo_val = phi2(y1, y2, -1.0)
    hi_val = phi2(y1, y2, 1.0)
    if target <= lo_val or target >= hi_val:
        rep.sigma = -1.0 if target <= lo_val else 1.0
        rep.clamped = not (target == lo_val or target == hi_val)
        rep.residual = abs(phi2(y1, y2, rep.sigma) - target)
        return rep
    a, b = -1.0, 1.0
    s = 0.0
    f = phi2(y1, y2, s) - target
    for it in range(1, cfg.max_iter + 1):
        if f > 0:
            b = s
        elif f < 0:
            a = s
        else:
            break
        h = bvn_density(y1, y2, s)
        new = s - f / h if h > 1e-300 else math.nan
        if not (a < new < b):
            new = 0.5 * (a + b)
            rep.bisections += 1
        step = abs(new - s)
        s = new
        f = phi2(y1, y2, s) - target
        rep.iterations = it
        if step < cfg.step_tol and abs(f) <= cfg.value_tol:
            break
        if b - a < 1e-15:
            break
    else:
        rep.converged = False
    rep.sigma = s
    rep.residual = abs(f)
    if rep.residual > cfg.value_tol and b - a >= 1e-15:
        rep.converged = False
    return rep


def fit_gauc_corr(moments: MomentSummary, mu, cfg: GauCConfig = GauCConfig(), pairs=None):
    """Pairwise correlation fit on the association set; other pairs get 0."""
    d = moments.d
    if pairs is None:
        pairs = association_set(moments, cfg.epsilon_marginal, cfg.delta_corr)
    S = np.eye(d)
    reports = []
    for i, j in sorted(pairs):
        rep = solve_pair(mu[i], mu[j], float(moments.second[i, j]), cfg, (i, j))
        if rep.clamped:
            log.warning("pair %s target %.6g outside the attainable range; clamped", (i, j), rep.target)
        S[i, j] = S[j, i] = rep.sigma
        reports.append(rep)
    return S, reports


def repair_pd(Sigma) -> tuple[np.ndarray, float]:
    """Shift the spectrum so the smallest eigenvalue is nonnegative, keeping a unit diagonal.

    Returns the repaired matrix and the applied shift ``|lambda_min|`` (0 when
    nothing was done).  A ridge of ``PD_NUDGE`` keeps the result strictly
    positive definite.
    """
    S = np.array(Sigma, dtype=np.float64)
    lam = float(np.linalg.eigvalsh(S)[0])
    if lam >= PD_THRESHOLD:
        return S, 0.0
    shift = abs(lam)
    d = S.shape[0]
    S = (S + shift * np.eye(d)) / (1.0 + shift)
    S = (S + PD_NUDGE * np.eye(d)) / (1.0 + PD_NUDGE)
    np.fill_diagonal(S, 1.0)
    return 0.5 * (S + S.T), shift


@dataclass(frozen=True)
class GauCFit:
    params: GauCParams
    mean_clamped: np.ndarray
    pairs: list = field(default_factory=list)

    @property
    def repaired(self) -> bool:
        return self.params.repair_shift > 0.0


def fit_gauc(data, cfg: GauCConfig = GauCConfig()) -> GauCFit:
    """Full fit from a WeightedSample or a MomentSummary; repair runs once at the end."""
    moments = compute_moments(data) if isinstance(data, WeightedSample) else data
    mu, flags = fit_gauc_mean(moments)
    pairs = association_set(moments, cfg.epsilon_marginal, cfg.delta_corr)
    S, reports = fit_gauc_corr(moments, mu, cfg, pairs)
    S, shift = repair_pd(S)
    return GauCFit(GauCParams(mu, S, pairs, shift), flags, reports)


# --- sampling ---------------------------------------------------------------


def _psd_factor(S, tol):
    """Lower-triangular L with L L' = S for positive semidefinite S (zero pivots allowed)."""
    d = S.shape[0]
    L = np.zeros_like(S)
    for j in range(d):
        piv = S[j, j] - L[j, :j] @ L[j, :j]
        if piv < -tol:
            raise NotPositiveDefinite("Sigma is not positive semidefinite; run repair_pd first")
        if piv <= tol:
            continue
        L[j, j] = math.sqrt(piv)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def sigma_factor(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=np.float64)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        # exactly comonotone pairs give singular but valid matrices
        return _psd_factor(S, 1e-10)


def gauc_sample(params: GauCParams, rng, m: int) -> SampleBatch:
    rng = make_rng(rng)
    L = sigma_factor(params.Sigma)
    Z = rng.standard_normal((m, params.d))
    V = Z @ L.T
    return SampleBatch((V <= params.mu).astype(np.uint8), None)
