"""Independent-components family."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from binfam.core import (
    ConditionalProvider,
    SampleBatch,
    WeightedSample,
    as_binary,
    compute_moments,
    make_rng,
)

FAMILY = "product"


@dataclass(frozen=True)
class ProductParams:
    """Marginal probabilities; entries equal to 0 or 1 are frozen components."""

    mean: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, dtype=np.float64).ravel()
        if ((m < 0) | (m > 1)).any() or not np.isfinite(m).all():
            raise ValueError("product means must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)

    family = FAMILY

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def frozen(self) -> np.ndarray:
        return (self.mean == 0.0) | (self.mean == 1.0)

    def logpdf(self, rows) -> np.ndarray:
        Y = as_binary(np.atleast_2d(rows), self.d).astype(bool)
        with np.errstate(divide="ignore"):
            logm = np.log(self.mean)
            log1m = np.log1p(-self.mean)
        # 0 * log 0 is taken as 0
        terms = np.where(Y, logm, log1m)
        return terms.sum(axis=1)

    log_unnormalized = logpdf

    def sample(self, rng, m: int) -> SampleBatch:
        rng = make_rng(rng)
        U = rng.random((m, self.d))
        Y = (U < self.mean).astype(np.uint8)
        return SampleBatch(Y, self.logpdf(Y))

    def conditionals(self) -> ConditionalProvider:
        return _ProductConditionals(self.mean)


class _ProductConditionals(ConditionalProvider):
    def __init__(self, mean):
        self.d = mean.shape[0]
        self._m = mean

    def prob(self, prefix):
        return float(self._m[len(prefix)])

    def prob_batch(self, prefixes):
        return np.full(prefixes.shape[0], self._m[prefixes.shape[1]])


def fit_product(sample: WeightedSample) -> ProductParams:
    """Maximum-likelihood fit: the weighted sample mean."""
    return ProductParams(compute_moments(sample).mean.copy())


def eval_product(params: ProductParams, gamma) -> float:
    return float(np.exp(params.logpdf(np.atleast_2d(gamma))[0]))


def log_eval_product(params: ProductParams, rows) -> np.ndarray:
    return params.logpdf(rows)


def eval_product_logit_form(params: ProductParams, gamma) -> float:
    """prod(1 - m) * exp(sum_i gamma_i * logit(m_i)); interior means only."""
    m = params.mean
    g = as_binary(gamma, params.d).astype(np.float64)
    return float(np.prod(1.0 - m) * np.exp(g @ (np.log(m) - np.log1p(-m))))


def sample_product(params: ProductParams, rng, m: int | None = None):
    if m is None:
        return params.sample(rng, 1).rows[0]
    return params.sample(rng, m).rows
