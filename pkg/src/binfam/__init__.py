"""Parametric families of distributions on binary vectors."""

from binfam._accel import BACKEND, HAVE_NUMBA
from binfam.core import (
    ContractViolation,
    MomentSummary,
    SampleBatch,
    WeightedSample,
    chain_rule_sample,
    compute_moments,
    logit,
    logit_inverse,
)
from binfam.expquad import ExpQuParams, build_proxy, fit_expquad
from binfam.gausscopula import GauCParams, fit_gauc, phi1, phi1_inv, phi2, repair_pd
from binfam.linquad import LinQuParams, NegativeMass, fit_linquad
from binfam.logcond import FitConfig, LogCoParams, fit_logcond
from binfam.poisson import PoiParams, fit_poi_greedy, poi_mass
from binfam.product import ProductParams, fit_product

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "ContractViolation",
    "ExpQuParams",
    "FitConfig",
    "GauCParams",
    "LinQuParams",
    "LogCoParams",
    "MomentSummary",
    "NegativeMass",
    "PoiParams",
    "ProductParams",
    "SampleBatch",
    "WeightedSample",
    "build_proxy",
    "chain_rule_sample",
    "compute_moments",
    "fit_expquad",
    "fit_gauc",
    "fit_linquad",
    "fit_logcond",
    "fit_poi_greedy",
    "fit_product",
    "logit",
    "logit_inverse",
    "phi1",
    "phi1_inv",
    "phi2",
    "poi_mass",
    "repair_pd",
]
