"""Oracle identity suite and distribution comparison, used by ``binfam check``/``compare``.

Every check returns a dict ``{"name", "passed", "max_dev", "tol", ...}`` so
the CLI can dump reports as JSON unchanged.
"""

from __future__ import annotations

import math
from typing import Any, Optional

import numpy as np

from binfam import oracle
from binfam.core import WeightedSample, compute_moments, frechet_bounds, make_rng
from binfam.expquad import ExpQuParams, build_proxy
from binfam.gausscopula import GauCParams, gauc_sample, phi2
from binfam.linquad import LinQuParams, NegativeMass, linquad_cross_moment, linquad_marginal
from binfam.logcond import LogCoParams
from binfam.poisson import (
    PoiParams,
    poi_cross_moment,
    poi_mass,
    poi_mass_intersection,
    poi_table_bruteforce,
)
from binfam.product import ProductParams, eval_product_logit_form

MAX_CHECK_DIM = 12
TOL = 1e-10


def _item(name, dev, tol=TOL, **extra) -> dict:
    dev = float(dev)
    return {"name": name, "passed": bool(dev <= tol), "max_dev": dev, "tol": tol, **extra}


# --- generic identities on an explicit table ----------------------------------


def table_identities(dist: oracle.ExplicitDistribution) -> list[dict]:
    """Bahadur round-trip, pairwise Frechet bounds and chain-rule consistency."""
    out = []
    d = dist.d
    means = dist.means()
    if np.all((means > 0) & (means < 1)):
        m, corr = oracle.extract_correlations(dist)
        rec = oracle.bahadur_reconstruct(m, corr)
        out.append(_item("bahadur_roundtrip", np.max(np.abs(rec.probs - dist.probs))))
    worst = 0.0
    for i in range(d):
        for j in range(i):
            lo, hi = frechet_bounds([means[i], means[j]])
            mij = oracle.cross_moment(dist, (i, j))
            worst = max(worst, lo - mij, mij - hi)
    out.append(_item("frechet_bounds", max(worst, 0.0)))
    cond = oracle.conditionals(dist)
    states = oracle.all_states(d)
    joint = np.ones(states.shape[0])
    for i in range(d):
        r = cond.prob_batch(states[:, :i])
        joint *= np.where(states[:, i] == 1, r, 1.0 - r)
    out.append(_item("chain_rule_joint", np.max(np.abs(joint - dist.probs))))
    return out


# --- per-family suites ------------------------------------------------------------


def _check_product(p: ProductParams) -> list[dict]:
    dist = oracle.enumerate_family(p)
    out = [_item("normalization", abs(dist.probs.sum() - 1.0))]
    if np.all((p.mean > 0) & (p.mean < 1)):
        states = oracle.all_states(p.d)
        alt = np.array([eval_product_logit_form(p, s) for s in states])
        out.append(_item("logit_form", np.max(np.abs(alt - dist.probs))))
    return out + table_identities(dist)


def _check_linquad(p: LinQuParams) -> list[dict]:
    d = p.d
    states = oracle.all_states(d)
    raw = p.mu * p.unnormalized(states)
    dist = oracle.ExplicitDistribution(d, raw / raw.sum() if abs(raw.sum() - 1) > 1e-9 else raw, allow_negative=True)
    out = [_item("normalization", abs(raw.sum() - 1.0))]
    neg = float(-min(raw.min(), 0.0))
    out.append({"name": "nonnegative", "passed": neg == 0.0, "max_dev": neg, "tol": 0.0})
    dev = 0.0
    for I in oracle.subsets(d, 1):
        dev = max(dev, abs(linquad_cross_moment(p, I) - oracle.cross_moment(dist, I)))
    out.append(_item("cross_moments", dev))
    dev = 0.0
    for k in range(1, d + 1):
        marg = oracle.marginalize(dist, range(k))
        sub = oracle.all_states(k)
        vals = np.array([linquad_marginal(p, s) for s in sub])
        dev = max(dev, float(np.max(np.abs(vals - marg.probs))))
    out.append(_item("prefix_marginals", dev))
    dev = 0.0
    for I in oracle.subsets(d, 1):
        # marginal with the prefix set to one on I, summed over the rest
        k = max(I) + 1
        sub = oracle.all_states(k)
        mask = np.all(sub[:, list(I)] == 1, axis=1)
        tot = sum(linquad_marginal(p, s) for s in sub[mask])
        dev = max(dev, abs(tot - linquad_cross_moment(p, I)))
    out.append(_item("marginals_vs_cross_moments", dev))
    try:
        lp = p.logpdf(states)
        out.append(_item("chain_rule_joint", np.max(np.abs(np.exp(lp) - raw))))
    except NegativeMass as exc:
        out.append({"name": "chain_rule_joint", "passed": False, "max_dev": float("nan"), "tol": TOL,
                    "error": str(exc)})
    if neg == 0.0:
        out += table_identities(dist)
    return out


def _check_expquad(p: ExpQuParams, order=None) -> list[dict]:
    exact = oracle.enumerate_family(p)
    proxy = build_proxy(p, order)
    approx = np.exp(proxy.logpdf(oracle.all_states(p.d)))
    tv = oracle.tv_distance(exact.probs, approx)
    out = [
        _item("proxy_normalization", abs(approx.sum() - 1.0)),
        {"name": "proxy_tv_distance", "passed": bool(np.isfinite(tv)), "max_dev": float(tv), "tol": None},
    ]
    diag_only = not np.any(p.A - np.diag(np.diag(p.A)))
    if diag_only:
        out.append(_item("proxy_exact_for_diagonal", np.max(np.abs(approx - exact.probs))))
    return out + table_identities(exact)


def _check_logcond(p: LogCoParams) -> list[dict]:
    states = oracle.all_states(p.d)
    probs = np.exp(p.logpdf(states))
    out = [_item("normalization", abs(probs.sum() - 1.0))]
    batch = p.sample(np.random.Generator(np.random.PCG64(0)), 1000)
    dev = np.max(np.abs(np.exp(batch.logprob) - np.exp(p.logpdf(batch.rows))))
    out.append(_item("sample_probability", dev, 1e-12))
    return out + table_identities(oracle.ExplicitDistribution(p.d, probs))


def _check_poisson(p: PoiParams) -> list[dict]:
    states = oracle.all_states(p.d)
    mass = np.array([poi_mass(p, s) for s in states])
    out = [_item("normalization", abs(mass.sum() - 1.0))]
    if p.n <= 20:
        brute = poi_table_bruteforce(p)
        out.append(_item("mass_vs_bruteforce", np.max(np.abs(mass - brute))))
        dist = oracle.ExplicitDistribution(p.d, brute / brute.sum())
        dev = max(abs(poi_cross_moment(p, I) - oracle.cross_moment(dist, I)) for I in oracle.subsets(p.d, 1))
        out.append(_item("cross_moments_vs_bruteforce", dev))
        inter = np.array([poi_mass_intersection(p, s) for s in states])
        gap = float(np.max(np.abs(inter - brute)))
        # the intersection variant must disagree with the oracle to be rejected
        out.append({
            "name": "intersection_form_rejected",
            "passed": gap > 1e-6,
            "max_dev": gap,
            "tol": None,
        })
    return out + table_identities(oracle.ExplicitDistribution(p.d, mass / mass.sum()))


def _check_copula(p: GauCParams, seed: int, draws: int) -> list[dict]:
    ev = float(np.linalg.eigvalsh(p.Sigma)[0])
    out = [{"name": "sigma_positive_definite", "passed": ev > 0, "max_dev": ev, "tol": None}]
    rows = gauc_sample(p, make_rng(seed), draws).rows
    mom = compute_moments(WeightedSample(rows))
    target = p.second_moments()
    se = np.sqrt(np.clip(target * (1 - target), 1e-300, None) / draws)
    z = float(np.max(np.abs(mom.second - target) / se))
    out.append({"name": "simulated_moments_z", "passed": z <= 4.5, "max_dev": z, "tol": 4.5, "draws": draws})
    dev = 0.0
    for s in (-0.9, -0.5, 0.0, 0.5, 0.9):
        dev = max(dev, abs(phi2(0.0, 0.0, s) - (0.25 + math.asin(s) / (2 * math.pi))))
    out.append(_item("phi2_arcsine_identity", dev, 1e-9))
    return out


def check_params(params, order=None, seed: int = 0, draws: int = 200_000) -> dict:
    d = params.d
    if d > MAX_CHECK_DIM and params.family != "gaussian_copula":
        raise ValueError(f"check runs exhaustive enumeration and needs d <= {MAX_CHECK_DIM}")
    fam = params.family
    if fam == "product":
        items = _check_product(params)
    elif fam == "linquad":
        items = _check_linquad(params)
    elif fam == "expquad":
        items = _check_expquad(params, order)
    elif fam == "logcond":
        items = _check_logcond(params)
    elif fam == "poisson":
        items = _check_poisson(params)
    elif fam == "gaussian_copula":
        items = _check_copula(params, seed, draws)
    else:
        raise ValueError(f"unknown family {fam!r}")
    return {"family": fam, "d": d, "passed": all(i["passed"] for i in items), "checks": items}


def random_params(family: str, d: int, seed: int):
    """Random parameters used by ``check --family``."""
    rng = make_rng(seed)
    if family == "product":
        return ProductParams(rng.uniform(0.05, 0.95, d))
    if family == "linquad":
        # a positive definite A with a0 > 0 gives a nonnegative function
        M = rng.normal(size=(d, d))
        return LinQuParams(M @ M.T / d, rng.uniform(0.5, 1.5))
    if family == "expquad":
        M = rng.normal(scale=0.5, size=(d, d))
        return ExpQuParams(0.5 * (M + M.T))
    if family == "logcond":
        B = np.tril(rng.normal(size=(d, d)))
        return LogCoParams.dense(B)
    if family == "poisson":
        n = min(12, 2 * d)
        sets = [sorted(set(rng.choice(n, size=rng.integers(1, 4), replace=False).tolist())) for _ in range(d)]
        return PoiParams(tuple(tuple(s) for s in sets), rng.uniform(0.05, 1.0, n))
    if family == "gaussian_copula":
        M = rng.normal(size=(d, 2 * d))
        C = M @ M.T
        s = np.sqrt(np.diag(C))
        return GauCParams(rng.normal(scale=0.7, size=d), C / np.outer(s, s))
    raise ValueError(f"unknown family {family!r}")


# --- comparison -----------------------------------------------------------------


def exact_table(params, order=None) -> Optional[oracle.ExplicitDistribution]:
    """Exact probability table, or None when the family cannot be evaluated pointwise."""
    fam = params.family
    states = oracle.all_states(params.d)
    if fam in ("product", "logcond"):
        return oracle.ExplicitDistribution(params.d, np.exp(params.logpdf(states)))
    if fam == "linquad":
        raw = params.mu * params.unnormalized(states)
        if raw.min() < 0:
            raise NegativeMass((), "linquad parameters put negative mass on some states")
        return oracle.ExplicitDistribution(params.d, np.maximum(raw, 0.0) / raw.sum())
    if fam == "expquad":
        return oracle.enumerate_family(params)
    if fam == "poisson":
        m = np.array([poi_mass(params, s) for s in states])
        return oracle.ExplicitDistribution(params.d, m / m.sum())
    return None


def _draw(params, rng, m, order=None):
    if params.family == "expquad":
        return build_proxy(params, order).sample(rng, m).rows
    return params.sample(rng, m).rows


def _moments_of(dist_or_rows, weights=None):
    if isinstance(dist_or_rows, oracle.ExplicitDistribution):
        return dist_or_rows.means(), _corr(dist_or_rows.means(), dist_or_rows.second_moments())
    mom = compute_moments(WeightedSample(dist_or_rows, weights))
    return mom.mean, mom.corr


def _corr(mean, second):
    var = mean * (1 - mean)
    sd = np.sqrt(np.where(var > 0, var, 1.0))
    c = (second - np.outer(mean, mean)) / np.outer(sd, sd)
    c[var <= 0, :] = 0.0
    c[:, var <= 0] = 0.0
    np.fill_diagonal(c, 1.0)
    return c


def compare(a: Any, b: Any, seed: int = 0, draws: int = 1_000_000, order_a=None, order_b=None) -> dict:
    """TV/KL and moment deltas between two parameter sets, or parameters and a sample.

    ``b`` may be a :class:`WeightedSample`.  Families without pointwise
    evaluation are replaced by the empirical table of ``draws`` seeded draws.
    """
    d = a.d
    if b.d != d:
        raise ValueError(f"dimension mismatch: {d} vs {b.d}")
    rng = make_rng(seed)
    report: dict[str, Any] = {"d": d, "seed": seed}
    tables, sources = [], []
    for obj, order in ((a, order_a), (b, order_b)):
        if isinstance(obj, WeightedSample):
            tab = oracle.empirical_table(obj.rows, d, obj.weights) if d <= MAX_CHECK_DIM else None
            src = {"kind": "sample", "n": obj.n}
            mom = _moments_of(obj.rows, obj.weights)
        else:
            tab = exact_table(obj, order) if d <= MAX_CHECK_DIM else None
            if tab is not None:
                src = {"kind": "exact", "family": obj.family}
                mom = _moments_of(tab)
            else:
                rows = _draw(obj, rng, draws, order)
                if d <= MAX_CHECK_DIM:
                    tab = oracle.empirical_table(rows, d)
                src = {"kind": "empirical", "family": obj.family, "draws": draws,
                       "mean_se_max": float(np.max(np.sqrt(0.25 / draws)))}
                mom = _moments_of(rows)
        tables.append((tab, mom))
        sources.append(src)
    report["sources"] = sources
    (ta, (ma, ca)), (tb, (mb, cb)) = tables
    report["mean_max_abs_delta"] = float(np.max(np.abs(ma - mb)))
    report["corr_max_abs_delta"] = float(np.max(np.abs(ca - cb)))
    if ta is not None and tb is not None:
        report["tv"] = oracle.tv_distance(ta, tb)
        kl = oracle.kl_divergence(ta, tb)
        report["kl"] = kl if math.isfinite(kl) else None
    else:
        report["tv"] = None
        report["kl"] = None
    return report

