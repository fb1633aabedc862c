"""One test per acceptance criterion; each prints a PASS/FAIL line with the measured figure."""

import itertools
import math
import time

import numpy as np
import pytest

from binfam import cli, oracle, paramfile
from binfam.core import WeightedSample, compute_moments, make_rng, moments_from_arrays
from binfam.expquad import ExpQuParams, build_proxy, fit_expquad, proxy_tv_distance, taylor_marginal_step
from binfam.gausscopula import GauCConfig, GauCParams, fit_gauc, gauc_sample, phi2, repair_pd, solve_pair
from binfam.linquad import LinQuParams, fit_linquad, linquad_cross_moment, linquad_marginal
from binfam.logcond import FitConfig, LogCoParams, fit_logcond
from binfam.paramfile import FAMILIES
from binfam.poisson import PoiParams, poi_cross_moment, poi_cross_moment_intersection, poi_mass
from oracles import bvn_quad1d, expquad_table, linquad_table, poisson_pattern_table, states

pytestmark = pytest.mark.acceptance


def random_nonneg_linquad(rng, d):
    M = rng.normal(size=(d, d))
    return LinQuParams(M @ M.T / d, rng.uniform(0.5, 1.5))


def test_criterion_01_bahadur_round_trip(acceptance):
    rng = make_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(50):
        d = 2 + k % 5
        dist = oracle.random_table(d, rng)
        means, corr = oracle.extract_correlations(dist)
        back = oracle.bahadur_reconstruct(means, corr)
        worst = max(worst, float(np.max(np.abs(back.probs - dist.probs))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 10
    acceptance("1", ok, f"max table error {worst:.2e} (< 1e-10), {dt:.2f} s (< 10 s)")
    assert ok


def test_criterion_02_linquad_cross_moments(acceptance):
    rng = make_rng(202)
    worst = 0.0
    for k in range(20):
        d = 3 + k % 4
        p = random_nonneg_linquad(rng, d)
        table, mu = linquad_table(p.A.tolist(), p.a0)
        worst = max(worst, abs(p.mu - mu) / mu)
        for r in range(1, d + 1):
            for I in itertools.combinations(range(d), r):
                want = sum(t for t, g in zip(table, states(d)) if all(g[i] for i in I))
                worst = max(worst, abs(linquad_cross_moment(p, I) - want))
    ok = worst < 1e-10
    acceptance("2", ok, f"max deviation from enumeration {worst:.2e} (< 1e-10)")
    assert ok


def test_criterion_03_linquad_marginals_and_chain(acceptance):
    rng = make_rng(303)
    rec = ident = chain = 0.0
    for d in (3, 4, 5, 6):
        p = random_nonneg_linquad(rng, d)
        table, _ = linquad_table(p.A.tolist(), p.a0)
        dist = oracle.ExplicitDistribution(d, table)
        for k in range(1, d + 1):
            marg = oracle.marginalize(dist, range(k))
            for g in states(k):
                rec = max(rec, abs(linquad_marginal(p, g) - marg.prob(g)))
            ident = max(ident, abs(linquad_marginal(p, (1,) * k) - linquad_cross_moment(p, range(k))))
        joint = np.exp(p.logpdf(oracle.all_states(d)))
        chain = max(chain, float(np.max(np.abs(joint - table))))
    worst = max(rec, ident, chain)
    ok = worst < 1e-10
    acceptance("3", ok, f"recursion {rec:.2e}, all-ones identity {ident:.2e}, chain joint {chain:.2e} (< 1e-10)")
    assert ok


def test_criterion_04_linquad_fit(acceptance, fixture_csv):
    sample = paramfile.read_samples(fixture_csv).sample
    worst_res = worst_mom = 0.0
    samples = [sample] + [WeightedSample(make_rng(s).random((300, d)) < 0.4, make_rng(s).uniform(0.2, 2, 300))
                          for s, d in ((1, 3), (2, 5), (3, 7))]
    for smp in samples:
        fit = fit_linquad(smp)
        mom = compute_moments(smp).second
        worst_res = max(worst_res, fit.residual)
        for i in range(smp.d):
            for j in range(i, smp.d):
                worst_mom = max(worst_mom, abs(linquad_cross_moment(fit.params, {i, j}) - mom[i, j]))
    ok = worst_res < 1e-10 and worst_mom < 1e-10
    acceptance("4", ok, f"linear-system residual {worst_res:.2e}, moment mismatch {worst_mom:.2e} (< 1e-10, d <= 8)")
    assert ok


def test_criterion_05_expquad_proxy(acceptance):
    rng = make_rng(505)
    exact_err = 0.0
    for d in (2, 3, 4, 5, 6):
        M = rng.normal(size=(d, d))
        A = 0.5 * (M + M.T)
        A[-1, :-1] = A[:-1, -1] = 0.0
        At, _ = taylor_marginal_step(A)
        marg = oracle.marginalize(oracle.ExplicitDistribution(d, expquad_table(A.tolist())), range(d - 1)).probs
        exact_err = max(exact_err, float(np.max(np.abs(expquad_table(At.tolist()) - marg))))
    diag_err = 0.0
    for d in (1, 3, 6):
        a = rng.normal(size=d)
        S = oracle.all_states(d)
        m = 1 / (1 + np.exp(-a))
        prod = np.prod(np.where(S == 1, m, 1 - m), axis=1)
        diag_err = max(diag_err, float(np.max(np.abs(np.exp(build_proxy(ExpQuParams(np.diag(a))).logpdf(S)) - prod))))
    M = rng.normal(scale=0.5, size=(6, 6))
    p = ExpQuParams(0.5 * (M + M.T))
    tv1, tv2 = proxy_tv_distance(p), proxy_tv_distance(p)
    ok = exact_err < 1e-12 and diag_err < 1e-12 and math.isfinite(tv1) and tv1 == tv2
    acceptance("5", ok, f"b=0 step error {exact_err:.2e} (< 1e-12), diagonal proxy vs product {diag_err:.2e}, "
                        f"proxy TV at d=6 {tv1:.4f} (repeat identical: {tv1 == tv2})")
    assert ok


def test_criterion_06_expquad_fit(acceptance):
    rng = make_rng(606)
    worst = 0.0
    for _ in range(5):
        M = rng.normal(size=(4, 4))
        A = 0.5 * (M + M.T)
        X = (rng.random((40, 4)) < 0.5).astype(np.uint8)
        X = np.vstack([X, oracle.all_states(4)])
        y = np.einsum("ni,ij,nj->n", X.astype(float), A, X.astype(float)) + rng.normal()
        fit = fit_expquad(WeightedSample(X), y)
        assert fit.rank == fit.n_coef
        worst = max(worst, fit.residual)
    ok = worst < 1e-8
    acceptance("6", ok, f"prediction residual {worst:.2e} (< 1e-8) on full-rank d=4 designs")
    assert ok


def test_criterion_07_logcond(acceptance):
    rng = make_rng(707)
    norm = 0.0
    for d in (2, 5, 8, 10):
        p = LogCoParams.dense(np.tril(rng.normal(scale=1.5, size=(d, d))))
        norm = max(norm, abs(np.exp(p.logpdf(oracle.all_states(d))).sum() - 1.0))
    B0 = np.array([[0.3, 0.0, 0.0, 0.0], [1.2, -0.4, 0.0, 0.0], [-0.9, 0.8, 0.2, 0.0], [0.5, -0.7, 1.0, -0.3]])
    p0 = LogCoParams.dense(B0)
    fit = fit_logcond(WeightedSample(p0.sample(make_rng(21), 100_000).rows), FitConfig(delta_corr=0.0))
    c0, c1 = p0.conditionals(), fit.params.conditionals()
    rec = max(abs(c0.prob(np.array(g, dtype=np.uint8)) - c1.prob(np.array(g, dtype=np.uint8)))
              for i in range(4) for g in states(i))
    g1 = (make_rng(2).random(2000) < 0.5).astype(np.uint8)
    sep = WeightedSample(np.column_stack([g1, g1, make_rng(3).random(2000) < 0.5]))
    sfit = fit_logcond(sep)
    probs = np.exp(sfit.params.logpdf(oracle.all_states(3)))
    valid = bool(np.isfinite(probs).all() and (probs >= 0).all() and abs(probs.sum() - 1) < 1e-12)
    terminated = all(r.iterations <= FitConfig().max_iter for r in sfit.reports)
    ok = norm < 1e-10 and rec < 0.02 and sfit.demoted != [] and valid and terminated
    acceptance("7", ok, f"normalisation {norm:.2e} (< 1e-10, d <= 10), conditional recovery {rec:.4f} (< 0.02, n=1e5), "
                        f"separation demoted {sfit.demoted}, valid distribution {valid}")
    assert ok


def test_criterion_08_gaussian_copula(acceptance):
    t0 = time.perf_counter()
    arc = max(abs(phi2(0, 0, s) - (0.25 + math.asin(s) / (2 * math.pi))) for s in np.round(np.arange(-0.9, 0.91, 0.1), 10))
    rng = make_rng(808)
    solve = 0.0
    for _ in range(100):
        y1, y2 = rng.normal(scale=0.8, size=2)
        target = bvn_quad1d(y1, y2, rng.uniform(-0.95, 0.95))
        rep = solve_pair(y1, y2, target)
        solve = max(solve, abs(phi2(y1, y2, rep.sigma) - target))
    S, _ = repair_pd(np.full((3, 3), -0.6) + 1.6 * np.eye(3))
    rep_err = float(np.max(np.abs(S[~np.eye(3, dtype=bool)] + 0.5)))
    p0 = GauCParams([-0.3, 0.2, 0.5, -0.8], [[1, 0.4, -0.3, 0.2], [0.4, 1, 0.25, 0], [-0.3, 0.25, 1, 0.35], [0.2, 0, 0.35, 1]])
    target = p0.second_moments()
    fit = fit_gauc(moments_from_arrays(p0.means(), target), GauCConfig(delta_corr=0.0))
    n = 1_000_000
    emp = compute_moments(WeightedSample(gauc_sample(fit.params, make_rng(77), n).rows)).second
    z = float(np.max(np.abs(emp - target) / np.sqrt(target * (1 - target) / n)))
    dt = time.perf_counter() - t0
    ok = arc < 1e-9 and solve < 1e-6 and rep_err < 1e-12 and not fit.repaired and z <= 3 and dt < 60
    acceptance("8", ok, f"arcsine identity {arc:.2e} (< 1e-9), 100 pair solves {solve:.2e} (< 1e-6), "
                        f"repair {rep_err:.2e} (< 1e-12), simulated moments max |z| {z:.2f} (<= 3), {dt:.1f} s (< 60 s)")
    assert ok


def test_criterion_09_poisson(acceptance):
    rng = make_rng(909)
    worst = norm = 0.0
    for _ in range(30):
        d = int(rng.integers(1, 7))
        n = int(rng.integers(1, 13))
        sets = tuple(tuple(rng.choice(n, size=int(rng.integers(1, min(n, 4) + 1)), replace=False).tolist()) for _ in range(d))
        p = PoiParams(sets, rng.uniform(0.05, 1.5, n))
        mass = np.array([poi_mass(p, g) for g in states(d)])
        worst = max(worst, float(np.max(np.abs(mass - poisson_pattern_table(p.sets, p.lam)))))
        norm = max(norm, abs(mass.sum() - 1))
    ind = PoiParams(((0,), (1,)), [math.log(2), math.log(2)])
    union, inter = poi_cross_moment(ind, [0, 1]), poi_cross_moment_intersection(ind, [0, 1])
    contrast = abs(union - 0.25) < 1e-15 and inter == 1.0
    ok = worst < 1e-10 and norm < 1e-10 and contrast
    acceptance("9", ok, f"mass vs pattern oracle {worst:.2e}, normalisation {norm:.2e} (< 1e-10); "
                        f"independent pair m12 union {union:.4f}, intersection {inter:.4f}")
    assert ok


def _fit_and_sample(tmp, family, fixture_csv, tag):
    pj = tmp / f"{family}-{tag}.json"
    out = tmp / f"{family}-{tag}.csv"
    assert cli.main(["fit", "--family", family, "--input", str(fixture_csv), "--output", str(pj)]) == 0
    argv = ["sample", "--params", str(pj), "--n", "500", "--seed", "42", "--output", str(out)]
    if family == "linquad":
        # the fixture fit puts negative mass on reachable prefixes; clamp explicitly
        argv.append("--force")
    assert cli.main(argv) == 0
    return pj.read_bytes(), out.read_bytes()


def test_criterion_10_end_to_end_determinism(acceptance, fixture_csv, tmp_path):
    sf = paramfile.read_samples(fixture_csv)
    assert (sf.sample.n, sf.sample.d) == (500, 8)
    t0 = time.perf_counter()
    same = {}
    for family in FAMILIES:
        a = _fit_and_sample(tmp_path, family, fixture_csv, "a")
        b = _fit_and_sample(tmp_path, family, fixture_csv, "b")
        same[family] = a == b
    dt = time.perf_counter() - t0
    ok = all(same.values()) and dt < 30
    acceptance("10", ok, f"byte-identical fit+sample for {sum(same.values())}/{len(same)} families, {dt:.1f} s (< 30 s)")
    assert ok
