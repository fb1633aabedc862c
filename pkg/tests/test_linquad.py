import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binfam import kernels, oracle
from binfam.core import WeightedSample, make_rng
from binfam.linquad import (
    LinQuParams,
    NegativeMass,
    SingularSystem,
    _moment_system,
    eval_linquad,
    fit_linquad,
    linquad_conditionals,
    linquad_cross_moment,
    linquad_marginal,
    linquad_mean,
    s_partial,
    tri_index,
    tri_pairs,
)
from oracles import linquad_table, states, table_cross_moment


def random_nonneg(d, seed):
    rng = make_rng(seed)
    M = rng.normal(size=(d, d))
    return LinQuParams(M @ M.T / d, float(rng.uniform(0.2, 2.0)))


def test_triangular_index_bijection():
    d = 6
    seen = sorted(tri_index(i, j) for i, j in tri_pairs(d))
    assert seen == list(range(d * (d + 1) // 2))
    assert tri_index(2, 4) == tri_index(4, 2)


def test_uniform_cross_moments():
    p = LinQuParams(np.zeros((4, 4)), 1.3)
    for I in oracle.subsets(4):
        assert linquad_cross_moment(p, I) == pytest.approx(2.0 ** -len(I))
    assert linquad_cross_moment(p, ()) == 1.0


def test_d1_example():
    p = LinQuParams([[2.0]], 1.0)
    assert p.mu == pytest.approx(0.25)
    assert linquad_cross_moment(p, [0]) == pytest.approx(0.75)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_cross_moments_and_mu_vs_enumeration(d, seed):
    p = random_nonneg(d, seed)
    table, mu = linquad_table(p.A.tolist(), p.a0)
    assert p.mu == pytest.approx(mu, rel=1e-12)
    for I in oracle.subsets(d):
        assert abs(linquad_cross_moment(p, I) - table_cross_moment(table, d, I)) < 1e-10
    means = [table_cross_moment(table, d, [i]) for i in range(d)]
    assert np.allclose(linquad_mean(p), means, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_marginal_recursion(d, seed):
    p = random_nonneg(d, seed)
    table, _ = linquad_table(p.A.tolist(), p.a0)
    for k in range(1, d + 1):
        marg = oracle.marginalize(oracle.ExplicitDistribution(d, table), range(k))
        for code, g in enumerate(states(k)):
            v = linquad_marginal(p, g)
            assert abs(v - marg.probs[code]) < 1e-10
            if k < d:
                ext = linquad_marginal(p, g + (0,)) + linquad_marginal(p, g + (1,))
                assert abs(v - ext) < 1e-10


def test_marginal_at_full_length_is_mass():
    p = random_nonneg(4, 11)
    for g in states(4):
        g = np.array(g)
        assert linquad_marginal(p, g) == pytest.approx(p.mu * (p.a0 + g @ p.A @ g), abs=1e-14)


def test_marginal_with_ones_reduces_to_cross_moment():
    p = random_nonneg(4, 5)
    for I in oracle.subsets(4):
        k = max(I) + 1
        tot = sum(linquad_marginal(p, g) for g in states(k) if all(g[i] for i in I))
        assert tot == pytest.approx(linquad_cross_moment(p, I), abs=1e-12)


def test_zero_matrix_marginals_uniform():
    p = LinQuParams(np.zeros((3, 3)), 2.0)
    for k in (1, 2, 3):
        for g in states(k):
            assert linquad_marginal(p, g) == pytest.approx(2.0 ** -k)
    cond = linquad_conditionals(p)
    for g in states(2):
        assert cond.prob(np.array(g)) == pytest.approx(0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_chain_joint_matches_table(d, seed):
    p = random_nonneg(d, seed)
    table, _ = linquad_table(p.A.tolist(), p.a0)
    S = oracle.all_states(d)
    for backend in ("numba", "numpy"):
        _, lp, bad, _ = kernels.linquad_chain(p.A, p.a0, Y=S, backend=backend)
        assert bad == -1
        assert np.max(np.abs(np.exp(lp) - table)) < 1e-10
    cond = p.conditionals()
    for code in range(0, 1 << d, max(1, (1 << d) // 8)):
        g = S[code]
        q = 1.0
        for i in range(d):
            r = cond.prob(g[:i])
            q *= r if g[i] else 1 - r
        assert abs(q - table[code]) < 1e-10


def test_sampling_matches_table():
    p = random_nonneg(4, 3)
    table, _ = linquad_table(p.A.tolist(), p.a0)
    b = p.sample(make_rng(2), 400_000)
    emp = oracle.empirical_table(b.rows, 4)
    assert oracle.tv_distance(emp, table) < 0.01
    assert np.allclose(np.exp(b.logprob), table[oracle.encode(b.rows)], atol=1e-12)


def test_two_dimensional_anticorrelated_fit_is_exact():
    # every distribution on two bits is linear-quadratic, so no negativity arises
    fit = fit_linquad(WeightedSample([[1, 0], [0, 1]]))
    assert fit.residual < 1e-10
    assert fit.nonnegative is True
    table = fit.params.mu * fit.params.unnormalized(oracle.all_states(2))
    assert np.allclose(table, [0.0, 0.5, 0.5, 0.0], atol=1e-14)


def exclusive_fit():
    return fit_linquad(WeightedSample([[1, 0, 0], [0, 1, 0], [0, 0, 1]]))


def test_negatively_correlated_fit_flags_negativity():
    fit = exclusive_fit()
    assert fit.residual < 1e-10
    assert fit.nonnegative is False
    table, _ = linquad_table(fit.params.A.tolist(), fit.params.a0)
    assert table[7] == pytest.approx(-0.125, abs=1e-12)
    with pytest.raises(NegativeMass) as err:
        fit.params.conditionals().prob(np.array([1, 1]))
    assert err.value.prefix == (1, 1)
    with pytest.raises(NegativeMass):
        eval_linquad(fit.params, [1, 1, 1])
    with pytest.raises(NegativeMass):
        fit.params.logpdf(oracle.all_states(3))


def exclusive_with_zero_fit():
    rows = np.vstack([np.eye(4, dtype=np.uint8), np.zeros((1, 4), dtype=np.uint8)])
    return fit_linquad(WeightedSample(rows))


def test_sampler_detects_reachable_negative_prefix():
    fit = exclusive_with_zero_fit()
    assert fit.nonnegative is False
    with pytest.raises(NegativeMass) as err:
        fit.params.sample(make_rng(0), 5000)
    assert linquad_marginal(fit.params, err.value.prefix + (1,)) < 0


def test_force_mode_clamps():
    b = exclusive_with_zero_fit().params.sample(make_rng(0), 5000, force=True)
    assert b.info["clamped"]


def test_fit_reproduces_known_table_moments():
    p = random_nonneg(4, 21)
    table, _ = linquad_table(p.A.tolist(), p.a0)
    dist = oracle.ExplicitDistribution(4, table)
    fit = fit_linquad(second=dist.second_moments())
    for i in range(4):
        for j in range(i, 4):
            assert abs(linquad_cross_moment(fit.params, {i, j}) - dist.second_moments()[i, j]) < 1e-8
    assert 2.0 ** (4 - 2) * fit.params.denominator * fit.params.mu == pytest.approx(1.0, rel=1e-12)


def test_fit_on_product_half_has_no_off_diagonal():
    X = np.array(states(5), dtype=np.uint8)
    fit = fit_linquad(WeightedSample(X))
    off = fit.params.A - np.diag(np.diag(fit.params.A))
    assert np.max(np.abs(off)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_fit_residual(d, seed):
    rng = make_rng(seed)
    X = (rng.random((200, d)) < rng.uniform(0.2, 0.8, d)).astype(np.uint8)
    fit = fit_linquad(WeightedSample(X, rng.random(200) + 0.1))
    assert fit.residual < 1e-10


def test_moment_system_cached_and_conditioned():
    M1, _, rc = _moment_system(5)
    M2, _, _ = _moment_system(5)
    assert M1 is M2
    assert rc > 1e-10


def test_fit_requires_input():
    with pytest.raises(TypeError):
        fit_linquad()


def test_singular_error_type():
    assert issubclass(SingularSystem, np.linalg.LinAlgError)


def test_s_partial_scale():
    p = random_nonneg(3, 1)
    # the empty prefix carries the total mass
    assert p.mu * 2.0 ** (3 - 2) * s_partial(p, []) == pytest.approx(1.0, abs=1e-12)
