import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from binfam import oracle
from binfam.core import chain_rule_sample_batch, make_rng
from binfam.expquad import ExpQuParams
from binfam.linquad import LinQuParams
from binfam.product import ProductParams
from oracles import states, table_cross_moment


def product_table(m):
    d = len(m)
    return np.array([np.prod([m[i] if g[i] else 1 - m[i] for i in range(d)]) for g in states(d)])


def test_cross_moment_examples():
    assert oracle.cross_moment(oracle.uniform(2), (0, 1)) == pytest.approx(0.25)
    pm = oracle.point_mass([1, 1, 1])
    for I in oracle.subsets(3):
        assert oracle.cross_moment(pm, I) == 1.0
    dist = oracle.ExplicitDistribution(2, product_table([0.3, 0.6]))
    assert oracle.cross_moment(dist, (0, 1)) == pytest.approx(0.18)
    assert oracle.cross_moment(dist, ()) == 1.0
    with pytest.raises(IndexError):
        oracle.cross_moment(dist, (2,))


def test_correlation_order_examples():
    dist = oracle.ExplicitDistribution(3, product_table([0.2, 0.5, 0.7]))
    for I in [(0, 1), (0, 2), (0, 1, 2)]:
        assert oracle.correlation_order(dist, I) == pytest.approx(0.0, abs=1e-14)
    como = oracle.ExplicitDistribution(2, [0.5, 0.0, 0.0, 0.5])
    assert oracle.correlation_order(como, (0, 1)) == pytest.approx(1.0)
    t = oracle.random_table(3, make_rng(2))
    m = t.means()
    direct = sum(
        p * np.prod([(g[i] - m[i]) / np.sqrt(m[i] * (1 - m[i])) for i in range(3)])
        for p, g in zip(t.probs, states(3))
    )
    assert oracle.correlation_order(t, (0, 1, 2)) == pytest.approx(direct, abs=1e-14)


def test_correlation_order_degenerate():
    with pytest.raises(ValueError):
        oracle.correlation_order(oracle.point_mass([1, 0]), (0, 1))


def test_marginalize_examples():
    assert np.allclose(oracle.marginalize(oracle.uniform(3), [0]).probs, [0.5, 0.5])
    t = oracle.random_table(4, make_rng(1))
    assert np.array_equal(oracle.marginalize(t, range(4)).probs, t.probs)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_marginal_at_ones_is_cross_moment(d, seed):
    t = oracle.random_table(d, make_rng(seed))
    for I in oracle.subsets(d):
        marg = oracle.marginalize(t, I)
        assert marg.probs[-1] == pytest.approx(oracle.cross_moment(t, I), abs=1e-14)
        assert oracle.cross_moment(t, I) == pytest.approx(table_cross_moment(t.probs, d, I), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.data())
def test_marginalize_composes(d, seed, data):
    t = oracle.random_table(d, make_rng(seed))
    I = data.draw(st.lists(st.integers(0, d - 1), min_size=1, max_size=d, unique=True))
    J = data.draw(st.lists(st.sampled_from(range(len(I))), min_size=1, max_size=len(I), unique=True))
    two = oracle.marginalize(oracle.marginalize(t, I), J)
    one = oracle.marginalize(t, [I[j] for j in J])
    assert np.allclose(two.probs, one.probs, atol=1e-15)


def test_conditionals_examples():
    cond = oracle.conditionals(oracle.ExplicitDistribution(3, product_table([0.2, 0.5, 0.9])))
    for prefix in states(2):
        assert cond.prob(np.array(prefix)) == pytest.approx(0.9)
    pm = oracle.conditionals(oracle.point_mass([1, 0, 1]))
    assert pm.prob(np.array([], dtype=np.uint8)) == 1.0
    assert pm.prob(np.array([1])) == 0.0
    assert pm.prob(np.array([1, 0])) == 1.0
    # off the atom the prefix has probability zero; the convention gives 0
    assert pm.prob(np.array([0])) == 0.0
    assert pm.zero_prefix_hits >= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_chain_product_reproduces_table(d, seed):
    t = oracle.random_table(d, make_rng(seed))
    cond = oracle.conditionals(t)
    for k, g in enumerate(states(d)):
        p = 1.0
        for i in range(d):
            r = cond.prob(np.array(g[:i], dtype=np.uint8))
            p *= r if g[i] else 1 - r
        assert p == pytest.approx(t.probs[k], abs=1e-10)


def test_chain_sampling_tv_small():
    t = oracle.random_table(5, make_rng(8))
    Y, _ = chain_rule_sample_batch(oracle.conditionals(t), make_rng(9), 1_000_000)
    emp = oracle.empirical_table(Y, 5)
    assert oracle.tv_distance(emp, t) < 0.01


def test_bahadur_vanishing_correlations_is_product():
    m = np.array([0.2, 0.6, 0.7])
    rec = oracle.bahadur_reconstruct(m, {})
    assert np.allclose(rec.probs, product_table(m), atol=1e-15)


def test_bahadur_comonotone_pair():
    rec = oracle.bahadur_reconstruct([0.5, 0.5], {(0, 1): 1.0})
    assert np.allclose(rec.probs, [0.5, 0.0, 0.0, 0.5], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bahadur_roundtrip_d4(seed):
    t = oracle.random_table(4, make_rng(seed))
    m, c = oracle.extract_correlations(t)
    assert np.max(np.abs(oracle.bahadur_reconstruct(m, c).probs - t.probs)) < 1e-10


def test_bahadur_truncation_may_be_signed():
    rec = oracle.bahadur_reconstruct([0.5, 0.5], {(0, 1): 1.5})
    assert not rec.nonnegative


def test_alias_examples():
    table = oracle.build_alias(oracle.point_mass([0, 1, 1]))
    draws = oracle.alias_sample(table, make_rng(0), 1000)
    assert (draws == [0, 1, 1]).all()
    t = oracle.random_table(5, make_rng(4))
    assert np.max(np.abs(oracle.build_alias(t).probabilities() - t.probs)) < 1e-12


def test_alias_uniform_chi_square():
    table = oracle.build_alias(oracle.uniform(2))
    draws = oracle.alias_sample(table, make_rng(31), 100_000)
    counts = np.bincount(oracle.encode(draws), minlength=4)
    _, pval = stats.chisquare(counts)
    assert pval > 0.001


def test_enumerate_family_examples():
    assert np.allclose(oracle.enumerate_family(ProductParams([0.25])).probs, [0.75, 0.25])
    m = np.array([0.3, 0.6, 0.8])
    e = oracle.enumerate_family(ExpQuParams(np.diag(np.log(m / (1 - m)))))
    assert np.allclose(e.probs, product_table(m), atol=1e-15)
    lq = oracle.enumerate_family(LinQuParams([[2.0]], 1.0))
    assert np.allclose(lq.probs, [0.25, 0.75])


def test_enumerate_family_limits():
    with pytest.raises(oracle.OracleDimensionError):
        oracle.enumerate_family(ProductParams(np.full(21, 0.5)))
    with pytest.raises(TypeError):
        oracle.enumerate_family(type("NoEval", (), {"d": 2})())
    with pytest.warns(UserWarning):
        signed = oracle.enumerate_family(LinQuParams([[0.0, -1.0], [-1.0, 0.0]], 1.0))
    assert not signed.nonnegative


def test_table_validation():
    with pytest.raises(ValueError):
        oracle.ExplicitDistribution(1, [0.3, 0.3])
    with pytest.raises(ValueError):
        oracle.ExplicitDistribution(1, [1.5, -0.5])
