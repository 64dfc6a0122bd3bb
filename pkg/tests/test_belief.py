import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anomsense import belief as bl
from anomsense.env import analytic_dependency_model, joint_prior
from anomsense.model import EPS, CorrelatedPriorConfig, DependencyModel, Observation, ObservationChannel

CH = ObservationChannel(0.2)


def prior(rho, q=0.8):
    return CorrelatedPriorConfig(5, q, rho, ((1, 2), (3, 4)))


def brute_likelihood(pri, p, a, y, i, s):
    """P[y_a = y | s_i = s] by summing the exact joint prior over configurations."""
    joint = joint_prior(pri)
    configs = bl.configurations(pri.n_processes)
    mask = configs[:, i] == s
    chan = np.where(configs[:, a] == y, 1 - p, p)
    return float((joint[mask] * chan[mask]).sum() / joint[mask].sum())


@pytest.mark.parametrize("rho", [0.0, 0.6, 1.0])
def test_likelihood_matches_enumeration(rho):
    pri = prior(rho)
    dep = analytic_dependency_model(pri)
    table = bl.likelihood_table(dep, CH)
    for a in range(5):
        for i in range(5):
            for y in (0, 1):
                for s in (0, 1):
                    expected = brute_likelihood(pri, 0.2, a, y, i, s)
                    assert bl.likelihood(dep, CH, a, y, i, s) == pytest.approx(expected, abs=1e-12)
                    assert table[a, y, i, s] == pytest.approx(expected, abs=1e-12)


def test_likelihood_self_observation():
    dep = analytic_dependency_model(prior(0.6))
    assert bl.likelihood(dep, CH, 2, 0, 2, 0) == pytest.approx(0.8)


def test_likelihood_independent_process_is_flat():
    dep = analytic_dependency_model(prior(0.6))
    assert bl.likelihood(dep, CH, 0, 1, 4, 0) == pytest.approx(bl.likelihood(dep, CH, 0, 1, 4, 1))


def test_likelihood_uninformative_channel():
    dep = analytic_dependency_model(prior(0.6))
    half = ObservationChannel(0.5)
    assert np.allclose(bl.likelihood_table(dep, half), 0.5)


def test_marginal_self_update():
    dep = DependencyModel.independent([0.5, 0.5])
    out = bl.update_marginal(np.array([0.5, 0.5]), dep, CH, Observation(1, 0, 1))
    assert out[0] == pytest.approx(0.8)
    assert out[1] == pytest.approx(0.5)


def test_marginal_update_perfect_pair():
    dep = analytic_dependency_model(prior(1.0))
    out = bl.update_marginal(np.full(5, 0.8), dep, CH, Observation(1, 0, 1))
    assert out[1] == pytest.approx(0.64 / 0.68)
    assert out[0] == pytest.approx(0.64 / 0.68)
    np.testing.assert_allclose(out[2:], 0.8)


def test_naive_update():
    b = np.array([0.5, 0.8, 0.8])
    out = bl.update_naive(b, CH, Observation(1, 0, 1))
    assert out[0] == pytest.approx(0.8)
    np.testing.assert_array_equal(out[1:], b[1:])
    np.testing.assert_array_equal(bl.update_naive(b, ObservationChannel(0.5), Observation(2, 1, 1)), b)


def test_joint_update_example():
    out = bl.update_joint(np.full(4, 0.25), CH, Observation(1, 0, 1))
    np.testing.assert_allclose(out, [0.4, 0.4, 0.1, 0.1])
    np.testing.assert_allclose(bl.marginalize(out), [0.8, 0.5])


def test_joint_update_uninformative():
    j = joint_prior(prior(0.6))
    np.testing.assert_allclose(bl.update_joint(j, ObservationChannel(0.5), Observation(3, 1, 1)), j)


def test_marginalize_examples():
    np.testing.assert_allclose(bl.marginalize(np.full(8, 1 / 8)), 0.5)
    np.testing.assert_allclose(bl.marginalize(np.array([0.0, 1.0, 0.0, 0.0])), [1.0, 0.0])


def test_entropy_values():
    assert bl.entropy(0.0) == 0.0
    assert bl.entropy(1.0) == 0.0
    assert bl.entropy(0.5) == pytest.approx(math.log(2))
    assert bl.entropy(0.8) == pytest.approx(0.5004024235381879)


def test_reward_values():
    b = np.array([0.5, 0.9, 0.3])
    assert bl.reward(b, b) == 0.0
    after = b.copy()
    after[0] = 0.8
    assert bl.reward(b, after) == pytest.approx(0.19274475702175742)
    assert bl.reward(after, b) == pytest.approx(-0.19274475702175742)
    with pytest.raises(ValueError):
        bl.reward(b, b[:2])


def test_estimate_ties_go_to_normal():
    est = bl.extract_estimate(np.array([0.5, 0.9, 0.1]))
    assert est.estimate.tolist() == [0, 0, 1]
    np.testing.assert_allclose(est.confidences, [0.5, 0.9, 0.9])
    est = bl.extract_estimate(np.array([0.99, 0.01, 0.6]))
    assert est.estimate.tolist() == [0, 1, 0]
    assert est.min_confidence == pytest.approx(0.6)


def test_should_stop():
    assert bl.should_stop(np.array([0.99, 0.01, 0.99, 0.99, 0.99]), 0.95)
    assert not bl.should_stop(np.array([0.99, 0.95, 0.99]), 0.95)
    assert not bl.should_stop(np.array([0.99, 0.05, 0.99]), 0.95)
    assert not bl.should_stop(np.array([0.5, 1.0, 1.0]), 0.7)


beliefs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).map(np.array)


@given(beliefs, st.floats(0.5, 0.999), st.floats(0.5, 0.999))
def test_should_stop_monotone_in_threshold(b, t1, t2):
    lo, hi = sorted((t1, t2))
    if bl.should_stop(b, hi):
        assert bl.should_stop(b, lo)


@given(beliefs)
def test_estimate_consistent_with_beliefs(b):
    est = bl.extract_estimate(b)
    assert np.all((est.estimate == 0) == (b >= 0.5))
    assert np.all(est.confidences >= 0.5) and np.all(est.confidences <= 1.0)


@given(beliefs, beliefs)
def test_reward_bounded(b1, b2):
    n = min(b1.size, b2.size)
    assert abs(bl.reward(b1[:n], b2[:n])) <= n * math.log(2) + 1e-12


obs_sequences = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=40)


def _run(rule, seq):
    states = [rule.initial()]
    rewards = []
    for a, y in seq:
        states.append(rule.update(states[-1], a, y))
        rewards.append(rule.reward(states[-2], states[-1]))
    return states, rewards


@given(obs_sequences, st.sampled_from([0.0, 0.6, 1.0]))
def test_reward_telescopes_for_all_rules(seq, rho):
    pri = prior(rho)
    rules = [bl.MarginalRule(analytic_dependency_model(pri), CH, np.full(5, 0.8)),
             bl.NaiveRule(CH, np.full(5, 0.8)),
             bl.JointRule(CH, joint_prior(pri), "marginal")]
    for rule in rules:
        states, rewards = _run(rule, seq)
        m0, mk = rule.marginals(states[0]), rule.marginals(states[-1])
        assert sum(rewards) == pytest.approx(float(np.sum(bl.entropy(m0) - bl.entropy(mk))), abs=1e-9)
    joint = bl.JointRule(CH, joint_prior(pri), "joint")
    states, rewards = _run(joint, seq)
    assert sum(rewards) == pytest.approx(bl.joint_entropy(states[0]) - bl.joint_entropy(states[-1]), abs=1e-9)


@given(obs_sequences)
def test_marginal_equals_naive_under_independence(seq):
    dep = DependencyModel.independent(np.full(5, 0.8))
    m = bl.MarginalRule(dep, CH, np.full(5, 0.8))
    n = bl.NaiveRule(CH, np.full(5, 0.8))
    for sm, sn in zip(_run(m, seq)[0], _run(n, seq)[0]):
        np.testing.assert_allclose(sm, sn, rtol=0, atol=1e-12)


@given(obs_sequences)
def test_marginal_exact_for_perfect_pairs(seq):
    pri = prior(1.0)
    m = bl.MarginalRule(analytic_dependency_model(pri), CH, np.full(5, 0.8))
    joint = joint_prior(pri)
    belief = m.initial()
    for k, (a, y) in enumerate(seq, start=1):
        belief = m.update(belief, a, y)
        joint = bl.update_joint(joint, CH, Observation(a + 1, y, k))
        np.testing.assert_allclose(belief, bl.clamp(bl.marginalize(joint)), rtol=0, atol=1e-9)


@given(st.integers(0, 4), st.integers(0, 1), st.integers(0, 4), st.integers(0, 1),
       st.floats(0.01, 0.99), st.sampled_from([0.0, 0.6, 1.0]))
def test_joint_update_order_invariant(a1, y1, a2, y2, p, rho):
    ch = ObservationChannel(p)
    j = joint_prior(prior(rho))
    o1, o2 = Observation(a1 + 1, y1, 1), Observation(a2 + 1, y2, 2)
    np.testing.assert_allclose(bl.update_joint(bl.update_joint(j, ch, o1), ch, o2),
                               bl.update_joint(bl.update_joint(j, ch, o2), ch, o1), atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 4), st.just(0)), min_size=1, max_size=200))
def test_beliefs_stay_clamped(seq):
    m = bl.MarginalRule(analytic_dependency_model(prior(1.0)), ObservationChannel(0.0), np.full(5, 0.8))
    for s in _run(m, seq)[0]:
        assert np.all(s >= EPS) and np.all(s <= 1 - EPS)


def test_make_rule_names():
    pri = prior(0.6)
    dep = analytic_dependency_model(pri)
    assert isinstance(bl.make_rule("proposed", dep=dep, channel=CH, prior=np.full(5, 0.8)), bl.MarginalRule)
    assert isinstance(bl.make_rule("naive", channel=CH, prior=np.full(5, 0.8)), bl.NaiveRule)
    assert isinstance(bl.make_rule("joint", channel=CH, prior_joint=joint_prior(pri)), bl.JointRule)
    with pytest.raises(ValueError):
        bl.make_rule("other")
