"""Acceptance criteria 1-9, each at its stated tolerance.

Criteria 4-9 train full cells (5000 episodes each) and take several minutes in
total; the trained cells are shared through a session cache. Every test records
one PASS/FAIL line, printed in the terminal summary.
"""
import functools
import math

import numpy as np
import pytest

from anomsense import belief as bl
from anomsense.agent import ActorPolicy, RandomPolicy, build_rule, evaluate
from anomsense.env import analytic_dependency_model, generate_training_data, joint_prior, stream_rng
from anomsense.experiment import cell_seeds, emit_results, measure_decision_latency, run_cell, summarize
from anomsense.model import Observation, load_config
from anomsense.nn import MLP, backward, critic_input, forward_actor, forward_critic, grad_log_prob

from conftest import STABLE_CONFIG
from test_nn import central_difference

ACCEPT = load_config(STABLE_CONFIG)
MASTER_SEED = 0
EVAL_EPISODES = 2000
THRESHOLDS = (0.7, 0.8, 0.9, 0.95)


@functools.lru_cache(maxsize=None)
def cell(algorithm, rho, pi_upper):
    result, policy, rule, traces = run_cell(ACCEPT, algorithm, rho, pi_upper, EVAL_EPISODES, MASTER_SEED,
                                            return_policy=True)
    if isinstance(policy, ActorPolicy):
        assert np.all(np.isfinite(policy.actor.theta))
    return result, rule, traces, policy


def diff_se(a, b):
    return math.hypot(a.stderr, b.stderr)


def acc_se(c):
    return math.sqrt(max(c.accuracy * (1 - c.accuracy), 1e-12) / EVAL_EPISODES)


def test_1_marginal_update_is_exact_at_independence_and_full_correlation(acceptance_report):
    worst = 0.0
    for rho in (0.0, 1.0):
        cfg = ACCEPT.with_(correlation=rho)
        dep, channel = analytic_dependency_model(cfg.prior), cfg.channel
        joint0 = joint_prior(cfg.prior)
        configs = bl.configurations(cfg.n_processes)
        rng = stream_rng(1, "oracle", int(rho))
        for _ in range(500):
            joint, marg = joint0, bl.marginalize(joint0, configs)
            truth = configs[rng.choice(len(joint0), p=joint0)]
            for k in range(1, 31):
                a = int(rng.integers(cfg.n_processes))
                y = int(truth[a]) ^ int(rng.random() < cfg.flip_probability)
                obs = Observation(a + 1, y, k)
                marg = bl.update_marginal(marg, dep, channel, obs)
                joint = bl.update_joint(joint, channel, obs, configs)
                worst = max(worst, float(np.max(np.abs(marg - bl.marginalize(joint, configs)))))
    assert acceptance_report(1, worst < 1e-9, f"max |marginal - marginalized joint| = {worst:.2e} (tol 1e-9)")


def test_2_gradients_match_central_differences(acceptance_report):
    rng = np.random.default_rng(7)
    worst = {"actor": 0.0, "critic": 0.0}
    for _ in range(100):
        n = int(rng.integers(2, 7))
        actor = MLP.init(n, 16, n, "softmax", rng)
        actor.theta += 0.1 * rng.standard_normal(actor.theta.size)
        x, a = 2 * rng.random(n) - 1, int(rng.integers(n))
        g, _ = grad_log_prob(actor, x, a)
        num = central_difference(lambda: np.log(forward_actor(actor, x)[a]), actor.theta)
        worst["actor"] = max(worst["actor"], _rel(g, num))

        critic = MLP.init(2 * n + 1, 16, 1, "scalar", rng)
        critic.theta += 0.1 * rng.standard_normal(critic.theta.size)
        xc = critic_input(2 * rng.random(n) - 1, 2 * rng.random(n) - 1, rng.normal())
        g = backward(critic, xc, np.array([1.0]))
        num = central_difference(lambda: forward_critic(critic, xc), critic.theta)
        worst["critic"] = max(worst["critic"], _rel(g, num))
    ok = max(worst.values()) < 1e-4
    assert acceptance_report(2, ok, f"max relative error actor {worst['actor']:.1e}, critic {worst['critic']:.1e} "
                                    "(tol 1e-4, 100 instances per head)")


def _rel(a, b):
    # relative error of the whole gradient vector, so exact zeros are not divided by themselves
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def _telescoping_error(rule, traces):
    worst = 0.0
    for t in traces:
        drop = rule.uncertainty(rule.initial()) - rule.uncertainty(t.steps[-1].state_after)
        worst = max(worst, abs(t.reward_sum - drop))
        marg = float(np.sum(bl.entropy(t.initial_belief)) - np.sum(bl.entropy(t.final_belief)))
        if rule.name != "joint" or rule.reward_kind == "marginal":
            worst = max(worst, abs(t.reward_sum - marg))
    return worst


def test_3_rewards_telescope(acceptance_report):
    worst = 0.0
    for rho in (0.0, 0.6, 1.0):
        cfg = ACCEPT.with_(correlation=rho)
        data = generate_training_data(cfg.prior, cfg.training_samples, cell_seeds(MASTER_SEED)[0])
        for alg, kind in (("proposed", "joint"), ("naive", "joint"), ("joint", "joint"), ("joint", "marginal")):
            rule = build_rule(alg, cfg, data, joint_reward=kind)
            traces = evaluate(RandomPolicy(rule.n), rule, cfg, 300, seed=5)
            worst = max(worst, _telescoping_error(rule, traces))
    for key in (("proposed", 1.0, 0.95), ("naive", 0.0, 0.95)):
        _, rule, traces, _ = cell(*key)
        worst = max(worst, _telescoping_error(rule, traces))
    assert acceptance_report(3, worst < 1e-9, f"max |sum r - entropy drop| = {worst:.2e} (tol 1e-9)")


def _one_inversion_rule(values, ses):
    drops = [(i, values[i] - values[i + 1]) for i in range(len(values) - 1) if values[i + 1] < values[i]]
    if not drops:
        return True
    return len(drops) == 1 and drops[0][1] <= max(ses[drops[0][0]], ses[drops[0][0] + 1])


@pytest.mark.slow
def test_4_accuracy_and_stopping_time_grow_with_threshold(acceptance_report):
    cells = [cell("proposed", 0.6, pi)[0] for pi in THRESHOLDS]
    acc = [c.accuracy for c in cells]
    k = [c.mean_stopping_time for c in cells]
    ok = _one_inversion_rule(acc, [acc_se(c) for c in cells]) and _one_inversion_rule(k, [c.stderr for c in cells])
    assert acceptance_report(4, ok, "accuracy " + ", ".join(f"{a:.3f}" for a in acc)
                             + " | K " + ", ".join(f"{v:.2f}" for v in k) + f" over pi {THRESHOLDS}")


@pytest.mark.slow
def test_5_only_the_proposed_rule_exploits_correlation(acceptance_report):
    naive = [cell("naive", rho, 0.95)[0] for rho in (0.0, 0.6, 1.0)]
    p0, p1 = cell("proposed", 0.0, 0.95)[0], cell("proposed", 1.0, 0.95)[0]
    spread = max(abs(a.mean_stopping_time - b.mean_stopping_time) / diff_se(a, b)
                 for i, a in enumerate(naive) for b in naive[i + 1:])
    gain = (p0.mean_stopping_time - p1.mean_stopping_time) / diff_se(p0, p1)
    agree = abs(p0.mean_stopping_time - naive[0].mean_stopping_time) / diff_se(p0, naive[0])
    ok = spread < 2 and gain > 2 and agree < 2
    # diagnostic only: one fixed naive policy evaluated across rho separates the
    # tracker's insensitivity from differences between independently trained policies
    _, rule0, _, policy0 = cell("naive", 0.0, 0.95)
    fixed = [summarize("naive", rho, 0.95, evaluate(policy0, rule0, ACCEPT.with_(correlation=rho), EVAL_EPISODES,
                                                     seed=cell_seeds(MASTER_SEED)[2]))
             for rho in (0.0, 0.6, 1.0)]
    fixed_spread = max(abs(a.mean_stopping_time - b.mean_stopping_time) / diff_se(a, b)
                       for i, a in enumerate(fixed) for b in fixed[i + 1:])
    detail = (f"(a) naive K {', '.join(f'{c.mean_stopping_time:.2f}' for c in naive)}, max gap {spread:.2f} SE (<2); "
              f"(b) proposed K rho0 {p0.mean_stopping_time:.2f} vs rho1 {p1.mean_stopping_time:.2f}, "
              f"gap {gain:.2f} SE (>2); (c) rho0 proposed vs naive gap {agree:.2f} SE (<2) "
              f"[rho0 naive policy re-evaluated across rho: K {', '.join(f'{c.mean_stopping_time:.2f}' for c in fixed)}, "
              f"max gap {fixed_spread:.2f} SE]")
    assert acceptance_report(5, ok, detail)


@pytest.mark.slow
def test_6_accuracy_dips_at_intermediate_correlation(acceptance_report):
    c0, c6, c1 = (cell("proposed", rho, 0.95)[0] for rho in (0.0, 0.6, 1.0))
    ok = c6.accuracy <= c0.accuracy + acc_se(c6) and c6.accuracy <= c1.accuracy + acc_se(c6)
    assert acceptance_report(6, ok, f"accuracy rho0 {c0.accuracy:.4f}, rho0.6 {c6.accuracy:.4f}, "
                                    f"rho1 {c1.accuracy:.4f} (1 SE slack {acc_se(c6):.4f})")


def test_7_joint_baseline_is_slower_per_decision(acceptance_report):
    big = ACCEPT.with_(n_processes=10)
    joint = measure_decision_latency("joint", big, 3000, seed=1)
    prop10 = measure_decision_latency("proposed", big, 3000, seed=1)
    prop5 = measure_decision_latency("proposed", ACCEPT, 5000, seed=1)
    naive5 = measure_decision_latency("naive", ACCEPT, 5000, seed=1)
    ratio = prop5.median / naive5.median
    ok = joint.median > prop10.median and 1 / 1.2 <= ratio <= 1.2
    assert acceptance_report(7, ok, f"N=10 median joint {joint.median * 1e6:.1f}us > proposed "
                                    f"{prop10.median * 1e6:.1f}us; N=5 proposed/naive = {ratio:.3f} (within 20%)")


@pytest.mark.slow
def test_8_trained_policy_beats_random(acceptance_report):
    trained = cell("proposed", 1.0, 0.95)[0]
    rand = cell("random", 1.0, 0.95)[0]
    gap = (rand.mean_stopping_time - trained.mean_stopping_time) / diff_se(trained, rand)
    assert acceptance_report(8, gap > 2, f"K trained {trained.mean_stopping_time:.2f} vs random "
                                         f"{rand.mean_stopping_time:.2f}, gap {gap:.2f} SE (>2)")


@pytest.mark.slow
def test_9_cell_rerun_is_byte_identical(acceptance_report, tmp_path):
    first = cell("naive", 0.0, 0.95)[0]
    again = run_cell(ACCEPT, "naive", 0.0, 0.95, EVAL_EPISODES, MASTER_SEED)
    a = emit_results([first], tmp_path / "a")["csv"].read_bytes()
    b = emit_results([again], tmp_path / "b")["csv"].read_bytes()
    assert acceptance_report(9, a == b, f"re-run row {'identical' if a == b else 'differs'}: "
                                        f"{first.row()}")
