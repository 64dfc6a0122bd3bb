"""Episode loop, online actor-critic learning and the baseline policies."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import belief as bl
from .env import (Episode, TrainingDataset, estimate_dependency_model, estimate_joint_prior,
                  estimate_prior_beliefs, sample_state, stream_rng)
from .model import AgentConfig, DependencyModel, ExperimentConfig, StateEstimate
from .nn import MLP, SGD, Adam, critic_input, softmax

log = logging.getLogger(__name__)

ALGORITHMS = ("proposed", "joint", "naive", "random")


class EpisodeAborted(RuntimeError):
    pass


@dataclass
class EpisodeStep:
    k: int
    action: int  # 1-based
    observation: int
    state_before: np.ndarray
    state_after: np.ndarray
    reward: float
    td_error: float | None = None


@dataclass
class EpisodeTrace:
    steps: list
    truncated: bool
    estimate: StateEstimate
    ground_truth: np.ndarray
    initial_belief: np.ndarray
    final_belief: np.ndarray

    @property
    def stopping_time(self) -> int:
        return len(self.steps)

    @property
    def correct(self) -> bool:
        return bool(np.array_equal(self.estimate.estimate, self.ground_truth))

    @property
    def reward_sum(self) -> float:
        return float(sum(s.reward for s in self.steps))


def sample_index(probs, rng) -> int:
    """Inverse-cdf draw from a probability vector (one uniform per call)."""
    idx = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return min(idx, probs.size - 1)


def select_action(actor: MLP, belief, rng, mode="sample") -> int:
    """0-based process index drawn from (or maximizing) the actor's output."""
    logits, _ = actor.forward(belief)
    probs = softmax(logits)
    if mode == "greedy":
        return int(np.argmax(probs))
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    return sample_index(probs, rng)


def td_error(r, v_current, v_previous, gamma, terminal=False) -> float:
    """r + gamma * V(next) - V(prev); at a terminal step ``v_current`` is ignored (value 0)."""
    return r + gamma * (0.0 if terminal else v_current) - v_previous


def terminal_value(rule, state, agent: AgentConfig) -> float:
    """Value credited for declaring at ``state``.

    ``"residual"``: the uncertainty still left at the declaration, so the
    undiscounted return of every episode is the initial uncertainty and the
    discount alone decides, i.e. stopping sooner is better. ``"zero"``: nothing,
    which leaves the agent an incentive to keep harvesting entropy from
    already-confident processes before it stops.
    """
    return rule.uncertainty(state) if agent.terminal_value == "residual" else 0.0


class ActorCritic:
    """Separate actor and critic networks with their own optimizers."""

    def __init__(self, n_features, n_actions, agent: AgentConfig, rng, optimizer="adam"):
        width = agent.hidden_width
        self.agent = agent
        self.actor = MLP.init(n_features, width, n_actions, "softmax", rng)
        self.critic = MLP.init(2 * n_features + 1, width, 1, "scalar", rng)
        if optimizer == "adam":
            self.actor_opt = Adam(self.actor.theta, agent.actor_lr)
            self.critic_opt = Adam(self.critic.theta, agent.critic_lr)
        elif optimizer == "sgd":
            self.actor_opt = SGD(self.actor.theta, agent.actor_lr)
            self.critic_opt = SGD(self.critic.theta, agent.critic_lr)
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")

    def value(self, theta) -> float:
        return float(self.critic.forward(theta)[0][0])

    def actor_step(self, cache, probs, action, delta):
        """Ascend delta * grad log mu_action (plus the optional entropy bonus)."""
        up = -delta * probs
        up[action] += delta
        bonus = self.agent.entropy_bonus
        if bonus:
            logp = np.log(np.maximum(probs, 1e-300))
            up += bonus * -probs * (logp - probs @ logp)
        if not np.any(up):
            # zero critique: no update at all, Adam moments included
            return
        self.actor_opt.step(self.actor.theta, self.actor.backward(cache, up), "ascend")

    def critic_step(self, cache_prev, delta):
        # semi-gradient of delta^2: the bootstrapped target is held constant
        grads = self.critic.backward(cache_prev, np.array([-2.0 * delta]))
        self.critic_opt.step(self.critic.theta, grads, "descend")


class RandomPolicy:
    name = "random"

    def __init__(self, n):
        self.n = n

    def choose(self, features, rng) -> int:
        return int(rng.integers(self.n))


class ActorPolicy:
    def __init__(self, actor: MLP, mode="sample"):
        self.actor = actor
        self.mode = mode

    def choose(self, features, rng) -> int:
        return select_action(self.actor, features, rng, self.mode)


def _finish(rule, steps, state, state0, truncated, ground_truth):
    marg = rule.marginals(state)
    return EpisodeTrace(steps, truncated, bl.extract_estimate(marg), ground_truth.copy(),
                        rule.marginals(state0).copy(), marg.copy())


def train_episode(ac: ActorCritic, rule, episode: Episode, agent: AgentConfig, rng) -> EpisodeTrace:
    """One episode with an actor and a critic update after every observation."""
    gamma = agent.discount
    state0 = state = rule.initial()
    feat = rule.features(state)
    theta_prev = critic_input(feat, feat, 0.0)
    steps = []
    truncated = False
    for k in range(1, agent.max_episode_length + 1):
        logits, cache = ac.actor.forward(feat)
        probs = softmax(logits)
        if not np.all(np.isfinite(probs)):
            raise EpisodeAborted(f"non-finite actor output at step {k}: {logits}")
        a = sample_index(probs, rng)

        y = episode.observe(a + 1).value
        new = rule.update(state, a, y)
        r = rule.reward(state, new)
        new_feat = rule.features(new)
        stop = bl.should_stop(rule.marginals(new), agent.confidence_threshold)
        truncated = not stop and k == agent.max_episode_length
        theta = critic_input(new_feat, feat, r)
        out_prev, cache_prev = ac.critic.forward(theta_prev)
        v_prev = float(out_prev[0])
        v_cur = ac.value(theta)
        if not (np.isfinite(v_prev) and np.isfinite(v_cur)):
            raise EpisodeAborted(f"non-finite critic output at step {k}")
        if stop or truncated:
            delta = td_error(r, terminal_value(rule, new, agent), v_prev, gamma)
        else:
            delta = td_error(r, v_cur, v_prev, gamma)

        ac.actor_step(cache, probs, a, delta)
        ac.critic_step(cache_prev, delta)

        steps.append(EpisodeStep(k, a + 1, y, state, new, r, delta))
        state, feat, theta_prev = new, new_feat, theta
        if stop:
            break
    return _finish(rule, steps, state, state0, truncated, episode.ground_truth)


def run_episode(policy, rule, episode: Episode, agent: AgentConfig, rng) -> EpisodeTrace:
    """Frozen-policy episode: same loop as training, no learning."""
    state0 = state = rule.initial()
    steps = []
    truncated = False
    for k in range(1, agent.max_episode_length + 1):
        a = policy.choose(rule.features(state), rng)
        y = episode.observe(a + 1).value
        new = rule.update(state, a, y)
        steps.append(EpisodeStep(k, a + 1, y, state, new, rule.reward(state, new)))
        state = new
        if bl.should_stop(rule.marginals(state), agent.confidence_threshold):
            break
    else:
        truncated = True
    return _finish(rule, steps, state, state0, truncated, episode.ground_truth)


def build_rule(algorithm: str, config: ExperimentConfig, dataset: TrainingDataset, joint_reward="joint",
               update_rule=None):
    """Belief tracker for ``algorithm``; the random policy defaults to the proposed update."""
    kind = update_rule or ("proposed" if algorithm == "random" else algorithm)
    channel = config.channel
    if kind == "joint":
        return bl.JointRule(channel, estimate_joint_prior(dataset), joint_reward)
    prior = estimate_prior_beliefs(dataset)
    if kind == "naive":
        return bl.NaiveRule(channel, prior)
    if kind == "proposed":
        return bl.MarginalRule(estimate_dependency_model(dataset), channel, prior)
    raise ValueError(f"unknown algorithm {kind!r}")


def rule_to_dict(rule):
    """Everything needed to rebuild a belief tracker without its training data."""
    d = {"kind": rule.name, "prior": rule.prior.tolist()}
    if rule.name == "proposed":
        d["dependency"] = rule.dep.to_dict()
    if rule.name == "joint":
        d["reward_kind"] = rule.reward_kind
    return d


def rule_from_dict(d, channel):
    if d["kind"] == "proposed":
        return bl.MarginalRule(DependencyModel.from_dict(d["dependency"]), channel, d["prior"])
    if d["kind"] == "naive":
        return bl.NaiveRule(channel, d["prior"])
    if d["kind"] == "joint":
        return bl.JointRule(channel, d["prior"], d.get("reward_kind", "joint"))
    raise ValueError(f"unknown rule kind {d['kind']!r}")


def make_episode(config: ExperimentConfig, rng) -> Episode:
    return Episode(sample_state(config.prior, rng), config.channel, rng)


@dataclass
class TrainResult:
    ac: ActorCritic
    rule: object
    curve: list = field(default_factory=list)  # (episode, reward_sum, stopping_time, correct)


def train(config: ExperimentConfig, dataset: TrainingDataset, algorithm="proposed", seed=None, episodes=None,
          rule=None, optimizer="adam", on_episode=None) -> TrainResult:
    """Online actor-critic training for a fixed number of episodes.

    Each episode draws ground truth, observation noise and actions from its own
    stream keyed by ``(seed, "train", episode)``.
    """
    if algorithm == "random":
        raise ValueError("the random policy has nothing to train")
    seed = config.seed if seed is None else seed
    episodes = config.training_episodes if episodes is None else episodes
    rule = rule or build_rule(algorithm, config, dataset)
    ac = ActorCritic(rule.feature_size, rule.n, config.agent, stream_rng(seed, "init"), optimizer)
    result = TrainResult(ac, rule)
    for ep in range(episodes):
        rng = stream_rng(seed, "train", ep)
        try:
            trace = train_episode(ac, rule, make_episode(config, rng), config.agent, rng)
        except EpisodeAborted:
            log.exception("training episode %d aborted", ep)
            raise
        result.curve.append((ep + 1, trace.reward_sum, trace.stopping_time, trace.correct))
        if on_episode:
            on_episode(ep, trace)
    return result


def evaluate(policy, rule, config: ExperimentConfig, episodes=None, seed=None):
    """Frozen-policy traces; ground truths depend only on ``(seed, episode)``."""
    seed = config.seed if seed is None else seed
    episodes = config.eval_episodes if episodes is None else episodes
    traces = []
    for ep in range(episodes):
        truth_rng = stream_rng(seed, "eval-truth", ep)
        rng = stream_rng(seed, "eval", ep)
        episode = Episode(sample_state(config.prior, truth_rng), config.channel, rng)
        traces.append(run_episode(policy, rule, episode, config.agent, rng))
    return traces
