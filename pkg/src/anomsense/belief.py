"""Posterior updates over process states, entropy reward and stopping rule.

Three trackers share one interface (``update``, ``marginals``, ``features``,
``reward``):

* ``MarginalRule``  -- per-process beliefs updated through the pairwise
  conditionals, so one reading moves every dependent process.
* ``NaiveRule``     -- per-process beliefs; only the observed entry moves.
* ``JointRule``     -- exact posterior over all 2^N configurations.
"""
from __future__ import annotations

from itertools import product

import numpy as np

from .model import EPS, DependencyModel, Observation, ObservationChannel, StateEstimate, clamp


def channel_likelihood(channel: ObservationChannel, y, t):
    """p^|t - y| (1 - p)^|1 - t - y|, i.e. P[y | s_a = t]."""
    p = channel.flip_probability
    return p ** np.abs(t - y) * (1.0 - p) ** np.abs(1 - t - y)


def likelihood(dep: DependencyModel, channel: ObservationChannel, a: int, y: int, i: int, s: int) -> float:
    """P[y_a = y | s_i = s] with 0-based process indices ``a`` and ``i``."""
    return float(sum(channel_likelihood(channel, y, t) * dep.table[i, a, s, t] for t in (0, 1)))


def likelihood_table(dep: DependencyModel, channel: ObservationChannel) -> np.ndarray:
    """All likelihoods at once: ``out[a, y, i, s] = P[y_a = y | s_i = s]``."""
    ch = np.array([[channel_likelihood(channel, y, t) for t in (0, 1)] for y in (0, 1)])  # [y, t]
    out = np.einsum("yt,iast->ayis", ch, dep.table)
    return clamp(out)


def _bayes(belief, l0, l1):
    num = belief * l0
    return clamp(num / (num + (1.0 - belief) * l1))


def update_marginal(belief, dep: DependencyModel, channel: ObservationChannel, obs: Observation) -> np.ndarray:
    table = likelihood_table(dep, channel)[obs.index0, obs.value]
    return _bayes(clamp(np.asarray(belief, dtype=float)), table[:, 0], table[:, 1])


def update_naive(belief, channel: ObservationChannel, obs: Observation) -> np.ndarray:
    out = np.array(belief, dtype=float)
    a = obs.index0
    l0, l1 = clamp(channel_likelihood(channel, obs.value, np.array([0, 1])))
    out[a] = _bayes(clamp(out[a]), l0, l1)
    return out


def configurations(n: int) -> np.ndarray:
    """All binary configurations, shape (2^N, N), process 1 as the most significant bit."""
    return np.array(list(product((0, 1), repeat=n)), dtype=np.int8)


def update_joint(joint, channel: ObservationChannel, obs: Observation, configs=None) -> np.ndarray:
    joint = np.asarray(joint, dtype=float)
    if configs is None:
        configs = configurations(int(np.log2(joint.size)))
    lik = clamp(channel_likelihood(channel, obs.value, configs[:, obs.index0]))
    post = joint * lik
    total = post.sum()
    if not total > 0:
        raise ValueError("joint posterior degenerated to zero")
    return post / total


def marginalize(joint, configs=None) -> np.ndarray:
    joint = np.asarray(joint, dtype=float)
    if configs is None:
        configs = configurations(int(np.log2(joint.size)))
    return (configs == 0).T.astype(float) @ joint


def entropy(x):
    """Binary entropy in nats, with 0 ln 0 = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(x > 0, x * np.log(x), 0.0) + np.where(x < 1, (1 - x) * np.log(1 - x), 0.0))
    return h if h.ndim else float(h)


def joint_entropy(joint) -> float:
    p = np.asarray(joint, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _entropy_interior(x):
    # x already clamped to [eps, 1 - eps]
    return -(x * np.log(x) + (1.0 - x) * np.log1p(-x))


def reward(previous, current) -> float:
    """Total drop in per-process binary entropy, in nats."""
    previous = np.asarray(previous, dtype=float)
    current = np.asarray(current, dtype=float)
    if previous.shape != current.shape:
        raise ValueError(f"belief shapes differ: {previous.shape} vs {current.shape}")
    if previous.min() > 0 and previous.max() < 1 and current.min() > 0 and current.max() < 1:
        return float(np.sum(_entropy_interior(previous) - _entropy_interior(current)))
    return float(np.sum(entropy(previous) - entropy(current)))


def confidences(belief) -> np.ndarray:
    belief = np.asarray(belief, dtype=float)
    return np.maximum(belief, 1.0 - belief)


def extract_estimate(belief) -> StateEstimate:
    belief = np.asarray(belief, dtype=float)
    est = np.where(belief >= 1.0 - belief, 0, 1).astype(np.int8)
    return StateEstimate(est, confidences(belief))


def should_stop(belief, threshold: float) -> bool:
    return bool(confidences(belief).min() > threshold)


class MarginalRule:
    """Dependence-aware marginal tracker; all likelihoods are precomputed."""

    name = "proposed"

    def __init__(self, dep: DependencyModel, channel: ObservationChannel, prior):
        self.dep = dep
        self.channel = channel
        self.prior = clamp(np.asarray(prior, dtype=float))
        self._table = likelihood_table(dep, channel)
        # contiguous per-(a, y) likelihood vectors; the update is on the hot path
        self._l0 = np.ascontiguousarray(self._table[..., 0])
        self._l1 = np.ascontiguousarray(self._table[..., 1])

    @property
    def n(self):
        return self.dep.n

    @property
    def feature_size(self):
        return self.n

    def initial(self):
        return self.prior.copy()

    def update(self, state, a, y):
        num = state * self._l0[a, y]
        out = num / (num + (1.0 - state) * self._l1[a, y])
        np.maximum(out, EPS, out=out)
        return np.minimum(out, 1.0 - EPS, out=out)

    def marginals(self, state):
        return state

    def features(self, state):
        """Network input: beliefs centred on [-1, 1].

        An affine input map is absorbed by the first layer, so the function class is
        unchanged; centring keeps a few large early steps from pushing every ReLU
        below zero on the all-positive raw beliefs (a dead, constant critic).
        """
        return 2.0 * state - 1.0

    def uncertainty(self, state):
        """Summed per-process entropy; the quantity whose drop is the reward."""
        return float(np.sum(_entropy_interior(state)))

    def reward(self, prev, cur):
        return reward(prev, cur)


class NaiveRule(MarginalRule):
    """Updates only the observed process; cross-process dependence is ignored."""

    name = "naive"

    def __init__(self, channel: ObservationChannel, prior):
        self.channel = channel
        self.prior = clamp(np.asarray(prior, dtype=float))
        p = channel.flip_probability
        # lik[y] = (P[y | s=0], P[y | s=1])
        self._lik = [tuple(clamp(np.array([1 - p, p]))), tuple(clamp(np.array([p, 1 - p])))]

    @property
    def n(self):
        return self.prior.size

    def update(self, state, a, y):
        l0, l1 = self._lik[y]
        out = state.copy()
        num = out[a] * l0
        out[a] = min(max(num / (num + (1.0 - out[a]) * l1), EPS), 1.0 - EPS)
        return out


class JointRule:
    """Exact Bayes over 2^N configurations; stopping and estimates use its marginals.

    ``reward_kind="joint"`` rewards the drop in joint entropy; ``"marginal"`` the
    drop in summed marginal entropies.
    """

    name = "joint"

    def __init__(self, channel: ObservationChannel, prior_joint, reward_kind="joint"):
        if reward_kind not in ("joint", "marginal"):
            raise ValueError(f"unknown reward kind {reward_kind!r}")
        self.channel = channel
        self.prior = np.asarray(prior_joint, dtype=float) / np.sum(prior_joint)
        self.n = int(round(np.log2(self.prior.size)))
        if 1 << self.n != self.prior.size:
            raise ValueError("joint prior length must be a power of two")
        self.reward_kind = reward_kind
        self.configs = configurations(self.n)
        self._normal = (self.configs == 0).T.astype(float)
        p = channel.flip_probability
        # lik[a][y] = likelihood of y_a for every configuration
        self._lik = [[clamp(np.where(self.configs[:, a] == y, 1 - p, p)) for y in (0, 1)] for a in range(self.n)]

    @property
    def feature_size(self):
        return self.prior.size

    def initial(self):
        return self.prior.copy()

    def update(self, state, a, y):
        post = state * self._lik[a][y]
        return post / post.sum()

    def marginals(self, state):
        return clamp(self._normal @ state)

    def features(self, state):
        # centred on the uniform pmf, for the same reason as MarginalRule.features
        return self.prior.size * state - 1.0

    def uncertainty(self, state):
        if self.reward_kind == "joint":
            return joint_entropy(state)
        return float(np.sum(entropy(self.marginals(state))))

    def reward(self, prev, cur):
        if self.reward_kind == "joint":
            return joint_entropy(prev) - joint_entropy(cur)
        return reward(self.marginals(prev), self.marginals(cur))


def make_rule(algorithm: str, *, dep=None, channel=None, prior=None, prior_joint=None, joint_reward="joint"):
    if algorithm in ("proposed", "random"):
        return MarginalRule(dep, channel, prior)
    if algorithm == "naive":
        return NaiveRule(channel, prior)
    if algorithm == "joint":
        return JointRule(channel, prior_joint, joint_reward)
    raise ValueError(f"unknown algorithm {algorithm!r}")
