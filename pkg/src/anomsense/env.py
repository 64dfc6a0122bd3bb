"""Ground-truth sampling, the noisy observation channel and training data."""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .model import EPS, CorrelatedPriorConfig, DependencyModel, ObservationChannel, Observation, as_state_vector, clamp


def stream_rng(master_seed: int, *key) -> np.random.Generator:
    """Independent generator for ``(master_seed, *key)``; string keys are hashed."""
    words = [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(words)))


def pair_pmf(q: float, rho: float) -> np.ndarray:
    """Joint pmf ``[s_a, s_b]`` of a correlated pair; both marginals equal ``q``."""
    mixed = (1.0 - rho) * q * (1.0 - q)
    return np.array([[q * q + rho * q * (1.0 - q), mixed],
                     [mixed, (1.0 - q) ** 2 + rho * q * (1.0 - q)]])


def _singletons(prior: CorrelatedPriorConfig):
    paired = {v for p in prior.pair_structure for v in p}
    return [i for i in range(prior.n_processes) if i + 1 not in paired]


def sample_states(prior: CorrelatedPriorConfig, count: int, rng) -> np.ndarray:
    """``count`` i.i.d. draws from the correlated prior, shape (count, N)."""
    q = prior.normal_probability
    out = (rng.random((count, prior.n_processes)) >= q).astype(np.int8)
    cdf = np.cumsum(pair_pmf(q, prior.correlation).ravel())
    for a, b in prior.pair_structure:
        cell = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), 3)
        out[:, a - 1] = cell // 2
        out[:, b - 1] = cell % 2
    return out


def sample_state(prior: CorrelatedPriorConfig, rng) -> np.ndarray:
    return sample_states(prior, 1, rng)[0]


def joint_prior(prior: CorrelatedPriorConfig) -> np.ndarray:
    """Exact prior over all 2^N configurations (process 1 is the most significant bit)."""
    n = prior.n_processes
    q = prior.normal_probability
    pmf = pair_pmf(q, prior.correlation)
    configs = np.array(list(product((0, 1), repeat=n)), dtype=np.int8)
    p = np.ones(len(configs))
    for i in _singletons(prior):
        p *= np.where(configs[:, i] == 0, q, 1.0 - q)
    for a, b in prior.pair_structure:
        p *= pmf[configs[:, a - 1], configs[:, b - 1]]
    return p


def analytic_dependency_model(prior: CorrelatedPriorConfig) -> DependencyModel:
    q = prior.normal_probability
    model = DependencyModel.independent(np.full(prior.n_processes, q)).table.copy()
    pmf = pair_pmf(q, prior.correlation)
    for a, b in prior.pair_structure:
        model[a - 1, b - 1] = _conditional(pmf, q)
        model[b - 1, a - 1] = _conditional(pmf.T, q)
    return DependencyModel(model)


def _conditional(pmf, q):
    marg = pmf.sum(axis=1)
    cond = np.empty((2, 2))
    for s in (0, 1):
        # conditioning on an impossible state (q in {0, 1}): fall back to the marginal
        cond[s] = pmf[s] / marg[s] if marg[s] > 0 else (q, 1.0 - q)
    return cond


@dataclass
class Episode:
    """Hidden ground truth plus the channel used to observe it."""

    ground_truth: np.ndarray
    channel: ObservationChannel
    rng: np.random.Generator
    time_index: int = 0

    def __post_init__(self):
        self.ground_truth = as_state_vector(self.ground_truth)

    @property
    def n(self) -> int:
        return self.ground_truth.size

    def observe(self, process_index: int) -> Observation:
        """Noisy reading of 1-based ``process_index``."""
        return observe(self, process_index, self.rng)


def observe(episode: Episode, process_index: int, rng) -> Observation:
    if not 1 <= process_index <= episode.n:
        raise IndexError(f"process_index {process_index} outside 1..{episode.n}")
    s = int(episode.ground_truth[process_index - 1])
    flip = rng.random() < episode.channel.flip_probability
    episode.time_index += 1
    return Observation(process_index, s ^ int(flip), episode.time_index)


@dataclass(frozen=True)
class TrainingDataset:
    samples: np.ndarray  # (count, N) int8

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[1] < 1:
            raise ValueError("samples must be a 2-d array with N >= 1 columns")
        if s.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("samples must be binary")
        object.__setattr__(self, "samples", s.astype(np.int8))

    @property
    def sample_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def save(self, path):
        lines = (" ".join(map(str, row)) for row in self.samples.tolist())
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
        if not rows:
            raise ValueError(f"{path}: no samples")
        if len({len(r) for r in rows}) != 1:
            raise ValueError(f"{path}: rows have different lengths")
        return cls(np.array(rows, dtype=np.int8))


def generate_training_data(prior: CorrelatedPriorConfig, count: int, rng) -> TrainingDataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    return TrainingDataset(sample_states(prior, count, rng))


def estimate_dependency_model(data: TrainingDataset) -> DependencyModel:
    """Add-one smoothed pairwise conditionals P[s_j = t | s_i = s]."""
    x = data.samples.astype(float)
    ind = np.stack([1.0 - x, x])  # ind[s, k, i] = [sample k has s_i = s]
    counts = np.einsum("ski,tkj->ijst", ind, ind) + 1.0
    table = counts / counts.sum(axis=3, keepdims=True)
    for i in range(data.n):
        table[i, i] = np.eye(2)
    return DependencyModel(table)


def estimate_prior_beliefs(data: TrainingDataset) -> np.ndarray:
    """Smoothed per-process frequency of being normal, clamped to [eps, 1 - eps]."""
    zeros = (data.samples == 0).sum(axis=0)
    return clamp((zeros + 1.0) / (data.sample_count + 2.0))


def estimate_joint_prior(data: TrainingDataset) -> np.ndarray:
    """Add-one smoothed empirical pmf over all 2^N configurations."""
    n = data.n
    codes = data.samples.astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))
    counts = np.bincount(codes, minlength=1 << n) + 1.0
    p = counts / counts.sum()
    return np.maximum(p, EPS) / np.maximum(p, EPS).sum()
