"""Shared domain types: channel, dependency model, estimates and configs.

Beliefs and process state vectors are plain numpy arrays. Entry ``i`` of a
belief is the posterior probability that process ``i`` is *normal* (state 0).
Arrays are indexed from 0; anything user-facing (observations, config pair
lists, CSV traces) uses 1-based process indices.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

EPS = 1e-12


class ConfigError(ValueError):
    """Raised when a config fails validation; ``violations`` lists field paths."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def clamp(x, eps=EPS):
    return np.clip(x, eps, 1.0 - eps)


def as_state_vector(states) -> np.ndarray:
    s = np.asarray(states)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("state vector must be a non-empty 1-d sequence")
    if not np.all((s == 0) | (s == 1)):
        raise ValueError("state vector entries must be 0 or 1")
    return s.astype(np.int8)


@dataclass(frozen=True)
class ObservationChannel:
    """Binary channel that reports the flipped state with ``flip_probability``."""

    flip_probability: float

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must lie in [0, 1], got {self.flip_probability}")

    def prob(self, y, s):
        """P[y | s] for one observation; broadcasts over arrays."""
        p = self.flip_probability
        return np.where(np.asarray(y) == np.asarray(s), 1.0 - p, p)


@dataclass(frozen=True)
class Observation:
    process_index: int  # 1-based
    value: int
    time_index: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError("observation value must be 0 or 1")
        if self.process_index < 1:
            raise ValueError("process_index is 1-based")
        if self.time_index < 1:
            raise ValueError("time_index must be positive")

    @property
    def index0(self) -> int:
        return self.process_index - 1


@dataclass(frozen=True)
class StateEstimate:
    estimate: np.ndarray
    confidences: np.ndarray

    @property
    def min_confidence(self) -> float:
        return float(self.confidences.min())

    def to_dict(self):
        return {"estimate": self.estimate.tolist(), "confidences": self.confidences.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["estimate"], dtype=np.int8), np.asarray(d["confidences"], dtype=float))


class DependencyModel:
    """Pairwise conditionals ``table[i, j, s, t] = P[s_j = t | s_i = s]``."""

    def __init__(self, table):
        table = np.array(table, dtype=float)
        if table.ndim != 4 or table.shape[0] != table.shape[1] or table.shape[2:] != (2, 2):
            raise ValueError(f"dependency table must have shape (N, N, 2, 2), got {table.shape}")
        if np.any(table < 0) or np.any(table > 1):
            raise ValueError("dependency entries must lie in [0, 1]")
        if not np.allclose(table.sum(axis=3), 1.0, atol=1e-9, rtol=0):
            raise ValueError("dependency rows must sum to 1")
        n = table.shape[0]
        eye = np.eye(2)
        for i in range(n):
            if not np.array_equal(table[i, i], eye):
                raise ValueError(f"diagonal entry {i} must be deterministic")
        table.setflags(write=False)
        self.table = table

    @property
    def n(self) -> int:
        return self.table.shape[0]

    @classmethod
    def independent(cls, marginals):
        """Model in which every pair is independent with the given P[s_j = 0]."""
        q = np.asarray(marginals, dtype=float)
        n = q.size
        table = np.empty((n, n, 2, 2))
        table[:, :, :, 0] = q[None, :, None]
        table[:, :, :, 1] = 1.0 - q[None, :, None]
        for i in range(n):
            table[i, i] = np.eye(2)
        return cls(table)

    def conditional(self, i, j, s, t) -> float:
        return float(self.table[i, j, s, t])

    def to_dict(self):
        return {"n": self.n, "table": self.table.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["table"], dtype=float))

    def __eq__(self, other):
        return isinstance(other, DependencyModel) and np.array_equal(self.table, other.table)

    def __repr__(self):
        return f"DependencyModel(n={self.n})"


@dataclass(frozen=True)
class CorrelatedPriorConfig:
    """Processes normal w.p. ``normal_probability``; listed pairs share ``correlation``.

    ``pair_structure`` holds 1-based index pairs.
    """

    n_processes: int
    normal_probability: float
    correlation: float
    pair_structure: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pair_structure", tuple(tuple(int(v) for v in p) for p in self.pair_structure))

    def violations(self, prefix=""):
        out = []
        if self.n_processes < 1:
            out.append(f"{prefix}n_processes: must be >= 1")
        if not 0.0 <= self.normal_probability <= 1.0:
            out.append(f"{prefix}normal_probability: must lie in [0, 1]")
        if not 0.0 <= self.correlation <= 1.0:
            out.append(f"{prefix}correlation: must lie in [0, 1]")
        seen = set()
        for k, pair in enumerate(self.pair_structure):
            where = f"{prefix}pair_structure[{k}]"
            if len(pair) != 2 or pair[0] == pair[1]:
                out.append(f"{where}: must be two distinct indices")
                continue
            for v in pair:
                if not 1 <= v <= self.n_processes:
                    out.append(f"{where}: index {v} out of range 1..{self.n_processes}")
                if v in seen:
                    out.append(f"{where}: index {v} already belongs to another pair")
                seen.add(v)
        return out


@dataclass(frozen=True)
class AgentConfig:
    discount: float = 0.9
    confidence_threshold: float = 0.95
    actor_lr: float = 5e-4
    critic_lr: float = 5e-3
    hidden_width: int = 64
    max_episode_length: int = 100
    entropy_bonus: float = 0.0
    terminal_value: str = "residual"

    def violations(self, prefix="agent."):
        out = []
        if not 0.0 < self.discount < 1.0:
            out.append(f"{prefix}discount: must lie in (0, 1)")
        if not 0.5 < self.confidence_threshold < 1.0:
            out.append(f"{prefix}confidence_threshold: must lie in (0.5, 1)")
        if self.actor_lr < 0:
            out.append(f"{prefix}actor_lr: must be non-negative")
        if self.critic_lr < 0:
            out.append(f"{prefix}critic_lr: must be non-negative")
        if self.hidden_width < 1:
            out.append(f"{prefix}hidden_width: must be >= 1")
        if self.max_episode_length < 1:
            out.append(f"{prefix}max_episode_length: must be >= 1")
        if self.entropy_bonus < 0:
            out.append(f"{prefix}entropy_bonus: must be non-negative")
        if self.terminal_value not in ("residual", "zero"):
            out.append(f"{prefix}terminal_value: must be 'residual' or 'zero'")
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    n_processes: int = 5
    normal_probability: float = 0.8
    correlation: float = 0.6
    flip_probability: float = 0.2
    pair_structure: tuple = ((1, 2), (3, 4))
    agent: AgentConfig = field(default_factory=AgentConfig)
    seed: int = 0
    training_samples: int = 100_000
    training_episodes: int = 5000
    eval_episodes: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "pair_structure", tuple(tuple(int(v) for v in p) for p in self.pair_structure))

    @property
    def prior(self) -> CorrelatedPriorConfig:
        return CorrelatedPriorConfig(self.n_processes, self.normal_probability, self.correlation, self.pair_structure)

    @property
    def channel(self) -> ObservationChannel:
        return ObservationChannel(self.flip_probability)

    def with_(self, **changes) -> "ExperimentConfig":
        agent_changes = {k: changes.pop(k) for k in list(changes) if k in AgentConfig.__dataclass_fields__}
        cfg = replace(self, **changes)
        if agent_changes:
            cfg = replace(cfg, agent=replace(cfg.agent, **agent_changes))
        return cfg

    def to_dict(self):
        d = asdict(self)
        d["pair_structure"] = [list(p) for p in self.pair_structure]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        agent = dict(d.pop("agent", {}))
        unknown = set(agent) - set(AgentConfig.__dataclass_fields__)
        unknown |= set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError([f"{k}: unknown key" for k in sorted(unknown)])
        return cls(agent=AgentConfig(**agent), **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Return ``config`` unchanged or raise ConfigError listing every violation."""
    out = config.prior.violations()
    if not 0.0 <= config.flip_probability <= 1.0:
        out.append("flip_probability: must lie in [0, 1]")
    out += config.agent.violations()
    if config.training_samples < 1:
        out.append("training_samples: must be >= 1")
    if config.training_episodes < 0:
        out.append("training_episodes: must be >= 0")
    if config.eval_episodes < 1:
        out.append("eval_episodes: must be >= 1")
    if config.seed < 0:
        out.append("seed: must be non-negative")
    if out:
        raise ConfigError(out)
    return config


def load_config(path) -> ExperimentConfig:
    return validate_config(ExperimentConfig.from_json(Path(path).read_text()))
