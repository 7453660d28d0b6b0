"""Pieces shared by all four agents: observation encoding, masked action
selection, hyperparameter container, and per-episode metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from asmplan.env import ConfigError, EnvState
from asmplan.model import AssemblySpec

__all__ = [
    "AgentConfig",
    "TrainMetrics",
    "encode_observation",
    "epsilon_greedy",
    "epsilon_at",
    "masked_log_softmax",
    "observation_width",
]


def observation_width(spec: AssemblySpec) -> int:
    return spec.num_tasks + spec.num_tools + 1


def encode_observation(state: EnvState, spec: AssemblySpec) -> np.ndarray:
    """Feature vector: done bits, then one-hot held tool (slot 0 = none)."""
    obs = np.zeros(observation_width(spec))
    for j in range(spec.num_tasks):
        if state.done_mask & (1 << j):
            obs[j] = 1.0
    obs[spec.num_tasks + state.tool] = 1.0
    return obs


def epsilon_greedy(
    q_values: np.ndarray, mask: np.ndarray, epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Pick a task id: explore uniformly over legal actions with
    probability epsilon, otherwise the legal argmax (lowest id on ties)."""
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError("epsilon_greedy: no legal actions")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(legal[rng.integers(legal.size)]) + 1
    # np.argmax returns the first maximum and legal is ascending, so ties
    # break toward the lowest task id
    return int(legal[np.argmax(q_values[legal])]) + 1


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities of a softmax restricted to legal entries.

    Illegal entries come back as -inf (probability exactly 0).  Accepts a
    single vector or a batch of rows with a matching mask.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape != mask.shape:
        raise ValueError(f"logits {logits.shape} and mask {mask.shape} differ")
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
        mask = mask[None, :]
    if not mask.any(axis=1).all():
        raise ValueError("masked_log_softmax: a row has no legal actions")
    masked = np.where(mask, logits, -np.inf)
    shift = masked - masked.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        exps = np.where(mask, np.exp(shift), 0.0)
    log_probs = shift - np.log(exps.sum(axis=1, keepdims=True))
    log_probs = np.where(mask, log_probs, -np.inf)
    return log_probs[0] if squeeze else log_probs


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters for every algorithm; unused fields are ignored.

    ``n_step`` of None means the algorithm's own default (1 for dqn,
    3 for rainbow, full episode for a2c).  ``target_sync`` counts
    optimizer steps.  The epsilon schedule decays linearly from
    ``epsilon_start`` to ``epsilon_final`` over the first
    ``epsilon_decay_fraction`` of episodes, then stays flat.
    """

    episodes: int = 10000
    gamma: float = 0.99
    alpha: float = 0.1
    q_init: float = 0.0
    epsilon_start: float = 1.0
    epsilon_final: float = 0.02
    epsilon_warmup_fraction: float = 0.0
    epsilon_decay_fraction: float = 0.6
    batch_size: int = 32
    buffer_capacity: int = 50000
    target_sync: int = 500
    learning_starts: int = 500
    train_every: int = 1
    n_step: int | None = None
    entropy_coef: float = 0.01
    lr: float = 1e-3
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden_sizes: tuple[int, ...] = (64, 64)
    hidden_activation: str = "relu"
    double: bool = False
    dueling: bool = False
    prioritized: bool = False
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_final: float = 1.0
    per_priority_floor: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0,1), got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0,1], got {self.alpha}")
        for name in ("epsilon_start", "epsilon_final"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {v}")
        if not 0.0 <= self.epsilon_warmup_fraction < 1.0:
            raise ConfigError(
                f"epsilon_warmup_fraction must be in [0,1), got "
                f"{self.epsilon_warmup_fraction}"
            )
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ConfigError(
                f"epsilon_decay_fraction must be in (0,1], got "
                f"{self.epsilon_decay_fraction}"
            )
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.n_step is not None and self.n_step < 1:
            raise ConfigError(f"n_step must be >= 1, got {self.n_step}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.buffer_capacity < self.batch_size:
            raise ConfigError("buffer_capacity must be >= batch_size")
        if self.target_sync < 1:
            raise ConfigError(f"target_sync must be >= 1, got {self.target_sync}")
        if self.train_every < 1:
            raise ConfigError(f"train_every must be >= 1, got {self.train_every}")


def epsilon_at(config: AgentConfig, episode: int) -> float:
    """Exploration rate for a 0-based episode index.

    Holds epsilon_start for the warm-up fraction of episodes, then decays
    linearly to epsilon_final over the decay fraction, then stays flat.
    """
    warm = int(round(config.episodes * config.epsilon_warmup_fraction))
    if episode < warm:
        return config.epsilon_start
    span = max(1, int(round(config.episodes * config.epsilon_decay_fraction)))
    t = episode - warm
    if t >= span:
        return config.epsilon_final
    frac = t / span
    return config.epsilon_start + (config.epsilon_final - config.epsilon_start) * frac


@dataclass
class TrainMetrics:
    """Per-episode training record of one trial."""

    algorithm: str
    duration: np.ndarray
    deterministic_equivalent: np.ndarray
    reward: np.ndarray
    unwanted: np.ndarray
    cumulative_unwanted: np.ndarray
    epsilon: np.ndarray
    loss: np.ndarray
    truncated: np.ndarray

    @property
    def episodes(self) -> int:
        return len(self.duration)

    def final_mean_duration(self, last: int = 500) -> float:
        """Mean deterministic-equivalent duration of the last episodes."""
        return float(np.mean(self.deterministic_equivalent[-last:]))


def metrics_buffer(algorithm: str, episodes: int) -> TrainMetrics:
    return TrainMetrics(
        algorithm=algorithm,
        duration=np.zeros(episodes),
        deterministic_equivalent=np.zeros(episodes),
        reward=np.zeros(episodes),
        unwanted=np.zeros(episodes, dtype=bool),
        cumulative_unwanted=np.zeros(episodes, dtype=np.int64),
        epsilon=np.zeros(episodes),
        loss=np.full(episodes, np.nan),
        truncated=np.zeros(episodes, dtype=bool),
    )
