"""The assembly MDP environment.

State is the done bit-vector plus the currently held tool.  Actions are
task ids.  With masking on, only precedence-legal tasks may be executed
and every episode finishes in exactly ``num_tasks`` steps.  With masking
off, an illegal action is a no-op that still consumes a step, and the
episode truncates at ``max_steps``.

The reward is episodic: 0 at every non-terminal step, and on completion
either -1 (the finished sequence matches the user's unwanted patterns),
0 (the duration normalizer has no range yet), or a normalized value in
[0, 1] where faster assemblies score higher.  The normalizer tracks the
best duration seen and a robust worst duration (new maxima are rejected
when they fall outside 2 standard deviations of the last 100 episodes).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from asmplan.model import AssemblySpec, IllegalActionError, task_duration

__all__ = [
    "AssemblyEnv",
    "ConfigError",
    "EnvConfig",
    "EnvState",
    "EpisodeTrace",
    "RewardNormalizer",
    "StepOutcome",
    "UnwantedSpec",
    "action_mask",
    "episode_total_time",
    "is_unwanted",
    "normalized_reward",
    "normalizer_update",
]

NORMALIZER_HISTORY = 100
NORMALIZER_WARMUP = 10
DEGENERATE_SPAN = 1e-9


class ConfigError(ValueError):
    """Raised when an environment or experiment config is invalid."""


class EnvState(NamedTuple):
    """Hashable MDP state: done bitmask (bit j = task j + 1) and held tool."""

    done_mask: int
    tool: int

    def done_set(self) -> frozenset[int]:
        out = set()
        mask, j = self.done_mask, 1
        while mask:
            if mask & 1:
                out.add(j)
            mask >>= 1
            j += 1
        return frozenset(out)


@dataclass(frozen=True)
class UnwantedSpec:
    """User preferences: orderings and whole sequences to avoid.

    A pair (a, b) in ``forbidden_orderings`` marks any sequence where a
    is executed before b as unwanted.
    """

    forbidden_orderings: tuple[tuple[int, int], ...] = ()
    forbidden_sequences: tuple[tuple[int, ...], ...] = ()

    def __bool__(self) -> bool:
        return bool(self.forbidden_orderings or self.forbidden_sequences)


@dataclass(frozen=True)
class EnvConfig:
    mode: str = "deterministic"
    noise_fraction: float = 0.1
    # None = let the algorithm decide (everything masks except rainbow)
    masking: bool | None = None
    max_steps: int | None = None  # resolved to 8 * num_tasks when unset
    pickup_costs_change: bool = True
    unwanted: UnwantedSpec = field(default_factory=UnwantedSpec)
    seed: int | None = None


@dataclass(frozen=True)
class EpisodeTrace:
    sequence: tuple[int, ...]
    durations: tuple[float, ...]
    deterministic_durations: tuple[float, ...]
    finished: bool

    @property
    def total(self) -> float:
        return math.fsum(self.durations)

    @property
    def deterministic_total(self) -> float:
        return math.fsum(self.deterministic_durations)


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    terminal: bool
    truncated: bool
    task_duration: float
    info: dict | None = None


@dataclass
class RewardNormalizer:
    """Duration range tracker behind the terminal reward.

    ``min_t`` follows the best duration unconditionally.  ``max_t`` only
    accepts a new worst duration when it is within 2 standard deviations
    of the last 100 episode durations (after a 10-episode warm-up), so a
    single pathological episode cannot flatten the reward signal.
    """

    min_t: float | None = None
    max_t: float | None = None
    history: deque = field(default_factory=lambda: deque(maxlen=NORMALIZER_HISTORY))

    @property
    def initialized(self) -> bool:
        return self.min_t is not None and self.max_t is not None


def normalizer_update(norm: RewardNormalizer, t_a: float) -> RewardNormalizer:
    """Fold a finished episode's duration into the normalizer (in place)."""
    if norm.min_t is None:
        norm.min_t = t_a
        norm.max_t = t_a
    else:
        norm.min_t = min(norm.min_t, t_a)
        if t_a > norm.max_t:
            if len(norm.history) < NORMALIZER_WARMUP:
                norm.max_t = t_a
            else:
                hist = np.asarray(norm.history, dtype=np.float64)
                mean = float(hist.mean())
                std = float(hist.std())  # population std of the window
                if abs(t_a - mean) <= 2.0 * std:
                    norm.max_t = t_a
    norm.history.append(t_a)
    return norm


def normalized_reward(norm: RewardNormalizer, t_a: float) -> float:
    """Map a duration onto [0, 1] against the tracked range (fast = 1)."""
    if not norm.initialized:
        raise ValueError("normalizer has no observations yet")
    span = norm.max_t - norm.min_t
    if span < DEGENERATE_SPAN:
        return 0.5
    return min(1.0, max(0.0, (norm.max_t - t_a) / span))


def is_unwanted(sequence: tuple[int, ...], unwanted: UnwantedSpec) -> bool:
    """True iff the finished sequence violates any user preference."""
    if not unwanted:
        return False
    pos = {t: i for i, t in enumerate(sequence)}
    for a, b in unwanted.forbidden_orderings:
        if a in pos and b in pos and pos[a] < pos[b]:
            return True
    return tuple(sequence) in unwanted.forbidden_sequences


def episode_total_time(trace: EpisodeTrace) -> float:
    """Experienced total assembly time of the trace (0 for an empty one)."""
    return trace.total


def action_mask(state: EnvState, spec: AssemblySpec) -> np.ndarray:
    """Boolean vector over task ids: True where the task is legal now."""
    mask = np.zeros(spec.num_tasks, dtype=bool)
    done_mask = state.done_mask
    for j, pred in enumerate(spec.predecessor_masks):
        bit = 1 << j
        if not done_mask & bit and (pred & done_mask) == pred:
            mask[j] = True
    return mask


def _validate_unwanted(unwanted: UnwantedSpec, spec: AssemblySpec) -> None:
    n = spec.num_tasks
    for a, b in unwanted.forbidden_orderings:
        for t in (a, b):
            if not 1 <= t <= n:
                raise ConfigError(
                    f"forbidden ordering ({a},{b}): task {t} out of range 1..{n}"
                )
        if a == b:
            raise ConfigError(f"forbidden ordering ({a},{b}): tasks must differ")
        if a in spec.transitive_predecessors[b - 1]:
            raise ConfigError(
                f"forbidden ordering ({a},{b}): precedence forces task {a} "
                f"before task {b}, so every sequence would be unwanted"
            )
    for seq in unwanted.forbidden_sequences:
        if sorted(seq) != list(range(1, n + 1)):
            raise ConfigError(
                f"forbidden sequence {seq}: must be a permutation of tasks 1..{n}"
            )


class AssemblyEnv:
    """Stateful wrapper around the step dynamics for one trial.

    Holds the reward normalizer across episodes (the reward of episode k
    is computed against the range observed in episodes < k, then the
    normalizer absorbs episode k).  Deterministic mode consumes no
    randomness; stochastic mode draws one normal sample per executed
    task, so a fixed seed reproduces trajectories bit for bit.
    """

    def __init__(
        self,
        spec: AssemblySpec,
        config: EnvConfig | None = None,
        rng: np.random.Generator | None = None,
    ):
        config = config or EnvConfig()
        if config.mode not in ("deterministic", "stochastic"):
            raise ConfigError(f"mode: expected deterministic|stochastic, got {config.mode!r}")
        if config.noise_fraction < 0:
            raise ConfigError(f"noise_fraction: must be >= 0, got {config.noise_fraction}")
        max_steps = config.max_steps if config.max_steps is not None else 8 * spec.num_tasks
        if max_steps < spec.num_tasks:
            raise ConfigError(
                f"max_steps: {max_steps} cannot cover the {spec.num_tasks} tasks"
            )
        _validate_unwanted(config.unwanted, spec)
        self.spec = spec
        masking = True if config.masking is None else config.masking
        self.config = replace(config, max_steps=max_steps, masking=masking)
        if rng is not None:
            self.rng = rng
        else:
            self.rng = np.random.default_rng(config.seed)
        self.normalizer = RewardNormalizer()
        self._full_mask = (1 << spec.num_tasks) - 1
        self._state: EnvState | None = None
        self._steps = 0
        self._sequence: list[int] = []
        self._durations: list[float] = []
        self._det_durations: list[float] = []

    def reset(self) -> EnvState:
        self._state = EnvState(done_mask=0, tool=0)
        self._steps = 0
        self._sequence = []
        self._durations = []
        self._det_durations = []
        return self._state

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("call reset() before using the environment")
        return self._state

    def action_mask(self, state: EnvState | None = None) -> np.ndarray:
        return action_mask(self.state if state is None else state, self.spec)

    def _is_legal(self, action: int) -> bool:
        if not 1 <= action <= self.spec.num_tasks:
            return False
        j = action - 1
        bit = 1 << j
        pred = self.spec.predecessor_masks[j]
        mask = self.state.done_mask
        return not mask & bit and (pred & mask) == pred

    def step(self, action: int) -> StepOutcome:
        state = self.state
        cfg = self.config
        if not self._is_legal(action):
            if cfg.masking:
                raise IllegalActionError(
                    f"action {action} is illegal in state {state} with masking on"
                )
            self._steps += 1
            truncated = self._steps >= cfg.max_steps
            info = self._truncation_info() if truncated else None
            return StepOutcome(
                next_state=state,
                reward=0.0,
                terminal=False,
                truncated=truncated,
                task_duration=0.0,
                info=info,
            )

        det = task_duration(
            self.spec, action, state.done_set(), state.tool, cfg.pickup_costs_change
        )
        if cfg.mode == "stochastic":
            sigma = cfg.noise_fraction * max(det, 0.0)
            dur = float(self.rng.normal(det, sigma)) if sigma > 0 else det
            dur = max(dur, 0.0)
        else:
            dur = det

        next_state = EnvState(
            done_mask=state.done_mask | (1 << (action - 1)),
            tool=self.spec.tool[action - 1],
        )
        self._state = next_state
        self._steps += 1
        self._sequence.append(action)
        self._durations.append(dur)
        self._det_durations.append(det)

        terminal = next_state.done_mask == self._full_mask
        reward = 0.0
        info = None
        if terminal:
            trace = EpisodeTrace(
                sequence=tuple(self._sequence),
                durations=tuple(self._durations),
                deterministic_durations=tuple(self._det_durations),
                finished=True,
            )
            t_a = trace.total
            unwanted = is_unwanted(trace.sequence, cfg.unwanted)
            if unwanted:
                reward = -1.0
            elif self.normalizer.initialized:
                reward = normalized_reward(self.normalizer, t_a)
            # the range for later episodes absorbs every finished duration
            normalizer_update(self.normalizer, t_a)
            info = {
                "trace": trace,
                "duration": t_a,
                "deterministic_equivalent": trace.deterministic_total,
                "unwanted": unwanted,
            }
        elif not cfg.masking and self._steps >= cfg.max_steps:
            return StepOutcome(
                next_state=next_state,
                reward=0.0,
                terminal=False,
                truncated=True,
                task_duration=dur,
                info=self._truncation_info(),
            )
        return StepOutcome(
            next_state=next_state,
            reward=reward,
            terminal=terminal,
            truncated=False,
            task_duration=dur,
            info=info,
        )

    def _truncation_info(self) -> dict:
        """Episode totals for a truncated (unfinished) episode.

        The deterministic equivalent is a pessimistic completion bound:
        the partial sum plus, for each unfinished task, its base time,
        every positive correction it could receive, and a tool change.
        Truncating can therefore never score better than finishing.
        """
        trace = EpisodeTrace(
            sequence=tuple(self._sequence),
            durations=tuple(self._durations),
            deterministic_durations=tuple(self._det_durations),
            finished=False,
        )
        spec = self.spec
        remaining_bound = 0.0
        done_mask = self.state.done_mask
        for j in range(spec.num_tasks):
            if done_mask & (1 << j):
                continue
            bound = spec.base_time[j] + spec.tool_change_time
            for k in range(spec.num_tasks):
                if k != j:
                    bound += max(0.0, spec.correction[k][j])
            remaining_bound += bound
        return {
            "trace": trace,
            "duration": trace.total,
            "deterministic_equivalent": trace.deterministic_total + remaining_bound,
            "unwanted": False,
        }
