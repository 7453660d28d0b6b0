"""Tabular Q-Learning over the done-mask + tool state space."""

from __future__ import annotations

import numpy as np

from asmplan.agents.common import epsilon_greedy
from asmplan.agents.replay import Transition
from asmplan.env import EnvState
from asmplan.model import AssemblySpec

__all__ = ["QTable", "q_update", "QLearningAgent"]


class QTable:
    """State -> action-value vector map; unseen states read as `init`.

    An optimistic init (above the best attainable reward) makes greedy
    selection try every untested action at least once, which matters in
    this deterministic setting where a stale branch would otherwise
    never be revisited after epsilon has decayed.
    """

    def __init__(self, num_actions: int, init: float = 0.0):
        self.num_actions = num_actions
        self.init = init
        self._table: dict[EnvState, np.ndarray] = {}

    def values(self, state: EnvState) -> np.ndarray:
        row = self._table.get(state)
        if row is None:
            row = np.full(self.num_actions, self.init)
            self._table[state] = row
        return row

    def peek(self, state: EnvState) -> np.ndarray:
        """Read-only view that does not create an entry."""
        row = self._table.get(state)
        return np.full(self.num_actions, self.init) if row is None else row

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, state: EnvState) -> bool:
        return state in self._table


def q_update(
    qtable: QTable, tr: Transition, alpha: float, gamma: float
) -> QTable:
    """One Bellman update: Q(s,a) <- (1-a)Q(s,a) + a(r + g max legal Q(s',.))."""
    if tr.terminal:
        bootstrap = 0.0
    else:
        next_q = qtable.peek(tr.s_next)
        legal = np.flatnonzero(tr.mask_next)
        bootstrap = float(next_q[legal].max()) if legal.size else 0.0
    target = tr.r + gamma * bootstrap
    row = qtable.values(tr.s)
    a = tr.a - 1
    row[a] = (1.0 - alpha) * row[a] + alpha * target
    return qtable


class QLearningAgent:
    """Online tabular learner: acts epsilon-greedily, updates every step."""

    def __init__(self, spec: AssemblySpec, config):
        self.qtable = QTable(spec.num_tasks, init=config.q_init)
        self.alpha = config.alpha
        self.gamma = config.gamma

    def begin_episode(self, episode: int) -> None:
        pass

    def act(self, state, obs, mask, epsilon, rng) -> int:
        return epsilon_greedy(self.qtable.peek(state), mask, epsilon, rng)

    def observe(self, state, obs, mask, action, reward, next_state, next_obs,
                next_mask, terminal, truncated, rng) -> None:
        q_update(
            self.qtable,
            Transition(
                s=state, a=action, r=reward, s_next=next_state,
                terminal=terminal, mask_next=next_mask,
            ),
            self.alpha,
            self.gamma,
        )

    def end_episode(self, rng) -> float:
        return float("nan")

    def greedy_sequence(self, env) -> tuple[int, ...]:
        """Roll out the greedy policy once (no exploration, no learning)."""
        state = env.reset()
        seq = []
        for _ in range(env.spec.num_tasks):
            mask = env.action_mask()
            action = epsilon_greedy(self.qtable.peek(state), mask, 0.0, _NULL_RNG)
            out = env.step(action)
            seq.append(action)
            state = out.next_state
        return tuple(seq)


class _NullRng:
    """Stand-in rng for purely greedy selection (never consulted)."""

    def random(self):
        raise AssertionError("greedy selection must not consume randomness")

    def integers(self, *args, **kwargs):
        raise AssertionError("greedy selection must not consume randomness")


_NULL_RNG = _NullRng()
