"""Deep Q-Network and its Rainbow-style variant.

One agent class covers both: the plain configuration uses a single-head
network, uniform replay, and 1-step targets; the rainbow configuration
switches on double targets, a dueling head, proportional prioritized
replay, and 3-step folds.  Exploration is epsilon-greedy in both cases.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from asmplan import nn
from asmplan.agents.common import epsilon_greedy
from asmplan.agents.replay import (
    PrioritizedBuffer,
    ReplayBuffer,
    Transition,
    nstep_fold,
)

__all__ = [
    "QNetwork",
    "dueling_combine",
    "dqn_targets",
    "dqn_loss_fn",
    "dqn_train_step",
    "DqnAgent",
]


def dueling_combine(value: np.ndarray, advantages: np.ndarray) -> np.ndarray:
    """Q(s,a) = V(s) + A(s,a) - mean_a A(s,a), batched or single-state."""
    value = np.asarray(value, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.ndim == 1:
        return value + advantages - advantages.mean()
    return value[:, None] + advantages - advantages.mean(axis=1, keepdims=True)


class QNetwork:
    """An Mlp viewed as a Q-function, with an optional dueling head.

    A dueling network has num_actions + 1 outputs: column 0 is the state
    value, the rest are advantages, combined by dueling_combine.
    """

    def __init__(self, mlp: nn.Mlp, num_actions: int, dueling: bool = False):
        expected = num_actions + 1 if dueling else num_actions
        if mlp.layer_sizes[-1] != expected:
            raise ValueError(
                f"network has {mlp.layer_sizes[-1]} outputs, expected {expected}"
            )
        self.mlp = mlp
        self.num_actions = num_actions
        self.dueling = dueling

    @classmethod
    def build(cls, obs_width: int, num_actions: int, config, seed) -> "QNetwork":
        out = num_actions + 1 if config.dueling else num_actions
        mlp = nn.init(
            (obs_width, *config.hidden_sizes, out),
            seed=seed,
            hidden=config.hidden_activation,
        )
        return cls(mlp, num_actions, dueling=config.dueling)

    def copy(self) -> "QNetwork":
        return QNetwork(self.mlp.copy(), self.num_actions, self.dueling)

    def sync_from(self, other: "QNetwork") -> None:
        for mine, theirs in zip(self.mlp.parameters(), other.mlp.parameters()):
            mine[:] = theirs

    def q_values(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        out, cache = nn.forward(self.mlp, x)
        if self.dueling:
            return dueling_combine(out[:, 0], out[:, 1:]), cache
        return out, cache

    def backward_dq(self, cache, d_q: np.ndarray) -> nn.Gradients:
        """Parameter gradients given dLoss/dQ, routed through the head."""
        if not self.dueling:
            return nn.backward(self.mlp, cache, d_q)
        d_value = d_q.sum(axis=1)
        d_adv = d_q - d_q.mean(axis=1, keepdims=True)
        d_out = np.concatenate([d_value[:, None], d_adv], axis=1)
        return nn.backward(self.mlp, cache, d_out)


def _batch_arrays(batch: list[Transition]):
    s = np.stack([tr.s for tr in batch])
    a = np.array([tr.a - 1 for tr in batch], dtype=np.int64)
    r = np.array([tr.r for tr in batch])
    s_next = np.stack([tr.s_next for tr in batch])
    terminal = np.array([tr.terminal for tr in batch], dtype=bool)
    if any(tr.mask_next is None for tr in batch):
        raise ValueError("network agents need mask_next on every transition")
    masks = np.stack([np.asarray(tr.mask_next, dtype=bool) for tr in batch])
    return s, a, r, s_next, terminal, masks


def dqn_targets(
    batch: list[Transition],
    online: QNetwork,
    target: QNetwork,
    gamma: float,
    double: bool = False,
) -> np.ndarray:
    """Bootstrap targets y for a batch of (folded) transitions.

    ``gamma`` is the effective discount of the fold (gamma^n for n-step
    transitions).  Vanilla: y = r + gamma * max legal Q_target(s',.).
    Double: the online net picks the argmax, the target net evaluates
    it.  Terminal transitions use y = r.  Unmasked agents store all-true
    masks, so "legal" degrades to "all actions" automatically.
    """
    if not batch:
        raise ValueError("dqn_targets: empty batch")
    _, _, r, s_next, terminal, masks = _batch_arrays(batch)
    q_target, _ = target.q_values(s_next)
    masked_target = np.where(masks, q_target, -np.inf)
    if double:
        q_online, _ = online.q_values(s_next)
        masked_online = np.where(masks, q_online, -np.inf)
        best = np.argmax(masked_online, axis=1)
        bootstrap = q_target[np.arange(len(batch)), best]
    else:
        bootstrap = masked_target.max(axis=1)
    bootstrap = np.where(terminal, 0.0, bootstrap)
    return r + gamma * bootstrap


def dqn_loss_fn(
    batch: list[Transition],
    online: QNetwork,
    target: QNetwork,
    gamma: float,
    double: bool = False,
    weights: np.ndarray | None = None,
    diag: dict | None = None,
):
    """Build loss_and_grad(mlp) for this frozen batch.

    The targets y are computed once, up front, from the nets as passed
    in; the returned closure then treats them as constants, exactly the
    frozen-parameter semantics of the iteration loss.  The same closure
    drives training steps and finite-difference gradient checks, so the
    check exercises the real training path.

    When ``diag`` is given, each call stores the batch TD errors y - Q(s,a)
    under diag["td_errors"] (used for priority updates without an extra
    forward pass).  Returns (loss_and_grad, y).
    """
    y = dqn_targets(batch, online, target, gamma, double=double)
    s, a, _, _, _, _ = _batch_arrays(batch)
    b = len(batch)
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    rows = np.arange(b)
    head = QNetwork.__new__(QNetwork)  # re-wrap candidate mlps cheaply
    head.num_actions = online.num_actions
    head.dueling = online.dueling

    def loss_and_grad(mlp: nn.Mlp):
        head.mlp = mlp
        q, cache = head.q_values(s)
        q_sa = q[rows, a]
        delta = q_sa - y
        loss = float(np.mean(w * delta * delta))
        d_q = np.zeros_like(q)
        d_q[rows, a] = 2.0 * w * delta / b
        if diag is not None:
            diag["td_errors"] = -delta
        return loss, head.backward_dq(cache, d_q)

    return loss_and_grad, y


def dqn_train_step(
    buffer,
    online: QNetwork,
    target: QNetwork,
    optimizer: nn.OptimizerState,
    config,
    rng: np.random.Generator,
    beta: float = 1.0,
) -> float | None:
    """One minibatch update; returns the loss, or None when the buffer
    cannot fill a batch yet.  Syncs the target net every
    ``config.target_sync`` optimizer steps."""
    if len(buffer) < config.batch_size:
        return None
    gamma_eff = config.gamma ** (config.n_step or 1)
    prioritized = isinstance(buffer, PrioritizedBuffer)
    if prioritized:
        batch, indices, weights = buffer.sample(config.batch_size, beta, rng)
    else:
        batch = buffer.sample(config.batch_size, rng)
        indices, weights = None, None
    diag: dict = {}
    loss_and_grad, _ = dqn_loss_fn(
        batch, online, target, gamma_eff, double=config.double,
        weights=weights, diag=diag,
    )
    loss, grads = loss_and_grad(online.mlp)
    if prioritized:
        buffer.update_priorities(indices, diag["td_errors"])
    nn.apply_update(online.mlp, grads, optimizer)
    if optimizer.step % config.target_sync == 0:
        target.sync_from(online)
    return loss


class DqnAgent:
    """Replay-based Q learner (plain DQN or the rainbow variant)."""

    def __init__(self, spec, config, obs_width: int, init_seed: int):
        self.config = config
        self.n_step = config.n_step or 1
        self.online = QNetwork.build(obs_width, spec.num_tasks, config, init_seed)
        self.target = self.online.copy()
        if config.prioritized:
            self.buffer = PrioritizedBuffer(
                config.buffer_capacity,
                alpha=config.per_alpha,
                priority_floor=config.per_priority_floor,
            )
        else:
            self.buffer = ReplayBuffer(config.buffer_capacity)
        self.optimizer = nn.OptimizerState.adam(lr=config.lr)
        self._pending: deque[Transition] = deque()
        self._beta = config.per_beta_start
        self._steps = 0
        self._losses: list[float] = []

    def begin_episode(self, episode: int) -> None:
        total = max(1, self.config.episodes - 1)
        frac = min(1.0, episode / total)
        self._beta = self.config.per_beta_start + frac * (
            self.config.per_beta_final - self.config.per_beta_start
        )
        self._losses = []
        self._pending.clear()

    def act(self, state, obs, mask, epsilon, rng) -> int:
        q, _ = self.online.q_values(obs[None, :])
        return epsilon_greedy(q[0], mask, epsilon, rng)

    def observe(self, state, obs, mask, action, reward, next_state, next_obs,
                next_mask, terminal, truncated, rng) -> None:
        self._pending.append(
            Transition(
                s=obs, a=action, r=reward, s_next=next_obs,
                terminal=terminal, mask_next=next_mask,
            )
        )
        if len(self._pending) >= self.n_step:
            self._push_fold()
            self._pending.popleft()
        if terminal:
            while self._pending:
                self._push_fold()
                self._pending.popleft()
        elif truncated:
            # a short tail without a terminal has no well-defined n-step
            # bootstrap discount, so the last < n transitions are dropped
            self._pending.clear()
        self._steps += 1
        if (
            self._steps % self.config.train_every == 0
            and len(self.buffer) >= max(self.config.learning_starts,
                                        self.config.batch_size)
        ):
            loss = dqn_train_step(
                self.buffer, self.online, self.target, self.optimizer,
                self.config, rng, beta=self._beta,
            )
            if loss is not None:
                self._losses.append(loss)

    def _push_fold(self) -> None:
        self.buffer.add(nstep_fold(self._pending, self.n_step, self.config.gamma))

    def end_episode(self, rng) -> float:
        return float(np.mean(self._losses)) if self._losses else float("nan")

    def greedy_sequence(self, env, encode) -> tuple[int, ...]:
        state = env.reset()
        seq = []
        for _ in range(env.spec.num_tasks):
            mask = env.action_mask()
            q, _ = self.online.q_values(encode(state)[None, :])
            legal = np.flatnonzero(mask)
            action = int(legal[np.argmax(q[0][legal])]) + 1
            out = env.step(action)
            seq.append(action)
            state = out.next_state
        return tuple(seq)
