"""Advantage actor-critic with masked softmax policy.

The reward here is terminal-only, so rollouts are whole episodes and the
advantage horizon defaults to the episode length.  Advantages are
treated as constants in the actor objective; the entropy of the masked
policy is added as a bonus to delay premature collapse onto one
sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from asmplan import nn
from asmplan.agents.common import masked_log_softmax

__all__ = [
    "Rollout",
    "a2c_advantages",
    "a2c_update",
    "actor_loss_fn",
    "critic_loss_fn",
    "A2CAgent",
]


@dataclass
class Rollout:
    """One on-policy episode: arrays indexed by step."""

    obs: np.ndarray        # (T, obs_width) state where each action was taken
    actions: np.ndarray    # (T,) 0-based action indices
    rewards: np.ndarray    # (T,)
    masks: np.ndarray      # (T, num_actions) legal actions at each state
    final_obs: np.ndarray  # state reached after the last step
    terminal: bool         # True when the episode actually finished

    def __len__(self) -> int:
        return len(self.actions)


def _state_values(critic: nn.Mlp, rollout: Rollout) -> tuple[np.ndarray, float]:
    values, _ = nn.forward(critic, rollout.obs)
    v = values[:, 0]
    if rollout.terminal:
        v_final = 0.0
    else:
        out, _ = nn.forward(critic, rollout.final_obs[None, :])
        v_final = float(out[0, 0])
    return v, v_final


def a2c_advantages(
    rollout: Rollout, critic: nn.Mlp, gamma: float, n: int
) -> np.ndarray:
    """n-step advantage per step: discounted reward sum plus a bootstrap
    value n states ahead, minus the critic's value at the step itself.
    The bootstrap is 0 past the end of a finished episode."""
    if len(rollout) == 0:
        raise ValueError("a2c_advantages: empty rollout")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    t_len = len(rollout)
    v, v_final = _state_values(critic, rollout)
    adv = np.empty(t_len)
    for t in range(t_len):
        m = min(n, t_len - t)
        g = 0.0
        discount = 1.0
        for k in range(m):
            g += discount * rollout.rewards[t + k]
            discount *= gamma
        if t + m < t_len:
            g += discount * v[t + m]
        elif not rollout.terminal:
            g += discount * v_final
        adv[t] = g - v[t]
    return adv


def actor_loss_fn(rollout: Rollout, advantages: np.ndarray, entropy_coef: float):
    """loss_and_grad over the actor for a frozen rollout and advantages.

    Loss = -(sum_t log pi(a_t|s_t) * A_t + entropy_coef * sum_t H_t); the
    gradient flows only through the policy logits, advantages are
    constants.  Shared by the training update and gradient checks.
    """
    t_len = len(rollout)
    rows = np.arange(t_len)
    masks = rollout.masks.astype(bool)

    def loss_and_grad(actor: nn.Mlp):
        logits, cache = nn.forward(actor, rollout.obs)
        log_probs = masked_log_softmax(logits, masks)
        finite_logp = np.where(masks, log_probs, 0.0)  # keeps 0 * -inf out
        probs = np.where(masks, np.exp(finite_logp), 0.0)
        entropy = -(probs * finite_logp).sum(axis=1)
        picked = log_probs[rows, rollout.actions]
        loss = -(float(picked @ advantages) + entropy_coef * float(entropy.sum()))
        # d/dz_j of -log pi(a_t) A_t is A_t (pi_j - onehot_j(a_t));
        # d/dz_j of the entropy is -pi_j (log pi_j + H_t)
        d_logits = advantages[:, None] * probs
        d_logits[rows, rollout.actions] -= advantages
        d_entropy = -probs * (finite_logp + entropy[:, None])
        d_logits -= entropy_coef * d_entropy
        d_logits = np.where(masks, d_logits, 0.0)
        return loss, nn.backward(actor, cache, d_logits)

    return loss_and_grad


def critic_loss_fn(obs: np.ndarray, targets: np.ndarray):
    """loss_and_grad over the critic: sum of squared errors to targets."""

    def loss_and_grad(critic: nn.Mlp):
        values, cache = nn.forward(critic, obs)
        diff = values[:, 0] - targets
        loss = float(diff @ diff)
        return loss, nn.backward(critic, cache, 2.0 * diff[:, None])

    return loss_and_grad


def a2c_update(
    rollout: Rollout,
    actor: nn.Mlp,
    critic: nn.Mlp,
    actor_opt: nn.OptimizerState,
    critic_opt: nn.OptimizerState,
    gamma: float,
    n: int,
    entropy_coef: float,
) -> tuple[float, float]:
    """One actor and one critic step on a full rollout; returns losses."""
    if len(rollout) == 0:
        raise ValueError("a2c_update: empty rollout")
    v, _ = _state_values(critic, rollout)
    advantages = a2c_advantages(rollout, critic, gamma, n)
    targets = advantages + v  # n-step returns

    actor_loss, actor_grads = actor_loss_fn(rollout, advantages, entropy_coef)(actor)
    nn.apply_update(actor, actor_grads, actor_opt)

    critic_loss, critic_grads = critic_loss_fn(rollout.obs, targets)(critic)
    nn.apply_update(critic, critic_grads, critic_opt)
    return actor_loss, critic_loss


class A2CAgent:
    """Full-episode on-policy learner with separate actor and critic nets."""

    def __init__(self, spec, config, obs_width: int, actor_seed: int,
                 critic_seed: int):
        self.config = config
        self.n_step = config.n_step  # None = full episode
        self.actor = nn.init(
            (obs_width, *config.hidden_sizes, spec.num_tasks),
            seed=actor_seed, hidden=config.hidden_activation,
        )
        self.critic = nn.init(
            (obs_width, *config.hidden_sizes, 1),
            seed=critic_seed, hidden=config.hidden_activation,
        )
        self.actor_opt = nn.OptimizerState.adam(lr=config.actor_lr)
        self.critic_opt = nn.OptimizerState.adam(lr=config.critic_lr)
        self._obs: list[np.ndarray] = []
        self._actions: list[int] = []
        self._rewards: list[float] = []
        self._masks: list[np.ndarray] = []
        self._final_obs: np.ndarray | None = None
        self._terminal = False

    def begin_episode(self, episode: int) -> None:
        self._obs = []
        self._actions = []
        self._rewards = []
        self._masks = []
        self._final_obs = None
        self._terminal = False

    def act(self, state, obs, mask, epsilon, rng) -> int:
        logits, _ = nn.forward(self.actor, obs[None, :])
        log_probs = masked_log_softmax(logits[0], mask)
        probs = np.where(mask, np.exp(log_probs), 0.0)
        probs = probs / probs.sum()
        return int(rng.choice(len(probs), p=probs)) + 1

    def observe(self, state, obs, mask, action, reward, next_state, next_obs,
                next_mask, terminal, truncated, rng) -> None:
        self._obs.append(obs)
        self._actions.append(action - 1)
        self._rewards.append(reward)
        self._masks.append(np.asarray(mask, dtype=bool))
        self._final_obs = next_obs
        self._terminal = terminal

    def end_episode(self, rng) -> float:
        rollout = Rollout(
            obs=np.stack(self._obs),
            actions=np.asarray(self._actions, dtype=np.int64),
            rewards=np.asarray(self._rewards),
            masks=np.stack(self._masks),
            final_obs=self._final_obs,
            terminal=self._terminal,
        )
        n = self.n_step if self.n_step is not None else len(rollout)
        actor_loss, critic_loss = a2c_update(
            rollout, self.actor, self.critic, self.actor_opt, self.critic_opt,
            self.config.gamma, n, self.config.entropy_coef,
        )
        return actor_loss + critic_loss
