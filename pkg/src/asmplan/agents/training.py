"""Training entry point: builds env + agent from configs and runs the
episode loop, recording per-episode metrics.

Seeding contract: everything stochastic in a trial (env noise, action
sampling, replay draws, net initialization) derives from one seed, so a
fixed seed reproduces TrainMetrics bit for bit.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from asmplan.agents.a2c import A2CAgent
from asmplan.agents.common import (
    AgentConfig,
    TrainMetrics,
    encode_observation,
    epsilon_at,
    metrics_buffer,
    observation_width,
)
from asmplan.agents.dqn import DqnAgent
from asmplan.agents.qlearning import QLearningAgent
from asmplan.env import AssemblyEnv, ConfigError, EnvConfig
from asmplan.model import AssemblySpec

__all__ = ["ALGORITHMS", "train", "resolve_configs"]

ALGORITHMS = ("qlearning", "dqn", "a2c", "rainbow")

_DEFAULT_N_STEP = {"dqn": 1, "rainbow": 3}


def resolve_configs(
    algorithm: str,
    env_config: EnvConfig | None,
    agent_config: AgentConfig | None,
) -> tuple[EnvConfig, AgentConfig]:
    """Fill in per-algorithm defaults the user left unset.

    Rainbow trains without masking unless the config explicitly enables
    it, and always carries its double/dueling/prioritized components.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}"
        )
    env_config = env_config or EnvConfig()
    agent_config = agent_config or AgentConfig()
    if env_config.masking is None:
        env_config = replace(env_config, masking=algorithm != "rainbow")
    if algorithm == "rainbow":
        agent_config = replace(
            agent_config, double=True, dueling=True, prioritized=True
        )
    if agent_config.n_step is None and algorithm in _DEFAULT_N_STEP:
        agent_config = replace(agent_config, n_step=_DEFAULT_N_STEP[algorithm])
    return env_config, agent_config


def _make_agent(algorithm: str, spec: AssemblySpec, config: AgentConfig,
                init_rng: np.random.Generator):
    width = observation_width(spec)
    if algorithm == "qlearning":
        return QLearningAgent(spec, config)
    if algorithm in ("dqn", "rainbow"):
        seed = int(init_rng.integers(2**63))
        return DqnAgent(spec, config, width, seed)
    actor_seed = int(init_rng.integers(2**63))
    critic_seed = int(init_rng.integers(2**63))
    return A2CAgent(spec, config, width, actor_seed, critic_seed)


def train(
    algorithm: str,
    spec: AssemblySpec,
    env_config: EnvConfig | None = None,
    agent_config: AgentConfig | None = None,
    seed: int | np.random.SeedSequence = 0,
) -> TrainMetrics:
    """Run one trial of the given algorithm and return its metrics."""
    env_config, config = resolve_configs(algorithm, env_config, agent_config)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_ss, agent_ss, init_ss = ss.spawn(3)
    env = AssemblyEnv(spec, env_config, rng=np.random.default_rng(env_ss))
    agent_rng = np.random.default_rng(agent_ss)
    agent = _make_agent(algorithm, spec, config, np.random.default_rng(init_ss))

    masked = env.config.masking
    all_true = np.ones(spec.num_tasks, dtype=bool)
    all_false = np.zeros(spec.num_tasks, dtype=bool)
    uses_eps = algorithm != "a2c"
    metrics = metrics_buffer(algorithm, config.episodes)
    unwanted_so_far = 0

    for episode in range(config.episodes):
        eps = epsilon_at(config, episode) if uses_eps else 0.0
        agent.begin_episode(episode)
        state = env.reset()
        obs = encode_observation(state, spec)
        mask = env.action_mask() if masked else all_true
        info = None
        while True:
            action = agent.act(state, obs, mask, eps, agent_rng)
            out = env.step(action)
            next_state = out.next_state
            next_obs = (
                obs if next_state == state else encode_observation(next_state, spec)
            )
            if out.terminal:
                next_mask = all_false
            elif masked:
                next_mask = env.action_mask()
            else:
                next_mask = all_true
            agent.observe(
                state, obs, mask, action, out.reward, next_state, next_obs,
                next_mask, out.terminal, out.truncated, agent_rng,
            )
            if out.terminal or out.truncated:
                info = out.info
                final_reward = out.reward
                break
            state, obs, mask = next_state, next_obs, next_mask
        loss = agent.end_episode(agent_rng)

        metrics.duration[episode] = info["duration"]
        metrics.deterministic_equivalent[episode] = info["deterministic_equivalent"]
        metrics.reward[episode] = final_reward
        metrics.unwanted[episode] = info["unwanted"]
        unwanted_so_far += int(info["unwanted"])
        metrics.cumulative_unwanted[episode] = unwanted_so_far
        metrics.epsilon[episode] = eps
        metrics.loss[episode] = loss
        metrics.truncated[episode] = not info["trace"].finished
    return metrics
