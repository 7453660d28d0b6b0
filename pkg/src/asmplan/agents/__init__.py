"""Learning agents: tabular Q-Learning, DQN, A2C, and a rainbow-style
DQN variant, plus the shared training loop."""

from asmplan.agents.a2c import (
    A2CAgent,
    Rollout,
    a2c_advantages,
    a2c_update,
    actor_loss_fn,
    critic_loss_fn,
)
from asmplan.agents.common import (
    AgentConfig,
    TrainMetrics,
    encode_observation,
    epsilon_at,
    epsilon_greedy,
    masked_log_softmax,
    observation_width,
)
from asmplan.agents.dqn import (
    DqnAgent,
    QNetwork,
    dqn_loss_fn,
    dqn_targets,
    dqn_train_step,
    dueling_combine,
)
from asmplan.agents.qlearning import QLearningAgent, QTable, q_update
from asmplan.agents.replay import (
    PrioritizedBuffer,
    ReplayBuffer,
    SumTree,
    Transition,
    nstep_fold,
    per_sample,
    per_update,
)
from asmplan.agents.training import ALGORITHMS, resolve_configs, train

__all__ = [
    "A2CAgent",
    "ALGORITHMS",
    "AgentConfig",
    "DqnAgent",
    "PrioritizedBuffer",
    "QLearningAgent",
    "QNetwork",
    "QTable",
    "ReplayBuffer",
    "Rollout",
    "SumTree",
    "TrainMetrics",
    "Transition",
    "a2c_advantages",
    "a2c_update",
    "actor_loss_fn",
    "critic_loss_fn",
    "dqn_loss_fn",
    "dqn_targets",
    "dqn_train_step",
    "dueling_combine",
    "encode_observation",
    "epsilon_at",
    "epsilon_greedy",
    "masked_log_softmax",
    "nstep_fold",
    "observation_width",
    "per_sample",
    "per_update",
    "q_update",
    "resolve_configs",
    "train",
]
