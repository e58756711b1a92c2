from .agents import (
    ConvergenceTrace,
    Hyperparams,
    TrainedPolicy,
    policy_effect,
    train_actor_critic,
    train_dqn,
    train_multi_q,
    train_ppo,
    train_q_learning,
)
from .env import EnvState, PartitionEnv, ReplayBuffer, Transition
from .nets import TinyNet, grad_check

__all__ = [
    "ConvergenceTrace",
    "EnvState",
    "Hyperparams",
    "PartitionEnv",
    "ReplayBuffer",
    "TinyNet",
    "TrainedPolicy",
    "Transition",
    "grad_check",
    "policy_effect",
    "train_actor_critic",
    "train_dqn",
    "train_multi_q",
    "train_ppo",
    "train_q_learning",
]
