"""Multi-discrete PPO agent. The training loop lives in :mod:`thrustlab.agent.train`."""

from .network import PolicyNet, build_policy, default_arch, param_count, policy_forward
from .ppo import PPOHyperparams, RolloutBuffer, gae, log_prob_entropy, ppo_loss, ppo_update, sample_actions

__all__ = [
    "PPOHyperparams",
    "PolicyNet",
    "RolloutBuffer",
    "build_policy",
    "default_arch",
    "gae",
    "log_prob_entropy",
    "param_count",
    "policy_forward",
    "ppo_loss",
    "ppo_update",
    "sample_actions",
]
