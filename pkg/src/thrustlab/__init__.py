"""Batched thruster-actuated spacecraft simulator with multi-discrete PPO training."""

__version__ = "0.1.0"
