import math

import torch
from torch import nn

from ..errors import ShapeMismatch


class PolicyNet(nn.Module):
    """Shared tanh trunk with one 2-way categorical head per thruster and a value head."""

    def __init__(self, obs_dim, n_thrusters, hidden=128, layers=2):
        super().__init__()
        self.obs_dim = int(obs_dim)
        self.n_thrusters = int(n_thrusters)
        self.hidden = int(hidden)
        self.layers = int(layers)
        blocks = []
        width = self.obs_dim
        for _ in range(self.layers):
            blocks += [nn.Linear(width, self.hidden), nn.Tanh()]
            width = self.hidden
        self.trunk = nn.Sequential(*blocks)
        self.logits = nn.Linear(width, 2 * self.n_thrusters)
        self.value = nn.Linear(width, 1)

    @property
    def arch(self):
        return {"obs_dim": self.obs_dim, "n_thrusters": self.n_thrusters, "hidden": self.hidden, "layers": self.layers}

    def forward(self, obs):
        z = self.trunk(obs)
        logits = self.logits(z).reshape(*obs.shape[:-1], self.n_thrusters, 2)
        return logits, self.value(z).squeeze(-1)


def param_count(obs_dim, n_thrusters, hidden, layers):
    count = 0
    width = obs_dim
    for _ in range(layers):
        count += width * hidden + hidden
        width = hidden
    return count + (width + 1) * 2 * n_thrusters + width + 1


def init_weights(net, generator=None, head_gain=0.01):
    """Orthogonal init: sqrt(2) gain in the trunk, small gain on the policy head."""
    for module in net.trunk:
        if isinstance(module, nn.Linear):
            nn.init.orthogonal_(module.weight, math.sqrt(2.0), generator=generator)
            nn.init.zeros_(module.bias)
    nn.init.orthogonal_(net.logits.weight, head_gain, generator=generator)
    nn.init.zeros_(net.logits.bias)
    nn.init.orthogonal_(net.value.weight, 1.0, generator=generator)
    nn.init.zeros_(net.value.bias)
    return net


def build_policy(obs_dim, n_thrusters, hidden=128, layers=2, generator=None):
    return init_weights(PolicyNet(obs_dim, n_thrusters, hidden, layers), generator)


def default_arch(planar):
    """(hidden, layers): 2x128 for the planar platform, 3x256 for the free flyer."""
    return (128, 2) if planar else (256, 3)


def policy_forward(net, obs):
    """Logits ``(batch, n, 2)`` and values ``(batch,)`` for a batch of observations."""
    obs = torch.as_tensor(obs, dtype=next(net.parameters()).dtype)
    if obs.shape[-1] != net.obs_dim:
        raise ShapeMismatch(f"policy expects observations of width {net.obs_dim}, got {obs.shape[-1]}")
    return net(obs)
