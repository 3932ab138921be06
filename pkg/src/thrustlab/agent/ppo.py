"""Multi-discrete PPO pieces: sampling, GAE, rollout storage and the clipped update."""

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigInvalid, NonFiniteLoss
from .network import policy_forward

ADV_EPS = 1e-8


@dataclass(frozen=True)
class PPOHyperparams:
    epochs: int = 2000
    horizon: int = 32
    minibatches: int = 4
    update_epochs: int = 4
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.005
    lr: float = 3e-4
    max_grad_norm: float = 1.0
    normalize_value: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigInvalid(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise ConfigInvalid(f"lam must be in [0, 1], got {self.lam}")
        if self.clip <= 0:
            raise ConfigInvalid(f"clip must be positive, got {self.clip}")
        for name in ("horizon", "minibatches", "update_epochs"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigInvalid("epochs must be >= 0")

    def to_dict(self):
        return asdict(self)


def log_prob_entropy(logits, actions):
    """Joint log-probability of ``actions`` (sum over heads) and total entropy."""
    logp_all = F.log_softmax(logits, dim=-1)
    logp = logp_all.gather(-1, actions.long().unsqueeze(-1)).squeeze(-1).sum(-1)
    entropy = -(logp_all.exp() * logp_all).sum(-1).sum(-1)
    return logp, entropy


def sample_actions(logits, generator=None, greedy=False):
    """Draw one bit per thruster head.

    Bit value ``k`` has probability ``softmax(logits[..., k])``; returns
    ``(actions, joint_log_prob, entropy)``.
    """
    logits = torch.as_tensor(logits)
    if greedy:
        actions = logits.argmax(-1)
    else:
        p_fire = torch.softmax(logits, dim=-1)[..., 1]
        u = torch.rand(p_fire.shape, generator=generator, dtype=p_fire.dtype)
        actions = (u < p_fire).long()
    logp, entropy = log_prob_entropy(logits, actions)
    return actions, logp, entropy


def gae(rewards, values, dones, bootstrap, gamma, lam, terminal_values=None):
    """Generalized advantage estimates over a ``(horizon, n_envs)`` block.

    ``dones[t]`` cuts the recursion after step t. ``bootstrap`` holds the
    value of the observation following the last step. Where an episode was
    cut by a time/boundary limit, ``terminal_values[t]`` (already zero
    elsewhere) is the value of the terminal observation and is discounted in.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    H = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=np.float64)
    last = np.zeros_like(rewards[0])
    for t in reversed(range(H)):
        delta = rewards[t] + gamma * next_value * notdone[t] - values[t]
        if terminal_values is not None:
            delta = delta + gamma * terminal_values[t]
        last = delta + gamma * lam * notdone[t] * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


class RolloutBuffer:
    def __init__(self, horizon, n_envs, obs_dim, n_thrusters):
        self.horizon = horizon
        self.n_envs = n_envs
        self.obs = np.zeros((horizon, n_envs, obs_dim), dtype=np.float32)
        self.actions = np.zeros((horizon, n_envs, n_thrusters), dtype=np.int64)
        self.logp = np.zeros((horizon, n_envs), dtype=np.float32)
        self.values = np.zeros((horizon, n_envs))
        self.rewards = np.zeros((horizon, n_envs))
        self.dones = np.zeros((horizon, n_envs), dtype=bool)
        self.terminal_values = np.zeros((horizon, n_envs))
        self.advantages = None
        self.returns = None

    def add(self, t, obs, actions, logp, values, rewards, dones):
        self.obs[t] = obs
        self.actions[t] = actions
        self.logp[t] = logp
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.terminal_values[t] = 0.0

    def finish(self, bootstrap, gamma, lam):
        self.advantages, self.returns = gae(
            self.rewards, self.values, self.dones, bootstrap, gamma, lam, self.terminal_values
        )

    def flat(self):
        """Tensors with the time and env axes merged."""
        n = self.horizon * self.n_envs
        return {
            "obs": torch.as_tensor(self.obs.reshape(n, -1)),
            "actions": torch.as_tensor(self.actions.reshape(n, -1)),
            "logp": torch.as_tensor(self.logp.reshape(n)),
            "advantages": torch.as_tensor(self.advantages.reshape(n), dtype=torch.float32),
            "returns": torch.as_tensor(self.returns.reshape(n), dtype=torch.float32),
        }


class ValueNormalizer:
    """Running mean/variance of return targets (Chan et al. parallel update).

    With normalization on, the value head predicts standardized returns and
    rollout code maps predictions back with :meth:`denormalize`.
    """

    def __init__(self, enabled=True):
        self.enabled = enabled
        self.mean = 0.0
        self.var = 1.0
        self.count = 0.0

    def update(self, x):
        if not self.enabled:
            return
        x = np.asarray(x, dtype=np.float64).ravel()
        n = x.size
        if n == 0:
            return
        mean, var = x.mean(), x.var()
        total = self.count + n
        delta = mean - self.mean
        m2 = self.var * self.count + var * n + delta**2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self):
        return float(np.sqrt(max(self.var, 1e-8)))

    def normalize(self, x):
        return (x - self.mean) / self.std if self.enabled else x

    def denormalize(self, x):
        return x * self.std + self.mean if self.enabled else x

    def state_dict(self):
        return {"enabled": self.enabled, "mean": self.mean, "var": self.var, "count": self.count}

    def load_state_dict(self, state):
        self.enabled = bool(state["enabled"])
        self.mean, self.var, self.count = float(state["mean"]), float(state["var"]), float(state["count"])


def normalize(adv):
    return (adv - adv.mean()) / (adv.std(correction=0) + ADV_EPS)


def ppo_loss(net, obs, actions, old_logp, advantages, returns, hp):
    """Clipped-surrogate total loss and its parts for one minibatch."""
    logits, values = policy_forward(net, obs)
    logp, entropy = log_prob_entropy(logits, actions)
    ratio = torch.exp(logp - old_logp)
    surrogate = torch.min(ratio * advantages, torch.clamp(ratio, 1 - hp.clip, 1 + hp.clip) * advantages)
    policy_loss = -surrogate.mean()
    value_loss = ((values - returns) ** 2).mean()
    entropy = entropy.mean()
    total = policy_loss + hp.vf_coef * value_loss - hp.ent_coef * entropy
    clip_fraction = ((ratio - 1.0).abs() > hp.clip).float().mean()
    return total, {
        "policy_loss": policy_loss.detach(),
        "value_loss": value_loss.detach(),
        "entropy": entropy.detach(),
        "clip_fraction": clip_fraction,
    }


def ppo_update(net, optimizer, batch, hp, generator=None):
    """Run ``update_epochs`` passes of shuffled minibatch updates.

    ``batch`` is a dict of flat tensors (see RolloutBuffer.flat). Advantages
    are normalized once over the whole batch. Returns mean loss terms.
    """
    n = batch["obs"].shape[0]
    adv = normalize(batch["advantages"])
    mb_size = max(1, n // hp.minibatches)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
    count = 0
    for _ in range(hp.update_epochs):
        perm = torch.randperm(n, generator=generator)
        for start in range(0, mb_size * hp.minibatches, mb_size):
            idx = perm[start : start + mb_size]
            loss, parts = ppo_loss(
                net, batch["obs"][idx], batch["actions"][idx], batch["logp"][idx], adv[idx], batch["returns"][idx], hp
            )
            if not torch.isfinite(loss):
                raise NonFiniteLoss(
                    "PPO loss is not finite: "
                    + ", ".join(f"{k}={float(v):.6g}" for k, v in parts.items())
                )
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), hp.max_grad_norm)
            optimizer.step()
            for k, v in parts.items():
                totals[k] += float(v)
            count += 1
    return {k: v / count for k, v in totals.items()}
