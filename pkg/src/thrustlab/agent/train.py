"""Training loop, checkpoints and the training curve file."""

import csv
import pickle
import logging
import time
from pathlib import Path

import numpy as np
import torch

from .. import __version__, vecenv
from ..config import RunConfig
from ..errors import PolicyTaskMismatch
from .network import build_policy, policy_forward
from .ppo import RolloutBuffer, ValueNormalizer, ppo_update, sample_actions

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
CURVE_FIELDS = [
    "epoch",
    "mean_return",
    "mean_final_distance",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "steps_per_second",
]
WALL_CLOCK_FIELDS = {"steps_per_second"}


def act(net, obs, greedy=False, generator=None):
    """Numpy actions for numpy observations."""
    with torch.no_grad():
        logits, _ = policy_forward(net, np.asarray(obs, dtype=np.float32))
        actions, _, _ = sample_actions(logits, generator, greedy=greedy)
    return actions.numpy()


def train(config, seed=0, n_envs=None, epochs=None, workers=None, out_dir=None, on_epoch=None):
    """Train a policy for ``config.task.kind``.

    Each epoch collects ``ppo.horizon`` steps from every environment and runs
    one PPO update. Returns ``(net, curve)`` where ``curve`` is a list of
    dicts with CURVE_FIELDS. With ``out_dir`` set, checkpoints and
    ``curve.csv`` are written there.
    """
    config = config if isinstance(config, RunConfig) else RunConfig.for_task(config)
    hp = config.ppo_hparams()
    n_envs = n_envs or config.ppo.num_envs
    epochs = hp.epochs if epochs is None else epochs
    hidden, layers = config.arch()
    spec = config.env_spec()

    gen = torch.Generator().manual_seed(int(seed))
    net = build_policy(spec.obs_dim, spec.n_actions, hidden, layers, generator=gen)
    optimizer = torch.optim.Adam(net.parameters(), lr=hp.lr, eps=1e-5)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    net.value_norm = ValueNormalizer(hp.normalize_value)
    curve = []
    if epochs == 0:
        _finish(out_dir, net, config, seed, 0, curve)
        return net, curve

    env = vecenv.make(spec, n_envs, seed, workers=workers)
    vnorm = net.value_norm
    buffer = RolloutBuffer(hp.horizon, n_envs, spec.obs_dim, spec.n_actions)
    obs = env.obs
    try:
        for epoch in range(1, epochs + 1):
            start = time.perf_counter()
            for t in range(hp.horizon):
                with torch.no_grad():
                    logits, values = policy_forward(net, obs.astype(np.float32))
                    actions, logp, _ = sample_actions(logits, gen)
                batch = env.step_batch(actions.numpy())
                values = vnorm.denormalize(values.numpy().astype(np.float64))
                buffer.add(t, obs, actions.numpy(), logp.numpy(), values, batch.rewards, batch.dones)
                truncated = batch.info["truncated"]
                if truncated.any():
                    with torch.no_grad():
                        _, tv = policy_forward(net, batch.info["terminal_obs"][truncated].astype(np.float32))
                    buffer.terminal_values[t, truncated] = vnorm.denormalize(tv.numpy().astype(np.float64))
                obs = batch.observations
            with torch.no_grad():
                _, bootstrap = policy_forward(net, obs.astype(np.float32))
            buffer.finish(vnorm.denormalize(bootstrap.numpy().astype(np.float64)), hp.gamma, hp.lam)
            vnorm.update(buffer.returns)
            batch = buffer.flat()
            batch["returns"] = torch.as_tensor(vnorm.normalize(buffer.returns).reshape(-1), dtype=torch.float32)
            report = ppo_update(net, optimizer, batch, hp, generator=gen)
            elapsed = time.perf_counter() - start
            row = {
                "epoch": epoch,
                "mean_return": float(buffer.rewards.sum(axis=0).mean()),
                "mean_final_distance": float(env.distance().mean()),
                **report,
                "steps_per_second": hp.horizon * n_envs / elapsed,
            }
            curve.append(row)
            if on_epoch is not None:
                on_epoch(row)
            log.info("epoch %d return %.3f distance %.3f", epoch, row["mean_return"], row["mean_final_distance"])
            if out_dir is not None and epoch % config.ppo.checkpoint_every == 0:
                save_checkpoint(out_dir / "checkpoints" / f"epoch_{epoch:05d}.pt", net, config, seed, epoch)
    finally:
        env.close()
    _finish(out_dir, net, config, seed, epochs, curve)
    return net, curve


def _finish(out_dir, net, config, seed, epoch, curve):
    if out_dir is None:
        return
    save_checkpoint(out_dir / "checkpoint.pt", net, config, seed, epoch)
    write_curve(out_dir / "curve.csv", curve, config.config_hash())


def write_curve(path, rows, config_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(row[k])) if k != "epoch" else row[k]) for k in CURVE_FIELDS})


def read_curve(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def save_checkpoint(path, net, config, seed, epoch):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": __version__,
        "config_hash": config.config_hash(),
        "config": config.resolved().to_dict(),
        "seed": int(seed),
        "epoch": int(epoch),
        "arch": net.arch,
        "state_dict": net.state_dict(),
        "value_norm": getattr(net, "value_norm", ValueNormalizer(False)).state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Return ``(net, payload)``; ``payload['config']`` is a RunConfig."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as exc:
        raise PolicyTaskMismatch(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise PolicyTaskMismatch(f"{path} is not a format-{CHECKPOINT_FORMAT} checkpoint")
    arch = payload["arch"]
    net = build_policy(arch["obs_dim"], arch["n_thrusters"], arch["hidden"], arch["layers"])
    net.load_state_dict(payload["state_dict"])
    net.value_norm = ValueNormalizer()
    net.value_norm.load_state_dict(payload["value_norm"])
    net.eval()
    payload = dict(payload)
    payload["config"] = RunConfig.from_dict(payload["config"], source=f"{path}[config]")
    return net, payload
