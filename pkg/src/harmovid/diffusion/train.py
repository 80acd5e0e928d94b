"""Noise-prediction training: loss computation and the seeded step loop."""

from __future__ import annotations

import numpy as np

from .denoiser import Adam, DenoiserNet
from .sampler import ConditioningLayout
from .schedule import NoiseSchedule


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message names the offending batch index."""


def epsilon_loss(net: DenoiserNet, layout: ConditioningLayout,
                 schedule: NoiseSchedule, batch, ts, eps):
    """MSE between true and predicted noise for explicit (t, eps) draws.

    ``batch`` is a sequence of (cond_dict, z0_array); ``ts`` and ``eps`` give
    each item's timestep and injected noise, which makes the loss a pure
    function of its arguments. Returns (loss, grads, per_item_losses).
    """
    ts = np.asarray(ts)
    xs = []
    targets = []
    for (cond, z0), t, e in zip(batch, ts, eps):
        ab = schedule.abar(int(t))
        z_t = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * e
        xs.append(layout.pack(z_t, cond))
        targets.append(e)
    x = np.stack(xs)
    target = np.stack(targets)
    return net.mse_and_grad(x, ts, target)


def train_step(net: DenoiserNet, optimizer: Adam, layout: ConditioningLayout,
               schedule: NoiseSchedule, batch, rng: np.random.Generator) -> float:
    """Sample (t, eps) per item, take one gradient step, return the loss."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    ts = rng.integers(1, schedule.steps + 1, size=len(batch))
    eps = [rng.standard_normal(z0.shape) for _, z0 in batch]
    loss, grads, per_item = epsilon_loss(net, layout, schedule, batch, ts, eps)
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(per_item))[0])
        raise TrainingDiverged(
            f"non-finite loss at batch index {bad} (t={int(ts[bad])})"
        )
    optimizer.step(net.params, grads)
    return loss
