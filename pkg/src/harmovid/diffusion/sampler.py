"""Conditioning layout plus the reverse-process steps and full sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import LatentVideo
from .denoiser import DenoiserNet
from .schedule import NoiseSchedule

NOISY_GROUP = "noisy_target"

SAMPLER_DETERMINISTIC = "deterministic"
SAMPLER_ANCESTRAL = "ancestral"


class LayoutError(ValueError):
    """Conditioning does not match the declared channel layout."""


@dataclass(frozen=True)
class ConditioningLayout:
    """Ordered channel groups concatenated along the channel axis.

    The first group is always the noisy target; the remaining groups name the
    conditioning streams in concatenation order, e.g.
    ``[("noisy_target", 48), ("flicker_input", 48), ("mask", 1)]``.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple((str(n), int(c)) for n, c in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups or groups[0][0] != NOISY_GROUP:
            raise LayoutError(f"first group must be {NOISY_GROUP!r}")
        if any(c < 1 for _, c in groups):
            raise LayoutError("channel counts must be positive")
        names = [n for n, _ in groups]
        if len(set(names)) != len(names):
            raise LayoutError("group names must be unique")

    @property
    def total_channels(self) -> int:
        return sum(c for _, c in self.groups)

    @property
    def target_channels(self) -> int:
        return self.groups[0][1]

    @property
    def cond_names(self) -> tuple:
        return tuple(n for n, _ in self.groups[1:])

    def pack(self, noisy: np.ndarray, cond: dict) -> np.ndarray:
        """Concatenate noisy target and conditioning arrays in layout order."""
        missing = set(self.cond_names) - set(cond)
        extra = set(cond) - set(self.cond_names)
        if missing or extra:
            raise LayoutError(
                f"conditioning mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        parts = [np.asarray(noisy, dtype=np.float64)]
        for name, channels in self.groups[1:]:
            arr = np.asarray(cond[name], dtype=np.float64)
            if arr.shape[:-1] != parts[0].shape[:-1]:
                raise LayoutError(
                    f"group {name!r} has grid shape {arr.shape[:-1]}, "
                    f"expected {parts[0].shape[:-1]}"
                )
            if arr.shape[-1] != channels:
                raise LayoutError(
                    f"group {name!r} has {arr.shape[-1]} channels, expected {channels}"
                )
            parts.append(arr)
        if parts[0].shape[-1] != self.target_channels:
            raise LayoutError(
                f"noisy target has {parts[0].shape[-1]} channels, "
                f"expected {self.target_channels}"
            )
        return np.concatenate(parts, axis=-1)

    def to_list(self):
        return [[n, c] for n, c in self.groups]

    @classmethod
    def from_list(cls, items) -> "ConditioningLayout":
        return cls(tuple((n, c) for n, c in items))


def predict_x0(z_t: np.ndarray, eps_hat: np.ndarray, t: int,
               schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form clean-latent estimate from a noise prediction."""
    ab = schedule.abar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def denoise_step(net: DenoiserNet, z_t: np.ndarray, cond: dict, t: int,
                 schedule: NoiseSchedule, layout: ConditioningLayout,
                 mode: str = SAMPLER_DETERMINISTIC,
                 rng: np.random.Generator | None = None,
                 clip_x0: bool = False) -> np.ndarray:
    """One reverse step z_t -> z_{t-1} (DDIM eta=0 or ancestral DDPM)."""
    if not 1 <= t <= schedule.steps:
        raise ValueError(f"timestep {t} outside [1, {schedule.steps}]")
    x = layout.pack(z_t, cond)
    eps_hat = net.predict(x[None], np.array([t]))[0]
    return apply_update(z_t, eps_hat, t, schedule, mode, rng, clip_x0=clip_x0)


def apply_update(z_t: np.ndarray, eps_hat: np.ndarray, t: int,
                 schedule: NoiseSchedule, mode: str,
                 rng: np.random.Generator | None = None,
                 clip_x0: bool = False) -> np.ndarray:
    """Reverse-process update from an already-computed noise prediction.

    ``clip_x0`` projects the implied clean latent onto the codec's valid
    [-1, 1] range before stepping, which keeps long chains from amplifying
    early prediction errors.
    """
    ab_t = schedule.abar(t)
    ab_prev = schedule.abar(t - 1)
    if mode == SAMPLER_DETERMINISTIC:
        x0 = (z_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
        if clip_x0:
            x0 = np.clip(x0, -1.0, 1.0)
        return np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat
    if mode == SAMPLER_ANCESTRAL:
        beta = schedule.beta(t)
        alpha = schedule.alpha(t)
        if clip_x0:
            x0 = np.clip((z_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t),
                         -1.0, 1.0)
            mean = (np.sqrt(alpha) * (1.0 - ab_prev) * z_t
                    + np.sqrt(ab_prev) * beta * x0) / (1.0 - ab_t)
        else:
            mean = (z_t - beta / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(alpha)
        if t == 1:
            return mean
        if rng is None:
            raise ValueError("ancestral sampling needs an rng")
        sigma = np.sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta)
        return mean + sigma * rng.standard_normal(z_t.shape)
    raise ValueError(f"unknown sampler mode {mode!r}")


def sample(net: DenoiserNet, cond: dict, shape, schedule: NoiseSchedule,
           layout: ConditioningLayout, mode: str = SAMPLER_DETERMINISTIC,
           seed: int = 0, clip_x0: bool = False) -> LatentVideo:
    """Run the full reverse chain from pure noise.

    The deterministic sampler is a pure function of (net, cond, seed): the
    seed only draws the initial noise.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(shape)
    for t in range(schedule.steps, 0, -1):
        z = denoise_step(net, z, cond, t, schedule, layout, mode=mode, rng=rng,
                         clip_x0=clip_x0)
    return LatentVideo(z)
