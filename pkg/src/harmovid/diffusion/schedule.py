"""DDPM noise schedule and the forward noising process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import LatentVideo


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variance increments and the derived cumulative products.

    ``abar(t)`` is defined for t in 0..steps with abar(0) = 1, so the final
    deterministic update collapses to the predicted clean latent.
    """

    betas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=np.float64, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "betas", b)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if b.min() <= 0.0 or b.max() >= 1.0:
            raise ValueError("betas must lie strictly inside (0, 1)")
        if b.size > 1 and not np.all(np.diff(b) > 0):
            raise ValueError("betas must be strictly increasing")
        alphas = 1.0 - b
        abar = np.concatenate([[1.0], np.cumprod(alphas)])
        abar.flags.writeable = False
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "_abar", abar)

    @property
    def steps(self) -> int:
        return self.betas.size

    def abar(self, t: int) -> float:
        if not 0 <= t <= self.steps:
            raise ValueError(f"timestep {t} outside [0, {self.steps}]")
        return float(self._abar[t])

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.steps:
            raise ValueError(f"timestep {t} outside [1, {self.steps}]")
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return 1.0 - self.beta(t)


def linear_schedule(steps: int = 64, beta_start: float | None = None,
                    beta_end: float | None = None) -> NoiseSchedule:
    """Linear betas; defaults rescale the classic 1000-step (1e-4, 0.02) range."""
    if steps < 1:
        raise ValueError("need at least one step")
    if beta_end is None:
        beta_end = min(20.0 / steps, 0.5)
    if beta_start is None:
        beta_start = min(0.1 / steps, beta_end / 10.0)
    return NoiseSchedule(np.linspace(beta_start, beta_end, steps))


def add_noise(z0: LatentVideo, t: int, eps: np.ndarray,
              schedule: NoiseSchedule) -> LatentVideo:
    """Forward process: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    if not 1 <= t <= schedule.steps:
        raise ValueError(f"timestep {t} outside [1, {schedule.steps}]")
    ab = schedule.abar(t)
    data = np.sqrt(ab) * z0.data + np.sqrt(1.0 - ab) * np.asarray(eps)
    return LatentVideo(data, frame_rate=z0.frame_rate)
