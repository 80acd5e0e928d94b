"""Latent-diffusion machinery: codec, schedule, denoiser, sampling, training."""

from .codec import Codec, LatentVideo
from .denoiser import Adam, DenoiserConfig, DenoiserNet, timestep_features
from .sampler import (
    SAMPLER_ANCESTRAL,
    SAMPLER_DETERMINISTIC,
    ConditioningLayout,
    LayoutError,
    apply_update,
    denoise_step,
    predict_x0,
    sample,
)
from .schedule import NoiseSchedule, add_noise, linear_schedule
from .train import TrainingDiverged, epsilon_loss, train_step

__all__ = [
    "Adam",
    "Codec",
    "ConditioningLayout",
    "DenoiserConfig",
    "DenoiserNet",
    "LatentVideo",
    "LayoutError",
    "NoiseSchedule",
    "SAMPLER_ANCESTRAL",
    "SAMPLER_DETERMINISTIC",
    "TrainingDiverged",
    "add_noise",
    "apply_update",
    "denoise_step",
    "epsilon_loss",
    "linear_schedule",
    "predict_x0",
    "sample",
    "timestep_features",
    "train_step",
]
