"""Invertible latent codec: space-to-depth plus a fixed affine map.

Stands in for a learned video autoencoder so that every latent-space claim
can be checked exactly. There is no temporal compression (T' = T) and the
spatial patching is a pure rearrangement, so decode(encode(v)) returns v
exactly for inputs on the uniform-random dyadic grid (and any value >= 0.25);
the affine step is the only place floating point can round at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..video import AlphaVideo, MaskVideo, ShapeError, VideoTensor


@dataclass(frozen=True)
class LatentVideo:
    """Codec-space video [T, H/p, W/p, 3*p*p]; diffusion operates here."""

    data: np.ndarray
    frame_rate: float = 8.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", arr)
        if arr.ndim != 4:
            raise ShapeError(f"latent data must be [T, H', W', C], got {arr.shape}")

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class Codec:
    """Lossless space-to-depth codec with patch size ``patch``."""

    patch: int = 4

    @property
    def latent_channels(self) -> int:
        return 3 * self.patch * self.patch

    def encode(self, video: VideoTensor) -> LatentVideo:
        p = self.patch
        t, h, w, c = video.data.shape
        if h % p != 0 or w % p != 0:
            raise ShapeError(
                f"frame size {h}x{w} not divisible by codec patch size p={p}"
            )
        x = video.data.reshape(t, h // p, p, w // p, p, c)
        x = x.transpose(0, 1, 3, 2, 4, 5).reshape(t, h // p, w // p, p * p * c)
        return LatentVideo(2.0 * x - 1.0, frame_rate=video.frame_rate)

    def decode(self, latent: LatentVideo) -> VideoTensor:
        p = self.patch
        t, hp, wp, c = latent.data.shape
        if c != self.latent_channels:
            raise ShapeError(
                f"latent has {c} channels, codec with p={p} expects {self.latent_channels}"
            )
        x = np.clip((latent.data + 1.0) / 2.0, 0.0, 1.0)
        x = x.reshape(t, hp, wp, p, p, 3).transpose(0, 1, 3, 2, 4, 5)
        return VideoTensor(x.reshape(t, hp * p, wp * p, 3), frame_rate=latent.frame_rate)

    def mask_to_latent(self, mask) -> np.ndarray:
        """Average-pool a mask/alpha video to the latent grid; stays in [0, 1]."""
        if not isinstance(mask, (MaskVideo, AlphaVideo)):
            raise TypeError("mask must be a MaskVideo or AlphaVideo")
        p = self.patch
        t, h, w, _ = mask.data.shape
        if h % p != 0 or w % p != 0:
            raise ShapeError(
                f"mask size {h}x{w} not divisible by codec patch size p={p}"
            )
        pooled = mask.data[..., 0].reshape(t, h // p, p, w // p, p).mean(axis=(2, 4))
        return pooled[..., None]
