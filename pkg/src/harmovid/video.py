"""Video/mask/alpha containers and the compositing + morphology primitives.

All pixel data is linear-light float64 in [0, 1], shaped [T, H, W, C].
Masks are strictly binary, alphas are soft coverage in [0, 1]; both carry a
trailing singleton channel so they broadcast against RGB video.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class ShapeError(ValueError):
    """Raised when paired inputs disagree on a named axis."""


_AXIS_NAMES = ("frame axis T", "height axis H", "width axis W")


def _check_aligned(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    for i, axis in enumerate(_AXIS_NAMES):
        if a.shape[i] != b.shape[i]:
            raise ShapeError(
                f"{axis} mismatch: {name_a} has {a.shape[i]}, {name_b} has {b.shape[i]}"
            )


def _freeze(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VideoTensor:
    """A [T, H, W, 3] stack of linear-light RGB frames with values in [0, 1]."""

    data: np.ndarray
    frame_rate: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        d = self.data
        if d.ndim != 4 or d.shape[3] != 3:
            raise ShapeError(f"video data must be [T, H, W, 3], got {d.shape}")
        t, h, w, _ = d.shape
        if t < 1:
            raise ShapeError("video needs at least one frame")
        if h < 8 or w < 8:
            raise ShapeError(f"frames must be at least 8x8, got {h}x{w}")
        if not np.isfinite(d).all():
            raise ValueError("video contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("video values must lie in [0, 1]")

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class MaskVideo:
    """A [T, H, W, 1] strictly-binary foreground occupancy video."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        d = self.data
        if d.ndim != 4 or d.shape[3] != 1:
            raise ShapeError(f"mask data must be [T, H, W, 1], got {d.shape}")
        if not np.isin(d, (0.0, 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")

    @property
    def shape(self):
        return self.data.shape

    def as_bool(self) -> np.ndarray:
        return self.data[..., 0] > 0.5


@dataclass(frozen=True)
class AlphaVideo:
    """A [T, H, W, 1] soft foreground coverage video with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data))
        d = self.data
        if d.ndim != 4 or d.shape[3] != 1:
            raise ShapeError(f"alpha data must be [T, H, W, 1], got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("alpha contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("alpha values must lie in [0, 1]")

    @property
    def shape(self):
        return self.data.shape


def composite(fg: VideoTensor, bg: VideoTensor, mask) -> VideoTensor:
    """Blend fg over bg: out = mask * fg + (1 - mask) * bg, clamped to [0, 1].

    ``mask`` may be a MaskVideo (hard cut) or AlphaVideo (feathered blend).
    """
    _check_aligned("fg", fg.data, "bg", bg.data)
    _check_aligned("fg", fg.data, "mask", mask.data)
    m = mask.data
    # mask values of exactly 0 or 1 pass pixels through bit-for-bit
    out = m * fg.data + (1.0 - m) * bg.data
    np.clip(out, 0.0, 1.0, out=out)
    return VideoTensor(out, frame_rate=fg.frame_rate)


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def erode(mask: MaskVideo, radius: int) -> MaskVideo:
    """Per-frame binary erosion with a (2r+1)-square element; outside counts as 0."""
    radius = _check_radius(radius)
    if radius == 0:
        return MaskVideo(mask.data)
    elem = _square(radius)
    frames = [
        ndimage.binary_erosion(f, structure=elem, border_value=0)
        for f in mask.as_bool()
    ]
    return MaskVideo(np.stack(frames)[..., None].astype(np.float64))


def dilate(mask: MaskVideo, radius: int) -> MaskVideo:
    """Per-frame binary dilation with a (2r+1)-square element; outside counts as 0."""
    radius = _check_radius(radius)
    if radius == 0:
        return MaskVideo(mask.data)
    elem = _square(radius)
    frames = [
        ndimage.binary_dilation(f, structure=elem, border_value=0)
        for f in mask.as_bool()
    ]
    return MaskVideo(np.stack(frames)[..., None].astype(np.float64))


def _check_radius(radius) -> int:
    r = int(radius)
    if r != radius or r < 0:
        raise ValueError(f"radius must be a non-negative integer, got {radius!r}")
    return r


def boundary_band(mask: MaskVideo, inner: int, outer: int) -> MaskVideo:
    """Narrow band around the mask edge: dilate(mask, outer) AND NOT erode(mask, inner)."""
    if inner < 1 or outer < 1:
        raise ValueError("inner and outer radii must be >= 1")
    grown = dilate(mask, outer).as_bool()
    shrunk = erode(mask, inner).as_bool()
    band = grown & ~shrunk
    return MaskVideo(band[..., None].astype(np.float64))


def pseudo_alpha(mask: MaskVideo, feather: int) -> AlphaVideo:
    """Feather a binary mask into a soft alpha with a linear distance ramp.

    Uses the per-frame signed distance to the mask boundary (positive inside,
    boundary taken to lie between pixels) and maps it through
    alpha = clamp(0.5 + d / (2 * feather), 0, 1). Pixels farther than the
    feather radius from the boundary keep their binary value.
    """
    if feather < 1:
        raise ValueError("feather must be >= 1")
    alphas = np.empty_like(mask.data)
    for t, frame in enumerate(mask.as_bool()):
        if frame.all() or not frame.any():
            alphas[t, ..., 0] = frame.astype(np.float64)
            continue
        d_in = ndimage.distance_transform_edt(frame)
        d_out = ndimage.distance_transform_edt(~frame)
        signed = np.where(frame, d_in - 0.5, -(d_out - 0.5))
        alphas[t, ..., 0] = np.clip(0.5 + signed / (2.0 * feather), 0.0, 1.0)
    return AlphaVideo(alphas)
