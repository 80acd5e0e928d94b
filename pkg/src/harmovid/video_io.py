"""PNG frame-directory I/O with sRGB transfer at the 8-bit boundary.

Videos are stored as `%05d.png` frame sequences. Color frames are converted
linear <-> sRGB (round-half-up quantization); masks are thresholded at byte
128 on read; alphas are stored as plain value/255 coverage.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .video import AlphaVideo, MaskVideo, VideoTensor

_FRAME_RE = re.compile(r"^(\d{5})\.png$")


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return np.where(s <= 0.04045, s / 12.92, np.power((s + 0.055) / 1.055, 2.4))


def _quantize(x: np.ndarray) -> np.ndarray:
    # round half up, not banker's rounding
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def frame_paths(directory) -> list:
    """Sorted frame paths; demands a gap-free 00000..N-1 sequence."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory {directory} does not exist")
    found = {}
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FileNotFoundError(f"no %05d.png frames in {directory}")
    count = max(found) + 1
    missing = sorted(set(range(count)) - set(found))
    if missing:
        raise FileNotFoundError(
            f"{directory}: missing frame {missing[0]:05d} of {count}"
        )
    return [found[i] for i in range(count)]


def _read_stack(directory, mode) -> np.ndarray:
    frames = []
    shape = None
    for p in frame_paths(directory):
        img = Image.open(p).convert(mode)
        arr = np.asarray(img)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValueError(
                f"{p}: frame size {arr.shape[:2]} differs from {shape[:2]}"
            )
        frames.append(arr)
    return np.stack(frames)


def write_video(directory, video: VideoTensor) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(video.shape[0]):
        data = _quantize(linear_to_srgb(video.data[t]))
        Image.fromarray(data, mode="RGB").save(directory / f"{t:05d}.png")


def read_video(directory, frame_rate: float = 8.0) -> VideoTensor:
    stack = _read_stack(directory, "RGB").astype(np.float64) / 255.0
    return VideoTensor(srgb_to_linear(stack), frame_rate=frame_rate)


def write_mask(directory, mask: MaskVideo) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(mask.shape[0]):
        data = (mask.data[t, ..., 0] * 255.0).astype(np.uint8)
        Image.fromarray(data, mode="L").save(directory / f"{t:05d}.png")


def read_mask(directory) -> MaskVideo:
    stack = _read_stack(directory, "L")
    return MaskVideo((stack >= 128).astype(np.float64)[..., None])


def write_alpha(directory, alpha: AlphaVideo) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(alpha.shape[0]):
        data = _quantize(alpha.data[t, ..., 0])
        Image.fromarray(data, mode="L").save(directory / f"{t:05d}.png")


def read_alpha(directory) -> AlphaVideo:
    stack = _read_stack(directory, "L").astype(np.float64) / 255.0
    return AlphaVideo(stack[..., None])
