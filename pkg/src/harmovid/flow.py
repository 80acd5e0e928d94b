"""Coarse-to-fine local least-squares optical flow (pyramidal Lucas-Kanade).

A classical substitute for a learned flow network: good enough to recover
small translations to sub-pixel accuracy, which is all the motion metrics
need. Frames are contrast-normalized first so global brightness changes do
not register as motion.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .video import VideoTensor

LUMA = np.array([0.2126, 0.7152, 0.0722])


def luma(frame: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of an [H, W, 3] frame."""
    return frame @ LUMA


def _standardize(img: np.ndarray) -> np.ndarray:
    sd = img.std()
    if sd < 1e-8:
        return img - img.mean()
    return (img - img.mean()) / sd


def _resize_bilinear(img: np.ndarray, shape) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.linspace(0, h - 1, shape[0])
    xs = np.linspace(0, w - 1, shape[1])
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2) if h > 1 else np.zeros(len(ys), int)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2) if w > 1 else np.zeros(len(xs), int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    return (img[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
            + img[np.ix_(y0, x1)] * (1 - fy) * fx
            + img[np.ix_(y1, x0)] * fy * (1 - fx)
            + img[np.ix_(y1, x1)] * fy * fx)


def _downsample(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(img, 1.0, mode="reflect")[::2, ::2]


def _warp(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sy = np.clip(yy + flow[..., 1], 0, h - 1)
    sx = np.clip(xx + flow[..., 0], 0, w - 1)
    return ndimage.map_coordinates(img, [sy, sx], order=1, mode="nearest")


def estimate_flow(frame_a: np.ndarray, frame_b: np.ndarray, levels: int = 3,
                  window: int = 5, iterations: int = 3) -> np.ndarray:
    """Dense (dx, dy) displacement field from frame_a to frame_b.

    Both frames are [H, W, 3] linear RGB (or [H, W] grayscale). Returns an
    [H, W, 2] field.
    """
    a = frame_a if frame_a.ndim == 2 else luma(frame_a)
    b = frame_b if frame_b.ndim == 2 else luma(frame_b)
    pyr_a = [_standardize(a)]
    pyr_b = [_standardize(b)]
    for _ in range(levels - 1):
        if min(pyr_a[-1].shape) < 8:
            break
        pyr_a.append(_downsample(pyr_a[-1]))
        pyr_b.append(_downsample(pyr_b[-1]))

    flow = np.zeros(pyr_a[-1].shape + (2,))
    reg = 1e-3
    for level in range(len(pyr_a) - 1, -1, -1):
        ia, ib = pyr_a[level], pyr_b[level]
        if flow.shape[:2] != ia.shape:
            flow = _resize_bilinear(flow * 2.0, ia.shape)
        for _ in range(iterations):
            warped = _warp(ib, flow)
            gy, gx = np.gradient(ia)
            it = warped - ia
            sxx = ndimage.uniform_filter(gx * gx, window, mode="nearest") + reg
            syy = ndimage.uniform_filter(gy * gy, window, mode="nearest") + reg
            sxy = ndimage.uniform_filter(gx * gy, window, mode="nearest")
            sxt = ndimage.uniform_filter(gx * it, window, mode="nearest")
            syt = ndimage.uniform_filter(gy * it, window, mode="nearest")
            det = sxx * syy - sxy * sxy
            du = (-syy * sxt + sxy * syt) / det
            dv = (sxy * sxt - sxx * syt) / det
            step = np.clip(np.stack([du, dv], axis=-1), -2.0, 2.0)
            flow = flow + step
    return flow


def flow_video(video: VideoTensor, **kwargs) -> np.ndarray:
    """Flow fields for every consecutive frame pair: [T-1, H, W, 2]."""
    t, h, w, _ = video.shape
    if t < 2:
        raise ValueError("need at least two frames for flow")
    out = np.empty((t - 1, h, w, 2))
    for i in range(t - 1):
        out[i] = estimate_flow(video.data[i], video.data[i + 1], **kwargs)
    return out
