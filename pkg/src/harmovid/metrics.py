"""Evaluation metrics: paired quality, temporal consistency, boundary quality.

Learned perceptual/embedding backbones are replaced by fixed, seeded
surrogates (contrast-normalized multiscale distance; random-projection frame
embeddings) so every score is a deterministic function of its inputs. The
comparative orderings these metrics support are what the pipeline asserts,
not any absolute magnitudes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .flow import flow_video, luma, _resize_bilinear
from .video import MaskVideo, VideoTensor, _check_aligned, boundary_band

FRAME_SIM_SEED = 7
FRAME_SIM_DIM = 64
HIST_BINS = 16


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_WINDOW = _gaussian_kernel(7, 1.5)


def psnr(a: VideoTensor, b: VideoTensor) -> float:
    """Mean per-frame PSNR in dB; +inf when the inputs are identical."""
    _check_aligned("a", a.data, "b", b.data)
    vals = []
    for t in range(a.shape[0]):
        mse = float(np.mean((a.data[t] - b.data[t]) ** 2))
        vals.append(np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse))
    return float(np.mean(vals))


def rmse(a: VideoTensor, b: VideoTensor) -> float:
    _check_aligned("a", a.data, "b", b.data)
    vals = [float(np.sqrt(np.mean((a.data[t] - b.data[t]) ** 2)))
            for t in range(a.shape[0])]
    return float(np.mean(vals))


def ssim(a: VideoTensor, b: VideoTensor) -> float:
    """Mean structural similarity on luma, 7x7 Gaussian window."""
    _check_aligned("a", a.data, "b", b.data)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2

    def blur(img):
        return ndimage.correlate(img, _SSIM_WINDOW, mode="reflect")

    vals = []
    for t in range(a.shape[0]):
        x = luma(a.data[t])
        y = luma(b.data[t])
        mx, my = blur(x), blur(y)
        vx = blur(x * x) - mx * mx
        vy = blur(y * y) - my * my
        cxy = blur(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))


def _contrast_features(frame: np.ndarray):
    mean = ndimage.gaussian_filter(frame, 1.0, axes=(0, 1), mode="reflect")
    dev = frame - mean
    local_sd = np.sqrt(
        ndimage.gaussian_filter(dev * dev, 1.0, axes=(0, 1), mode="reflect")
    )
    return mean, dev / (local_sd + 1e-3)


def perceptual_dist(a: VideoTensor, b: VideoTensor, scales: int = 3) -> float:
    """Multiscale mean absolute difference of luminance and normalized contrast.

    Zero exactly when the inputs are equal, symmetric, and grows with
    perturbation strength; stands in for a learned perceptual distance.
    """
    _check_aligned("a", a.data, "b", b.data)
    total = 0.0
    for t in range(a.shape[0]):
        xa, xb = a.data[t], b.data[t]
        frame_dist = 0.0
        for s in range(scales):
            ma, ca = _contrast_features(xa)
            mb, cb = _contrast_features(xb)
            frame_dist += float(np.mean(np.abs(ma - mb)) + np.mean(np.abs(ca - cb)))
            if min(xa.shape[0], xa.shape[1]) >= 8 and s < scales - 1:
                xa = _resize_bilinear(xa, (xa.shape[0] // 2, xa.shape[1] // 2))
                xb = _resize_bilinear(xb, (xb.shape[0] // 2, xb.shape[1] // 2))
        total += frame_dist / scales
    return total / a.shape[0]


def _frame_embedding(frame: np.ndarray, projection: np.ndarray) -> np.ndarray:
    grid = _resize_bilinear(luma(frame), (8, 8)).ravel()
    grid = grid - grid.mean()
    hists = []
    for c in range(3):
        h, _ = np.histogram(frame[..., c], bins=HIST_BINS, range=(0.0, 1.0))
        hists.append(h / frame[..., c].size - 1.0 / HIST_BINS)
    feats = np.concatenate([grid] + hists)
    return feats @ projection


def frame_similarity(v: VideoTensor, seed: int = FRAME_SIM_SEED,
                     dim: int = FRAME_SIM_DIM) -> float:
    """Mean cosine similarity of consecutive frame embeddings.

    Embeddings are a fixed seeded random projection of the 8x8 downsampled
    (mean-removed) luma plus per-channel histogram deviations, so a static
    video scores 1.0 and independent-noise frames score near zero.
    """
    if v.shape[0] < 2:
        raise ValueError("frame similarity needs at least two frames")
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((64 + 3 * HIST_BINS, dim))
    embs = np.stack([_frame_embedding(v.data[t], projection)
                     for t in range(v.shape[0])])
    norms = np.linalg.norm(embs, axis=1)
    sims = []
    for t in range(v.shape[0] - 1):
        den = norms[t] * norms[t + 1]
        if den == 0.0:
            sims.append(1.0 if norms[t] == norms[t + 1] else 0.0)
        else:
            sims.append(float(embs[t] @ embs[t + 1] / den))
    return float(np.mean(sims))


def motion_preservation(out: VideoTensor, ref: VideoTensor,
                        region: MaskVideo | None = None) -> float:
    """Mean endpoint error between the flow fields of output and reference.

    When ``region`` is given the error is averaged over foreground pixels
    only (the deflicker-evaluation mode); frame pairs whose region is empty
    are skipped with a warning.
    """
    _check_aligned("out", out.data, "ref", ref.data)
    f_out = flow_video(out)
    f_ref = flow_video(ref)
    epe = np.sqrt(((f_out - f_ref) ** 2).sum(axis=-1))
    vals = []
    for t in range(epe.shape[0]):
        if region is not None:
            sel = region.as_bool()[t]
            if not sel.any():
                warnings.warn(f"frame pair {t}: empty region, skipped")
                continue
            vals.append(float(epe[t][sel].mean()))
        else:
            vals.append(float(epe[t].mean()))
    if not vals:
        raise ValueError("all frame pairs had empty regions")
    return float(np.mean(vals))


_LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def boundary_quality(v: VideoTensor, mask: MaskVideo, inner: int = 1,
                     outer: int = 1):
    """Reference-free sharpness in the mask's boundary band.

    Returns (laplacian_var, tenengrad): the variance of the 4-neighbor
    Laplacian response and the mean squared Sobel gradient magnitude over
    band pixels, averaged across frames with a nonempty band.
    """
    _check_aligned("v", v.data, "mask", mask.data)
    band = boundary_band(mask, inner, outer).as_bool()
    lap_vals = []
    ten_vals = []
    for t in range(v.shape[0]):
        sel = band[t]
        if not sel.any():
            continue
        y = luma(v.data[t])
        lap = ndimage.correlate(y, _LAPLACIAN, mode="reflect")
        gx = ndimage.correlate(y, _SOBEL_X, mode="reflect")
        gy = ndimage.correlate(y, _SOBEL_X.T, mode="reflect")
        lap_vals.append(float(lap[sel].var()))
        ten_vals.append(float((gx[sel] ** 2 + gy[sel] ** 2).mean()))
    if not lap_vals:
        raise ValueError("boundary band is empty on every frame")
    return float(np.mean(lap_vals)), float(np.mean(ten_vals))


REPORT_FIELDS = ("psnr", "ssim", "perceptual", "rmse", "frame_sim",
                 "motion_pres", "laplacian_var", "tenengrad")


@dataclass
class MetricReport:
    """Scalar metric summary with optional per-frame populations."""

    psnr: float | None = None
    ssim: float | None = None
    perceptual: float | None = None
    rmse: float | None = None
    frame_sim: float | None = None
    motion_pres: float | None = None
    laplacian_var: float | None = None
    tenengrad: float | None = None
    per_frame: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {}
        for name in REPORT_FIELDS:
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        if self.per_frame:
            d["per_frame"] = {k: list(map(float, v))
                              for k, v in self.per_frame.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        kwargs = {k: d.get(k) for k in REPORT_FIELDS}
        return cls(per_frame=d.get("per_frame", {}), **kwargs)


def evaluate_pair(pred: VideoTensor, ref: VideoTensor | None = None,
                  mask: MaskVideo | None = None, band_inner: int = 1,
                  band_outer: int = 1, frame_sim_seed: int = FRAME_SIM_SEED,
                  region_restricted: bool = False) -> MetricReport:
    """Compute every applicable metric for a prediction.

    Reference metrics require ``ref``; boundary metrics require ``mask``.
    ``region_restricted`` switches motion preservation to foreground-only.
    """
    report = MetricReport()
    if pred.shape[0] >= 2:
        report.frame_sim = frame_similarity(pred, seed=frame_sim_seed)
    if ref is not None:
        report.psnr = psnr(pred, ref)
        report.ssim = ssim(pred, ref)
        report.perceptual = perceptual_dist(pred, ref)
        report.rmse = rmse(pred, ref)
        if pred.shape[0] >= 2:
            region = mask if (mask is not None and region_restricted) else None
            report.motion_pres = motion_preservation(pred, ref, region=region)
        per_psnr = []
        per_rmse = []
        for t in range(pred.shape[0]):
            mse = float(np.mean((pred.data[t] - ref.data[t]) ** 2))
            per_psnr.append(np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse))
            per_rmse.append(float(np.sqrt(mse)))
        report.per_frame["psnr"] = per_psnr
        report.per_frame["rmse"] = per_rmse
    if mask is not None:
        try:
            report.laplacian_var, report.tenengrad = boundary_quality(
                pred, mask, band_inner, band_outer)
        except ValueError:
            pass
    return report
