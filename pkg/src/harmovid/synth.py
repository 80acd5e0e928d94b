"""Procedural scene rendering and paired-data synthesis.

Generates foreground/background videos with controllable lighting, applies
3D LUT relighting (consistent per video, or per frame to simulate flicker),
runs a deterministic per-frame harmonization oracle, and fills foreground
holes by diffusion inpainting. Everything is a pure function of its inputs
and seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from .video import (
    AlphaVideo,
    MaskVideo,
    ShapeError,
    VideoTensor,
    _check_aligned,
    composite,
    dilate,
    pseudo_alpha,
)

PATH_REAL_TO_SYNTH = "real_to_synth"
PATH_SYNTH_TO_REAL = "synth_to_real"

DEFAULT_LATTICE = 5
DEFAULT_JITTER_AMPLITUDE = 0.15
DEFAULT_FEATHER = 2


# ---------------------------------------------------------------------------
# 3D LUTs


@dataclass(frozen=True)
class Lut3d:
    """Cubic color lattice [N, N, N, 3]; colors map through trilinear interpolation."""

    lattice: np.ndarray

    def __post_init__(self):
        lat = np.array(self.lattice, dtype=np.float64, copy=True)
        lat.flags.writeable = False
        object.__setattr__(self, "lattice", lat)
        if lat.ndim != 4 or lat.shape[3] != 3 or len(set(lat.shape[:3])) != 1:
            raise ShapeError(f"LUT lattice must be [N, N, N, 3], got {lat.shape}")
        if lat.shape[0] < 2:
            raise ValueError("LUT lattice needs N >= 2")
        if lat.min() < 0.0 or lat.max() > 1.0:
            raise ValueError("LUT lattice entries must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.lattice.shape[0]


def identity_lut(n: int = DEFAULT_LATTICE) -> Lut3d:
    axis = np.linspace(0.0, 1.0, n)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return Lut3d(np.stack([r, g, b], axis=-1))


def jitter_lut(rng: np.random.Generator, n: int = DEFAULT_LATTICE,
               amplitude: float = DEFAULT_JITTER_AMPLITUDE) -> Lut3d:
    """Identity lattice perturbed by uniform noise; the flicker primitive."""
    lat = identity_lut(n).lattice + rng.uniform(-amplitude, amplitude, (n, n, n, 3))
    return Lut3d(np.clip(lat, 0.0, 1.0))


def grade_lut(rng: np.random.Generator, n: int = DEFAULT_LATTICE,
              gain=(0.85, 1.6), gamma=(0.75, 1.3), lift=(-0.08, 0.08)) -> Lut3d:
    """Smooth color grade: per-channel gain/gamma/lift baked into a lattice.

    Stands in for the expressive relighting transforms applied to whole
    videos; biased toward contrast-expanding grades.
    """
    g = rng.uniform(*gain, 3)
    y = rng.uniform(*gamma, 3)
    o = rng.uniform(*lift, 3)
    lat = identity_lut(n).lattice
    graded = g * np.power(lat, y) + o
    return Lut3d(np.clip(graded, 0.0, 1.0))


def _trilinear(lattice: np.ndarray, colors: np.ndarray) -> np.ndarray:
    n = lattice.shape[0]
    c = colors * (n - 1)
    i0 = np.clip(np.floor(c).astype(np.int64), 0, n - 2)
    f = c - i0
    r0, g0, b0 = i0[..., 0], i0[..., 1], i0[..., 2]
    out = np.zeros_like(colors)
    for dr in (0, 1):
        wr = f[..., 0:1] if dr else 1.0 - f[..., 0:1]
        for dg in (0, 1):
            wg = f[..., 1:2] if dg else 1.0 - f[..., 1:2]
            for db in (0, 1):
                wb = f[..., 2:3] if db else 1.0 - f[..., 2:3]
                out += wr * wg * wb * lattice[r0 + dr, g0 + dg, b0 + db]
    return out


def apply_lut(video: VideoTensor, lut: Lut3d) -> VideoTensor:
    """Map every pixel color through the LUT lattice (trilinear)."""
    out = _trilinear(lut.lattice, video.data)
    return VideoTensor(np.clip(out, 0.0, 1.0), frame_rate=video.frame_rate)


# ---------------------------------------------------------------------------
# Scene specification and renderer


@dataclass(frozen=True)
class LightSpec:
    direction: tuple  # unit 2-vector (dy, dx), image-plane light azimuth
    intensity: float
    color: tuple  # RGB triple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        norm = float(np.hypot(*d))
        if norm == 0.0:
            raise ValueError("light direction must be a nonzero 2-vector")
        object.__setattr__(self, "direction", tuple((d / norm).tolist()))
        if self.intensity < 0.0:
            raise ValueError("light intensity must be >= 0")
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))


@dataclass(frozen=True)
class MotionSpec:
    start: tuple  # (y, x) pixels
    velocity: tuple  # (dy, dx) pixels/frame

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    frames: int
    size: tuple  # (H, W)
    fg_motion: MotionSpec
    light: LightSpec
    shadow_opacity: float

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if not 0.0 <= self.shadow_opacity <= 1.0:
            raise ValueError("shadow_opacity must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            seed=int(d["seed"]),
            frames=int(d["frames"]),
            size=tuple(d["size"]),
            fg_motion=MotionSpec(tuple(d["fg_motion"]["start"]),
                                 tuple(d["fg_motion"]["velocity"])),
            light=LightSpec(tuple(d["light"]["direction"]),
                            float(d["light"]["intensity"]),
                            tuple(d["light"]["color"])),
            shadow_opacity=float(d["shadow_opacity"]),
        )


def random_scene_spec(rng: np.random.Generator, frames: int, size) -> SceneSpec:
    h, w = size
    angle = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(0.6, 1.6)
    motion_angle = rng.uniform(0.0, 2.0 * np.pi)
    return SceneSpec(
        seed=int(rng.integers(0, 2**31 - 1)),
        frames=frames,
        size=(h, w),
        fg_motion=MotionSpec(
            start=(rng.uniform(0.3 * h, 0.7 * h), rng.uniform(0.3 * w, 0.7 * w)),
            velocity=(speed * np.sin(motion_angle), speed * np.cos(motion_angle)),
        ),
        light=LightSpec(
            direction=(np.sin(angle), np.cos(angle)),
            intensity=rng.uniform(0.6, 1.2),
            color=tuple(rng.uniform(0.7, 1.0, 3).tolist()),
        ),
        shadow_opacity=rng.uniform(0.25, 0.5),
    )


def _value_noise(rng, grid: int, shape) -> np.ndarray:
    """Smooth noise field in [0, 1]: coarse uniform grid, bilinear upsample."""
    coarse = rng.random((grid, grid))
    yy = np.linspace(0, grid - 1, shape[0])
    xx = np.linspace(0, grid - 1, shape[1])
    y0 = np.clip(np.floor(yy).astype(int), 0, grid - 2)
    x0 = np.clip(np.floor(xx).astype(int), 0, grid - 2)
    fy = (yy - y0)[:, None]
    fx = (xx - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
            + c10 * fy * (1 - fx) + c11 * fy * fx)


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.full_like(x, (lo + hi) / 2.0)
    period = 2.0 * (hi - lo)
    y = np.mod(x - lo, period)
    return lo + np.minimum(y, period - y)


def render_scene(spec: SceneSpec):
    """Render (fg, bg, mask) for a sprite-over-gradient scene.

    The sprite is a textured ellipse with a baked normal map shaded by
    ambient 0.2 + intensity * max(0, n . light) * light color; the background
    is a static gradient field lit by the same light, with the sprite's soft
    cast shadow multiplied in per frame.
    """
    h, w = spec.size
    if h < 8 or w < 8:
        raise ShapeError(f"degenerate scene size {spec.size}; need at least 8x8")
    t_count = spec.frames
    rng = np.random.default_rng(spec.seed)

    ry = rng.uniform(h / 6.0, h / 3.2)
    rx = rng.uniform(w / 6.0, w / 3.2)
    albedo_base = rng.uniform(0.35, 0.85, 3)
    texture_grid = rng.random((4, 4, 3))
    bg_base = rng.uniform(0.3, 0.8, 3)
    bg_noise = _value_noise(rng, 5, (h, w))[..., None]
    shadow_shift = rng.uniform(0.5, 0.9) * (ry + rx) / 2.0

    ly, lx = spec.light.direction
    intensity = spec.light.intensity
    lcolor = np.asarray(spec.light.color)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # static lit background: brightness ramps along the light direction
    ramp = (yy / (h - 1) - 0.5) * ly + (xx / (w - 1) - 0.5) * lx + 0.5
    illum = 0.2 + intensity * lcolor * (0.25 + 0.75 * np.clip(ramp, 0, 1))[..., None]
    bg_static = np.clip(bg_base * illum + 0.08 * (bg_noise - 0.5), 0.0, 1.0)

    # per-frame sprite positions, reflected off the frame borders
    steps = np.arange(t_count, dtype=np.float64)
    cy = _reflect(spec.fg_motion.start[0] + steps * spec.fg_motion.velocity[0],
                  ry + 1.0, h - 2.0 - ry)
    cx = _reflect(spec.fg_motion.start[1] + steps * spec.fg_motion.velocity[1],
                  rx + 1.0, w - 2.0 - rx)

    fg = np.zeros((t_count, h, w, 3))
    bg = np.zeros((t_count, h, w, 3))
    mask = np.zeros((t_count, h, w, 1))

    for t in range(t_count):
        ny = (yy - cy[t]) / ry
        nx = (xx - cx[t]) / rx
        rho2 = ny * ny + nx * nx
        inside = rho2 <= 1.0
        mask[t, ..., 0] = inside

        # sprite-local texture so the pattern travels with the sprite
        u = np.clip((ny + 1.0) * 1.5, 0.0, 2.999)
        v = np.clip((nx + 1.0) * 1.5, 0.0, 2.999)
        u0 = u.astype(int)
        v0 = v.astype(int)
        fu = (u - u0)[..., None]
        fv = (v - v0)[..., None]
        tex = (texture_grid[u0, v0] * (1 - fu) * (1 - fv)
               + texture_grid[u0, v0 + 1] * (1 - fu) * fv
               + texture_grid[u0 + 1, v0] * fu * (1 - fv)
               + texture_grid[u0 + 1, v0 + 1] * fu * fv)
        albedo = np.clip(albedo_base + 0.5 * (tex - 0.5), 0.05, 1.0)

        lambert = np.maximum(0.0, ny * ly + nx * lx)
        shading = 0.2 + intensity * lambert[..., None] * lcolor
        fg[t] = np.where(inside[..., None], np.clip(albedo * shading, 0.0, 1.0), 0.0)

        # soft cast shadow displaced away from the light
        sy = cy[t] - shadow_shift * ly
        sx = cx[t] - shadow_shift * lx
        srho2 = ((yy - sy) / ry) ** 2 + ((xx - sx) / rx) ** 2
        shadow_core = srho2 <= 1.0
        if spec.shadow_opacity > 0.0 and shadow_core.any():
            d_out = ndimage.distance_transform_edt(~shadow_core)
            soft = np.clip(1.0 - d_out / 3.0, 0.0, 1.0)
            bg[t] = bg_static * (1.0 - spec.shadow_opacity * soft[..., None])
        else:
            bg[t] = bg_static

    return (
        VideoTensor(fg),
        VideoTensor(np.clip(bg, 0.0, 1.0)),
        MaskVideo(mask),
    )


# ---------------------------------------------------------------------------
# Paired samples


@dataclass(frozen=True)
class PairedSample:
    """One training/evaluation pair: perturbed composite plus clean target."""

    input_composite: VideoTensor
    target: VideoTensor
    mask: MaskVideo
    alpha: AlphaVideo
    path_tag: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.path_tag not in (PATH_REAL_TO_SYNTH, PATH_SYNTH_TO_REAL):
            raise ValueError(f"unknown path tag {self.path_tag!r}")
        for name, member in (("target", self.target), ("mask", self.mask),
                             ("alpha", self.alpha)):
            if member.shape[:3] != self.input_composite.shape[:3]:
                raise ShapeError(f"{name} does not align with input_composite")


def make_single_lut_pair(video: VideoTensor, mask: MaskVideo, seed: int,
                         feather: int = DEFAULT_FEATHER,
                         lattice: int = DEFAULT_LATTICE,
                         lut: Lut3d | None = None) -> PairedSample:
    """Evaluation pair: one consistent random grade LUT on the foreground.

    The same LUT recolors every frame's foreground, so the pair carries no
    temporal perturbation; the untouched video is the ground-truth target.
    Pass ``lut`` to pin the transform instead of drawing one from the seed.
    """
    if lut is None:
        rng = np.random.default_rng(seed)
        lut = grade_lut(rng, n=lattice)
    recolored = apply_lut(video, lut)
    inp = composite(recolored, video, mask)
    return PairedSample(
        input_composite=inp,
        target=video,
        mask=mask,
        alpha=pseudo_alpha(mask, feather),
        path_tag=PATH_SYNTH_TO_REAL,
        provenance={"kind": "single_lut", "seed": int(seed),
                    "lut": lut.lattice.tolist()},
    )


def make_flicker_video(video: VideoTensor, mask: MaskVideo, seed: int,
                       lattice: int = DEFAULT_LATTICE,
                       amplitude: float = DEFAULT_JITTER_AMPLITUDE) -> VideoTensor:
    """Recolor the foreground with an independent jitter LUT per frame.

    Simulates frame-to-frame lighting flicker; background pixels are returned
    bit-equal to the input.
    """
    rng = np.random.default_rng(seed)
    frames = np.empty_like(video.data)
    m = mask.data
    for t in range(video.shape[0]):
        lut = jitter_lut(rng, n=lattice, amplitude=amplitude)
        recolored = np.clip(_trilinear(lut.lattice, video.data[t]), 0.0, 1.0)
        frames[t] = m[t] * recolored + (1.0 - m[t]) * video.data[t]
    return VideoTensor(frames, frame_rate=video.frame_rate)


# ---------------------------------------------------------------------------
# Per-frame harmonization oracle and inpainting


def per_frame_harmonize(fg: VideoTensor, bg: VideoTensor, mask: MaskVideo,
                        blend: float = 0.8, context_radius: int = 3) -> VideoTensor:
    """Frame-independent moment matching of the foreground to its surroundings.

    Each frame's foreground mean/std is pulled toward the statistics of the
    background ring just outside the mask (whole frame if the ring is empty),
    then composited. Frames are processed independently on purpose: the
    jitter of the per-frame statistics is what downstream deflickering
    repairs. Empty-mask frames pass through as plain composites.
    """
    _check_aligned("fg", fg.data, "bg", bg.data)
    _check_aligned("fg", fg.data, "mask", mask.data)
    out = np.empty_like(fg.data)
    ring = (dilate(mask, context_radius).data - mask.data)[..., 0] > 0.5
    sel_all = mask.as_bool()
    for t in range(fg.shape[0]):
        sel = sel_all[t]
        if not sel.any():
            out[t] = bg.data[t]
            continue
        ctx = ring[t] if ring[t].any() else np.ones_like(ring[t])
        f = fg.data[t]
        mu_f = f[sel].mean(axis=0)
        sd_f = f[sel].std(axis=0)
        ctx_px = bg.data[t][ctx]
        mu_b = ctx_px.mean(axis=0)
        sd_b = ctx_px.std(axis=0)
        scale = np.where(sd_f > 1e-6, 1.0 + blend * (sd_b / np.maximum(sd_f, 1e-6) - 1.0), 1.0)
        adjusted = (f - mu_f) * scale + mu_f + blend * (mu_b - mu_f)
        adjusted = np.clip(adjusted, 0.0, 1.0)
        m = mask.data[t]
        out[t] = m * adjusted + (1.0 - m) * bg.data[t]
    return VideoTensor(out, frame_rate=fg.frame_rate)


def inpaint_remove(video: VideoTensor, mask: MaskVideo,
                   tol: float = 1e-4, max_iter: int = 20000) -> VideoTensor:
    """Fill masked pixels by repeated 4-neighbor averaging (diffusion fill).

    Unmasked pixels are returned bit-equal; filled values obey the maximum
    principle (they stay within the range of each frame's unmasked pixels).
    """
    _check_aligned("video", video.data, "mask", mask.data)
    out = np.array(video.data, copy=True)
    holes = mask.as_bool()
    for t in range(video.shape[0]):
        hole = holes[t]
        if not hole.any():
            continue
        frame = out[t]
        if hole.all():
            border = np.concatenate([frame[0], frame[-1], frame[:, 0], frame[:, -1]])
            warnings.warn(f"frame {t}: mask covers everything; filling with border mean")
            frame[:] = border.mean(axis=0)
            continue
        frame[hole] = frame[~hole].mean(axis=0)
        for _ in range(max_iter):
            padded = np.pad(frame, ((1, 1), (1, 1), (0, 0)), mode="edge")
            neighbor_mean = (padded[:-2, 1:-1] + padded[2:, 1:-1]
                             + padded[1:-1, :-2] + padded[1:-1, 2:]) / 4.0
            delta = np.abs(neighbor_mean[hole] - frame[hole]).max()
            frame[hole] = neighbor_mean[hole]
            if delta < tol:
                break
    return VideoTensor(out, frame_rate=video.frame_rate)
