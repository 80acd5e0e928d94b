"""The two stage networks plus a classical deflickering baseline.

The deflicker model conditions on a flickering composite and its mask; the
harmonizer conditions on a composite, the background plate, and a mask that
is binary for real-to-synthetic training samples and a soft pseudo-alpha for
synthetic-to-real samples (the asymmetric mask policy is enforced
structurally at sample construction).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion.codec import Codec
from .diffusion.denoiser import Adam, DenoiserConfig, DenoiserNet
from .diffusion.sampler import ConditioningLayout, sample
from .diffusion.schedule import NoiseSchedule, linear_schedule
from .diffusion.train import train_step
from .synth import (
    PATH_REAL_TO_SYNTH,
    PATH_SYNTH_TO_REAL,
    DEFAULT_FEATHER,
    DEFAULT_JITTER_AMPLITUDE,
    DEFAULT_LATTICE,
    PairedSample,
    make_flicker_video,
)
from .video import AlphaVideo, MaskVideo, VideoTensor, composite, pseudo_alpha
from .windows import plan_windows, sample_windowed

KIND_DEFLICKER = "deflicker"
KIND_HARMONIZER = "harmonizer"


def deflicker_layout(codec: Codec) -> ConditioningLayout:
    c = codec.latent_channels
    return ConditioningLayout((("noisy_target", c), ("flicker_input", c), ("mask", 1)))


def harmonizer_layout(codec: Codec) -> ConditioningLayout:
    c = codec.latent_channels
    return ConditioningLayout(
        (("noisy_target", c), ("composite_input", c), ("background", c), ("mask", 1))
    )


def _build_net(layout: ConditioningLayout, codec: Codec, width, blocks, heads,
               temb_dim, seed) -> DenoiserNet:
    cfg = DenoiserConfig(
        in_channels=layout.total_channels,
        out_channels=codec.latent_channels,
        width=width, blocks=blocks, heads=heads, temb_dim=temb_dim,
    )
    return DenoiserNet(cfg, seed=seed)


@dataclass
class DeflickerModel:
    """Conditional denoiser with layout [noisy_target, flicker_input, mask]."""

    net: DenoiserNet
    schedule: NoiseSchedule
    codec: Codec
    window: int = 16

    def __post_init__(self):
        expected = deflicker_layout(self.codec)
        if self.net.config.in_channels != expected.total_channels:
            raise ValueError("net input width does not match the deflicker layout")
        if self.net.config.out_channels != self.codec.latent_channels:
            raise ValueError("net output width does not match the codec")

    @property
    def layout(self) -> ConditioningLayout:
        return deflicker_layout(self.codec)

    @classmethod
    def create(cls, codec: Codec | None = None, schedule: NoiseSchedule | None = None,
               width: int = 128, blocks: int = 4, heads: int = 4,
               temb_dim: int = 64, window: int = 16, seed: int = 0):
        codec = codec or Codec()
        schedule = schedule or linear_schedule()
        net = _build_net(deflicker_layout(codec), codec, width, blocks, heads,
                         temb_dim, seed)
        return cls(net=net, schedule=schedule, codec=codec, window=window)


@dataclass
class HarmonizerModel:
    """Conditional denoiser with layout [noisy_target, composite, background, mask]."""

    net: DenoiserNet
    schedule: NoiseSchedule
    codec: Codec
    window: int = 16

    def __post_init__(self):
        expected = harmonizer_layout(self.codec)
        if self.net.config.in_channels != expected.total_channels:
            raise ValueError("net input width does not match the harmonizer layout")
        if self.net.config.out_channels != self.codec.latent_channels:
            raise ValueError("net output width does not match the codec")

    @property
    def layout(self) -> ConditioningLayout:
        return harmonizer_layout(self.codec)

    @classmethod
    def create(cls, codec: Codec | None = None, schedule: NoiseSchedule | None = None,
               width: int = 128, blocks: int = 4, heads: int = 4,
               temb_dim: int = 64, window: int = 16, seed: int = 0):
        codec = codec or Codec()
        schedule = schedule or linear_schedule()
        net = _build_net(harmonizer_layout(codec), codec, width, blocks, heads,
                         temb_dim, seed)
        return cls(net=net, schedule=schedule, codec=codec, window=window)


# ---------------------------------------------------------------------------
# Deflicker training data and inference


def build_deflicker_pair(real: VideoTensor, synth_fg: VideoTensor,
                         mask: MaskVideo, feather: int = DEFAULT_FEATHER) -> PairedSample:
    """Training pair: flickered foreground on the real background vs the real video."""
    inp = composite(synth_fg, real, mask)
    return PairedSample(
        input_composite=inp,
        target=real,
        mask=mask,
        alpha=pseudo_alpha(mask, feather),
        path_tag=PATH_SYNTH_TO_REAL,
        provenance={"kind": "deflicker_pair"},
    )


def deflicker_train_item(model: DeflickerModel, pair: PairedSample):
    cond = {
        "flicker_input": model.codec.encode(pair.input_composite).data,
        "mask": model.codec.mask_to_latent(pair.mask),
    }
    return cond, model.codec.encode(pair.target).data


def _run_sampler(net, cond, shape, schedule, layout, window, seed, mode):
    total = shape[0]
    if total > window:
        plan = plan_windows(total, window, max(1, window // 2))
        return sample_windowed(net, cond, shape, schedule, layout, plan,
                               mode=mode, seed=seed, clip_x0=True)
    return sample(net, cond, shape, schedule, layout, mode=mode, seed=seed,
                  clip_x0=True)


def deflicker(model: DeflickerModel, flickering: VideoTensor, mask,
              seed: int = 0, mode: str = "deterministic") -> VideoTensor:
    """Sample a temporally coherent version of a flickering video."""
    cond = {
        "flicker_input": model.codec.encode(flickering).data,
        "mask": model.codec.mask_to_latent(mask),
    }
    shape = cond["flicker_input"].shape
    latent = _run_sampler(model.net, cond, shape, model.schedule, model.layout,
                          model.window, seed, mode)
    out = model.codec.decode(latent)
    return VideoTensor(out.data, frame_rate=flickering.frame_rate)


def classical_deflicker(video: VideoTensor, mask: MaskVideo,
                        window: int = 3) -> VideoTensor:
    """Temporal moving average inside the mask; the general-purpose baseline.

    Averages pixel values over a truncated odd window, which removes color
    jitter but ghosts moving content (the spatial-detail loss the learned
    model avoids). Background pixels pass through untouched.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    half = window // 2
    t_count = video.shape[0]
    out = np.array(video.data, copy=True)
    sel = mask.as_bool()
    for t in range(t_count):
        lo = max(0, t - half)
        hi = min(t_count, t + half + 1)
        averaged = video.data[lo:hi].mean(axis=0)
        out[t][sel[t]] = averaged[sel[t]]
    return VideoTensor(out, frame_rate=video.frame_rate)


# ---------------------------------------------------------------------------
# Harmonizer training data and inference


@dataclass(frozen=True)
class HarmonizationScene:
    """All per-scene streams the dual-path batch builder draws from."""

    fg: VideoTensor
    bg_real: VideoTensor
    bg_synth: VideoTensor
    mask: MaskVideo
    alpha: AlphaVideo
    real: VideoTensor
    target_synth: VideoTensor | None = None
    bg_inpaint: VideoTensor | None = None


@dataclass(frozen=True)
class HarmonizationExample:
    """One training sample; construction enforces the asymmetric mask policy."""

    input_composite: VideoTensor
    background: VideoTensor
    target: VideoTensor
    cond_mask: object  # MaskVideo for real_to_synth, AlphaVideo for synth_to_real
    path_tag: str

    def __post_init__(self):
        values = self.cond_mask.data
        binary = bool(np.isin(values, (0.0, 1.0)).all())
        if self.path_tag == PATH_REAL_TO_SYNTH:
            if not binary:
                raise ValueError(
                    "mask policy violation: real_to_synth samples require a "
                    "strictly binary mask"
                )
        elif self.path_tag == PATH_SYNTH_TO_REAL:
            if binary:
                raise ValueError(
                    "mask policy violation: synth_to_real samples require a "
                    "feathered pseudo-alpha mask"
                )
        else:
            raise ValueError(f"unknown path tag {self.path_tag!r}")


@dataclass(frozen=True)
class TrainRecipe:
    iterations: int = 1200
    batch_size: int = 2
    learning_rate: float = 2e-3
    path_mix: float = 0.5  # fraction of synth_to_real samples per batch
    single_path: str | None = None  # "r2s" or "s2r" ablations

    def __post_init__(self):
        if not 0.0 <= self.path_mix <= 1.0:
            raise ValueError("path_mix must lie in [0, 1]")
        if self.single_path not in (None, "r2s", "s2r"):
            raise ValueError("single_path must be None, 'r2s', or 's2r'")


def _example_for(scene: HarmonizationScene, path: str) -> HarmonizationExample:
    if path == PATH_REAL_TO_SYNTH:
        return HarmonizationExample(
            input_composite=composite(scene.fg, scene.bg_synth, scene.mask),
            background=scene.bg_synth,
            target=scene.target_synth,
            cond_mask=scene.mask,
            path_tag=PATH_REAL_TO_SYNTH,
        )
    return HarmonizationExample(
        input_composite=composite(scene.target_synth, scene.bg_inpaint, scene.alpha),
        background=scene.bg_inpaint,
        target=scene.real,
        cond_mask=scene.alpha,
        path_tag=PATH_SYNTH_TO_REAL,
    )


def build_harmonization_batch(scenes, recipe: TrainRecipe, seed) -> list:
    """Draw one batch of path-mixed harmonization examples.

    ``seed`` may be an integer or a Generator; identical seeds produce
    identical batches.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r2s_pool = [s for s in scenes if s.target_synth is not None]
    s2r_pool = [s for s in scenes
                if s.target_synth is not None and s.bg_inpaint is not None]
    batch = []
    for _ in range(recipe.batch_size):
        if recipe.single_path == "r2s":
            want_s2r = False
        elif recipe.single_path == "s2r":
            want_s2r = True
        else:
            want_s2r = bool(rng.random() < recipe.path_mix)
        pool = s2r_pool if want_s2r else r2s_pool
        tag = PATH_SYNTH_TO_REAL if want_s2r else PATH_REAL_TO_SYNTH
        if not pool:
            raise ValueError(f"dataset has no {tag} samples")
        scene = pool[int(rng.integers(len(pool)))]
        batch.append(_example_for(scene, tag))
    return batch


def harmonization_train_item(model: HarmonizerModel, example: HarmonizationExample):
    cond = {
        "composite_input": model.codec.encode(example.input_composite).data,
        "background": model.codec.encode(example.background).data,
        "mask": model.codec.mask_to_latent(example.cond_mask),
    }
    return cond, model.codec.encode(example.target).data


def harmonize(model: HarmonizerModel, fg: VideoTensor, bg: VideoTensor, mask,
              seed: int = 0, mode: str = "deterministic") -> VideoTensor:
    """Composite fg over bg and sample a harmonized video.

    ``mask`` may be binary or a soft alpha. Sequences longer than the model
    window run through temporal MultiDiffusion automatically.
    """
    comp = composite(fg, bg, mask)
    cond = {
        "composite_input": model.codec.encode(comp).data,
        "background": model.codec.encode(bg).data,
        "mask": model.codec.mask_to_latent(mask),
    }
    shape = cond["composite_input"].shape
    latent = _run_sampler(model.net, cond, shape, model.schedule, model.layout,
                          model.window, seed, mode)
    out = model.codec.decode(latent)
    return VideoTensor(out.data, frame_rate=fg.frame_rate)


# ---------------------------------------------------------------------------
# Training loops


def fit_deflicker(model: DeflickerModel, scenes, recipe: TrainRecipe, seed: int = 0,
                  jitter_amplitude: float = DEFAULT_JITTER_AMPLITUDE,
                  lut_lattice: int = DEFAULT_LATTICE) -> np.ndarray:
    """Train the deflicker net on (real, mask) scenes with fresh flicker draws.

    Every batch item re-flickers its scene with a new per-frame LUT family,
    so the model sees a different jitter realization each time. Returns the
    per-iteration loss curve.
    """
    if not scenes:
        raise ValueError("need at least one (real, mask) scene")
    rng = np.random.default_rng(seed)
    opt = Adam(lr=recipe.learning_rate)
    losses = np.empty(recipe.iterations)
    for it in range(recipe.iterations):
        batch = []
        for _ in range(recipe.batch_size):
            real, mask = scenes[int(rng.integers(len(scenes)))]
            flick_seed = int(rng.integers(2**31 - 1))
            synth_fg = make_flicker_video(real, mask, flick_seed,
                                          lattice=lut_lattice,
                                          amplitude=jitter_amplitude)
            pair = build_deflicker_pair(real, synth_fg, mask)
            batch.append(deflicker_train_item(model, pair))
        losses[it] = train_step(model.net, opt, model.layout, model.schedule,
                                batch, rng)
    return losses


def fit_harmonizer(model: HarmonizerModel, scenes, recipe: TrainRecipe,
                   seed: int = 0) -> np.ndarray:
    """Train the harmonizer with the dual-path (or ablated) batch builder."""
    rng = np.random.default_rng(seed)
    opt = Adam(lr=recipe.learning_rate)
    losses = np.empty(recipe.iterations)
    for it in range(recipe.iterations):
        examples = build_harmonization_batch(scenes, recipe, rng)
        batch = [harmonization_train_item(model, ex) for ex in examples]
        losses[it] = train_step(model.net, opt, model.layout, model.schedule,
                                batch, rng)
    return losses
