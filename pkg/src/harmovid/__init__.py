"""Relightable video harmonization toolkit.

Three-stage pipeline at desk scale: per-frame harmonized pseudo-pairs with
controllable LUT relighting, a diffusion deflickering model that repairs
their temporal jitter, and a dual-path video harmonization model with
asymmetric binary / pseudo-alpha mask conditioning, plus the evaluation
metric battery and temporal MultiDiffusion for long clips.
"""

from .video import (
    AlphaVideo,
    MaskVideo,
    ShapeError,
    VideoTensor,
    boundary_band,
    composite,
    dilate,
    erode,
    pseudo_alpha,
)
from .synth import (
    Lut3d,
    PairedSample,
    SceneSpec,
    apply_lut,
    grade_lut,
    identity_lut,
    inpaint_remove,
    jitter_lut,
    make_flicker_video,
    make_single_lut_pair,
    per_frame_harmonize,
    random_scene_spec,
    render_scene,
)
from .diffusion import (
    Codec,
    ConditioningLayout,
    DenoiserConfig,
    DenoiserNet,
    LatentVideo,
    NoiseSchedule,
    add_noise,
    denoise_step,
    linear_schedule,
    sample,
)
from .models import (
    DeflickerModel,
    HarmonizationExample,
    HarmonizationScene,
    HarmonizerModel,
    TrainRecipe,
    build_deflicker_pair,
    build_harmonization_batch,
    classical_deflicker,
    deflicker,
    fit_deflicker,
    fit_harmonizer,
    harmonize,
)
from .windows import WindowPlan, fused_denoise_step, plan_windows, sample_windowed
from .metrics import (
    MetricReport,
    boundary_quality,
    evaluate_pair,
    frame_similarity,
    motion_preservation,
    perceptual_dist,
    psnr,
    rmse,
    ssim,
)
from .flow import estimate_flow, flow_video
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig

__version__ = "0.1.0"
