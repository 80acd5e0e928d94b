"""End-to-end pipeline stages behind the CLI.

Every stage is a deterministic function of (config, seed): all randomness is
drawn from seeds derived off the config seed, artifacts are written as PNG
frame directories / JSON / checkpoints with stable bytes, and each stage
appends a RunManifest to the run ledger. Wall-clock timing lives only in
manifests, never in artifacts.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import MetricsConfig, PipelineConfig, RunManifest
from .diffusion import Codec
from .metrics import MetricReport, evaluate_pair, frame_similarity
from .models import (
    DeflickerModel,
    HarmonizationScene,
    HarmonizerModel,
    deflicker,
    fit_deflicker,
    fit_harmonizer,
    harmonize,
)
from .synth import (
    SceneSpec,
    apply_lut,
    grade_lut,
    inpaint_remove,
    make_flicker_video,
    make_single_lut_pair,
    per_frame_harmonize,
    random_scene_spec,
    render_scene,
)
from .video import MaskVideo, VideoTensor, composite, pseudo_alpha
from .video_io import (
    read_alpha,
    read_mask,
    read_video,
    write_alpha,
    write_mask,
    write_video,
)

(
    _TAG_SCENE,
    _TAG_SINGLE_LUT,
    _TAG_FLICKER,
    _TAG_NET_DEFLICKER,
    _TAG_TRAIN_DEFLICKER,
    _TAG_REFINE,
    _TAG_NET_HARMONIZER,
    _TAG_TRAIN_HARMONIZER,
    _TAG_HARMONIZE,
) = range(1, 10)

SCENE_VIDEO_STREAMS = ("fg", "bg", "bg_synth", "real", "stage1", "flicker",
                       "bg_inpaint")
REFINED_STREAM = "stage1_refined"


def _child_seed(seed: int, tag: int, index: int = 0) -> int:
    return int(np.random.SeedSequence([seed, tag, index]).generate_state(1)[0])


def _write_loss_csv(path: Path, losses) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(float(loss))])


def _manifest(out_root, stage, config, inputs, outputs, reports, t0) -> RunManifest:
    manifest = RunManifest(
        run_id=f"{stage}-{config.config_hash()[:8]}",
        stage=stage,
        config_hash=config.config_hash(),
        seed=config.seed,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        metric_reports=[str(p) for p in reports],
        wall_clock_s=time.time() - t0,
    )
    manifest.write(out_root)
    return manifest


# ---------------------------------------------------------------------------
# dataset generation and loading


@dataclass
class SceneData:
    """One generated scene with all on-disk streams loaded."""

    index: int
    role: str
    path: Path
    spec: SceneSpec
    frame_rate: float
    fg: VideoTensor
    bg: VideoTensor
    bg_synth: VideoTensor
    real: VideoTensor
    stage1: VideoTensor
    flicker: VideoTensor
    bg_inpaint: VideoTensor
    mask: MaskVideo
    alpha: object
    refined: VideoTensor | None = None


def _write_sample_dir(sample_dir: Path, pair, meta: dict) -> None:
    write_video(sample_dir / "input", pair.input_composite)
    write_video(sample_dir / "target", pair.target)
    write_mask(sample_dir / "mask", pair.mask)
    write_alpha(sample_dir / "alpha", pair.alpha)
    (sample_dir / "sample.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True))


def generate_dataset(config: PipelineConfig, out_root) -> Path:
    """Render scenes, build Stage-1 clips and both evaluation sets."""
    t0 = time.time()
    ds = config.dataset
    out_root = Path(out_root)
    dataset_dir = out_root / "dataset"
    scenes_dir = dataset_dir / "scenes"
    total = ds.scenes_train + ds.scenes_eval
    index = []
    eval_single = []
    eval_flicker = []

    for i in range(total):
        role = "train" if i < ds.scenes_train else "eval"
        rng = np.random.default_rng([config.seed, _TAG_SCENE, i])
        spec = random_scene_spec(rng, ds.frames, (ds.height, ds.width))
        fg, bg, mask = render_scene(spec)
        real = composite(fg, bg, mask)
        alpha = pseudo_alpha(mask, ds.feather)
        grade = grade_lut(rng, n=ds.lut_lattice)
        bg_synth = apply_lut(bg, grade)
        stage1 = per_frame_harmonize(fg, bg_synth, mask,
                                     blend=ds.harmonize_blend,
                                     context_radius=ds.context_radius)
        flicker_seed = _child_seed(config.seed, _TAG_FLICKER, i)
        flicker = make_flicker_video(real, mask, flicker_seed,
                                     lattice=ds.lut_lattice,
                                     amplitude=ds.jitter_amplitude)
        bg_inpaint = inpaint_remove(real, mask)

        scene_dir = scenes_dir / f"scene_{i:05d}"
        streams = {
            "fg": fg, "bg": bg, "bg_synth": bg_synth, "real": real,
            "stage1": stage1, "flicker": flicker, "bg_inpaint": bg_inpaint,
        }
        for name, video in streams.items():
            write_video(scene_dir / name, video)
        write_mask(scene_dir / "mask", mask)
        write_alpha(scene_dir / "alpha", alpha)
        (scene_dir / "scene.json").write_text(json.dumps({
            "index": i,
            "role": role,
            "spec": spec.to_dict(),
            "frame_rate": ds.frame_rate,
            "flicker_seed": flicker_seed,
            "grade_lut": grade.lattice.tolist(),
        }, indent=2, sort_keys=True))
        index.append({"scene": scene_dir.name, "role": role})

        if role == "eval":
            lut_seed = _child_seed(config.seed, _TAG_SINGLE_LUT, i)
            pair = make_single_lut_pair(real, mask, lut_seed,
                                        feather=ds.feather,
                                        lattice=ds.lut_lattice)
            sample_dir = dataset_dir / "eval_single_lut" / f"sample_{i:05d}"
            _write_sample_dir(sample_dir, pair, {
                "path_tag": pair.path_tag,
                "seed": lut_seed,
                "scene": scene_dir.name,
                "spec": spec.to_dict(),
                "lut": pair.provenance["lut"],
            })
            eval_single.append(sample_dir.name)

            from .synth import PairedSample
            flick_pair = PairedSample(
                input_composite=flicker, target=real, mask=mask, alpha=alpha,
                path_tag="synth_to_real",
                provenance={"kind": "flicker", "seed": flicker_seed},
            )
            sample_dir = dataset_dir / "eval_flicker" / f"sample_{i:05d}"
            _write_sample_dir(sample_dir, flick_pair, {
                "path_tag": flick_pair.path_tag,
                "seed": flicker_seed,
                "scene": scene_dir.name,
                "spec": spec.to_dict(),
            })
            eval_flicker.append(sample_dir.name)

    (dataset_dir / "dataset.json").write_text(json.dumps({
        "scenes": index,
        "eval_single_lut": eval_single,
        "eval_flicker": eval_flicker,
        "config": config.to_dict(),
    }, indent=2, sort_keys=True))
    _manifest(out_root, "gen-data", config, [], [dataset_dir], [], t0)
    return dataset_dir


def load_scene(scene_dir, with_refined: bool = False) -> SceneData:
    scene_dir = Path(scene_dir)
    meta = json.loads((scene_dir / "scene.json").read_text())
    frame_rate = float(meta.get("frame_rate", 8.0))
    videos = {
        name: read_video(scene_dir / name, frame_rate=frame_rate)
        for name in SCENE_VIDEO_STREAMS
    }
    refined = None
    if with_refined and (scene_dir / REFINED_STREAM).is_dir():
        refined = read_video(scene_dir / REFINED_STREAM, frame_rate=frame_rate)
    return SceneData(
        index=int(meta["index"]),
        role=meta["role"],
        path=scene_dir,
        spec=SceneSpec.from_dict(meta["spec"]),
        frame_rate=frame_rate,
        mask=read_mask(scene_dir / "mask"),
        alpha=read_alpha(scene_dir / "alpha"),
        refined=refined,
        **videos,
    )


def load_dataset(out_root, with_refined: bool = False) -> list:
    dataset_dir = Path(out_root) / "dataset"
    manifest_path = dataset_dir / "dataset.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(
            f"no dataset at {dataset_dir}; run gen-data first")
    manifest = json.loads(manifest_path.read_text())
    return [
        load_scene(dataset_dir / "scenes" / entry["scene"], with_refined)
        for entry in manifest["scenes"]
    ]


# ---------------------------------------------------------------------------
# training stages


def _model_kwargs(config: PipelineConfig) -> dict:
    return dict(
        codec=Codec(config.model.patch),
        schedule=config.schedule.build(),
        width=config.model.width,
        blocks=config.model.blocks,
        heads=config.model.heads,
        temb_dim=config.model.temb_dim,
        window=config.model.window,
    )


def train_deflicker(config: PipelineConfig, out_root) -> Path:
    """Train the lighting deflickering model; writes checkpoint + loss curve."""
    t0 = time.time()
    out_root = Path(out_root)
    scenes = [s for s in load_dataset(out_root) if s.role == "train"]
    if not scenes:
        raise FileNotFoundError("dataset has no training scenes")
    model = DeflickerModel.create(
        seed=_child_seed(config.seed, _TAG_NET_DEFLICKER), **_model_kwargs(config))
    losses = fit_deflicker(
        model,
        [(s.real, s.mask) for s in scenes],
        config.train.recipe(),
        seed=_child_seed(config.seed, _TAG_TRAIN_DEFLICKER),
        jitter_amplitude=config.dataset.jitter_amplitude,
        lut_lattice=config.dataset.lut_lattice,
    )
    ckpt = out_root / "checkpoints" / "deflicker.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, model, provenance={
        "stage": "train-deflicker",
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "iterations": config.train.iterations,
    })
    loss_csv = out_root / "logs" / "deflicker_loss.csv"
    _write_loss_csv(loss_csv, losses)
    _manifest(out_root, "train-deflicker", config,
              [out_root / "dataset"], [ckpt, loss_csv], [], t0)
    return ckpt


def refine_dataset(config: PipelineConfig, out_root, ckpt_path) -> Path:
    """Run the deflicker model over all Stage-1 clips; write refined streams.

    The sampled foreground is pasted back over the clean Stage-1 background
    so refinement never perturbs background pixels.
    """
    t0 = time.time()
    out_root = Path(out_root)
    model, header = load_checkpoint(ckpt_path)
    if not isinstance(model, DeflickerModel):
        raise ValueError(f"{ckpt_path} is a {header['kind']} checkpoint, "
                         "refine needs a deflicker model")
    scenes = load_dataset(out_root)
    entries = []
    for s in scenes:
        raw = deflicker(model, s.stage1, s.mask,
                        seed=_child_seed(config.seed, _TAG_REFINE, s.index))
        refined = composite(raw, s.stage1, s.mask)
        write_video(s.path / REFINED_STREAM, refined)
        entries.append({
            "scene": s.path.name,
            "frame_sim_before": frame_similarity(
                s.stage1, seed=config.metrics.frame_sim_seed),
            "frame_sim_after": frame_similarity(
                refined, seed=config.metrics.frame_sim_seed),
        })
    improved = sum(e["frame_sim_after"] >= e["frame_sim_before"] for e in entries)
    report = {
        "scenes": entries,
        "improved_fraction": improved / len(entries),
        "mean_before": float(np.mean([e["frame_sim_before"] for e in entries])),
        "mean_after": float(np.mean([e["frame_sim_after"] for e in entries])),
    }
    report_path = out_root / "reports" / "refine_report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    _manifest(out_root, "refine", config, [ckpt_path],
              [s.path / REFINED_STREAM for s in scenes], [report_path], t0)
    return report_path


def harmonization_scenes(scenes, use_refined: bool = True) -> list:
    """Bundle loaded scenes into dual-path training records."""
    out = []
    for s in scenes:
        target = s.refined if use_refined else s.stage1
        if use_refined and s.refined is None:
            raise FileNotFoundError(
                f"{s.path} has no refined stream; run refine first or pass "
                "--no-stage2")
        out.append(HarmonizationScene(
            fg=s.fg, bg_real=s.bg, bg_synth=s.bg_synth, mask=s.mask,
            alpha=s.alpha, real=s.real, target_synth=target,
            bg_inpaint=s.bg_inpaint,
        ))
    return out


def train_harmonizer(config: PipelineConfig, out_root, use_refined: bool = True,
                     single_path: str | None = None,
                     name: str = "harmonizer") -> Path:
    """Train the dual-path harmonization model (or an ablated variant)."""
    t0 = time.time()
    out_root = Path(out_root)
    scenes = [s for s in load_dataset(out_root, with_refined=True)
              if s.role == "train"]
    if not scenes:
        raise FileNotFoundError("dataset has no training scenes")
    hscenes = harmonization_scenes(scenes, use_refined=use_refined)
    model = HarmonizerModel.create(
        seed=_child_seed(config.seed, _TAG_NET_HARMONIZER), **_model_kwargs(config))
    losses = fit_harmonizer(
        model, hscenes, config.train.recipe(single_path=single_path),
        seed=_child_seed(config.seed, _TAG_TRAIN_HARMONIZER))
    ckpt = out_root / "checkpoints" / f"{name}.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, model, provenance={
        "stage": "train-harmonizer",
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "iterations": config.train.iterations,
        "use_refined": use_refined,
        "single_path": single_path,
    })
    loss_csv = out_root / "logs" / f"{name}_loss.csv"
    _write_loss_csv(loss_csv, losses)
    _manifest(out_root, f"train-{name}", config,
              [out_root / "dataset"], [ckpt, loss_csv], [], t0)
    return ckpt


# ---------------------------------------------------------------------------
# inference and evaluation


def run_harmonize(ckpt_path, fg_dir, bg_dir, mask_dir, out_dir,
                  ref_dir=None, seed: int = 0,
                  metrics_cfg: MetricsConfig | None = None) -> MetricReport:
    """Harmonize a frame-directory triplet and write output frames + report."""
    metrics_cfg = metrics_cfg or MetricsConfig()
    model, header = load_checkpoint(ckpt_path)
    if not isinstance(model, HarmonizerModel):
        raise ValueError(f"{ckpt_path} is a {header['kind']} checkpoint, "
                         "harmonize needs a harmonizer model")
    fg = read_video(fg_dir)
    bg = read_video(bg_dir)
    mask = read_mask(mask_dir)
    counts = {"fg": fg.shape[0], "bg": bg.shape[0], "mask": mask.shape[0]}
    if len(set(counts.values())) != 1:
        raise ValueError(f"frame-count mismatch among streams: {counts}")
    out = harmonize(model, fg, bg, mask, seed=seed)
    out_dir = Path(out_dir)
    write_video(out_dir, out)
    ref = read_video(ref_dir) if ref_dir is not None else None
    report = evaluate_pair(out, ref, mask,
                           band_inner=metrics_cfg.band_inner,
                           band_outer=metrics_cfg.band_outer,
                           frame_sim_seed=metrics_cfg.frame_sim_seed)
    (out_dir / "report.json").write_text(report.to_json())
    return report


def evaluate_dirs(pred_dir, ref_dir, mask_dir=None,
                  metrics_cfg: MetricsConfig | None = None,
                  out_path=None) -> MetricReport:
    """Compute all applicable metrics between prediction and reference dirs."""
    metrics_cfg = metrics_cfg or MetricsConfig()
    pred = read_video(pred_dir)
    ref = read_video(ref_dir)
    mask = read_mask(mask_dir) if mask_dir is not None else None
    report = evaluate_pair(pred, ref, mask,
                           band_inner=metrics_cfg.band_inner,
                           band_outer=metrics_cfg.band_outer,
                           frame_sim_seed=metrics_cfg.frame_sim_seed)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(report.to_json())
    return report
