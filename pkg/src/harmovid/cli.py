"""Command-line entry points for the harmonization pipeline.

Subcommands: gen-data, train-deflicker, refine, train-harmonizer, harmonize,
evaluate. A JSON config drives every stage; HARMOVID_SEED overrides the
config seed and artifact paths resolve under --out-root.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig


def _load_config(args) -> PipelineConfig:
    if args.config is not None:
        config = PipelineConfig.from_json(args.config)
    else:
        config = PipelineConfig()
    env_seed = os.environ.get("HARMOVID_SEED")
    if env_seed is not None:
        config = dataclasses.replace(config, seed=int(env_seed))
    return config


def _out_root(args, config: PipelineConfig) -> Path:
    root = Path(args.out_root if args.out_root is not None else config.out_root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(
        __import__("json").dumps(config.to_dict(), indent=2, sort_keys=True))
    return root


def _add_common(parser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="pipeline config JSON (defaults apply if omitted)")
    parser.add_argument("--out-root", type=Path, default=None,
                        help="artifact root (default: config.out_root)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harmovid",
        description="Relightable video harmonization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render scenes and build the dataset")
    _add_common(p)

    p = sub.add_parser("train-deflicker", help="train the deflickering model")
    _add_common(p)

    p = sub.add_parser("refine", help="deflicker all Stage-1 clips")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, default=None,
                   help="deflicker checkpoint (default: <out-root>/checkpoints/deflicker.ckpt)")

    p = sub.add_parser("train-harmonizer", help="train the harmonization model")
    _add_common(p)
    p.add_argument("--no-stage2", action="store_true",
                   help="train on raw Stage-1 targets instead of refined ones")
    p.add_argument("--single-path", choices=["r2s", "s2r"], default=None,
                   help="ablation: train one path only")
    p.add_argument("--name", default=None,
                   help="checkpoint name (default derived from flags)")

    p = sub.add_parser("harmonize", help="harmonize a foreground onto a background")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--fg", type=Path, required=True, help="foreground frame dir")
    p.add_argument("--bg", type=Path, required=True, help="background frame dir")
    p.add_argument("--mask", type=Path, required=True, help="mask frame dir")
    p.add_argument("--out", type=Path, required=True, help="output frame dir")
    p.add_argument("--ref", type=Path, default=None,
                   help="optional reference frame dir for paired metrics")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("evaluate", help="compute metrics between frame dirs")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--mask", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None, help="report JSON path")
    _add_common(p)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _load_config(args)

    if args.command == "gen-data":
        root = _out_root(args, config)
        dataset_dir = pipeline.generate_dataset(config, root)
        print(f"dataset written to {dataset_dir}")
    elif args.command == "train-deflicker":
        root = _out_root(args, config)
        ckpt = pipeline.train_deflicker(config, root)
        print(f"checkpoint written to {ckpt}")
    elif args.command == "refine":
        root = _out_root(args, config)
        ckpt = args.checkpoint or root / "checkpoints" / "deflicker.ckpt"
        report = pipeline.refine_dataset(config, root, ckpt)
        print(f"refined dataset; report at {report}")
    elif args.command == "train-harmonizer":
        root = _out_root(args, config)
        name = args.name
        if name is None:
            name = "harmonizer"
            if args.single_path:
                name += f"-{args.single_path}"
            if args.no_stage2:
                name += "-nostage2"
        ckpt = pipeline.train_harmonizer(
            config, root, use_refined=not args.no_stage2,
            single_path=args.single_path, name=name)
        print(f"checkpoint written to {ckpt}")
    elif args.command == "harmonize":
        seed = config.seed if os.environ.get("HARMOVID_SEED") else args.seed
        report = pipeline.run_harmonize(
            args.checkpoint, args.fg, args.bg, args.mask, args.out,
            ref_dir=args.ref, seed=seed, metrics_cfg=config.metrics)
        print(report.to_json())
    elif args.command == "evaluate":
        report = pipeline.evaluate_dirs(
            args.pred, args.ref, mask_dir=args.mask,
            metrics_cfg=config.metrics, out_path=args.out)
        print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
