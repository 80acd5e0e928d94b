"""Checkpoint container: JSON manifest + flat little-endian float32 blob.

Layout: an 8-byte magic, a little-endian uint64 header length, the UTF-8
JSON header (layout, schedule, shapes, provenance, and a named-offset table
into the blob), then the raw float32 parameters. Bytes are deterministic for
identical models and provenance.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diffusion.codec import Codec
from .diffusion.denoiser import DenoiserConfig, DenoiserNet
from .diffusion.schedule import NoiseSchedule
from .models import KIND_DEFLICKER, KIND_HARMONIZER, DeflickerModel, HarmonizerModel

MAGIC = b"HVCKPT1\n"


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path, model, provenance: dict | None = None) -> None:
    """Serialize a DeflickerModel or HarmonizerModel to one file."""
    if isinstance(model, DeflickerModel):
        kind = KIND_DEFLICKER
    elif isinstance(model, HarmonizerModel):
        kind = KIND_HARMONIZER
    else:
        raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")

    names = sorted(model.net.params)
    table = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(model.net.params[name], dtype="<f4")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        blobs.append(arr.tobytes())

    header = {
        "kind": kind,
        "net": model.net.config.to_dict(),
        "layout": model.layout.to_list(),
        "schedule": {"betas": model.schedule.betas.tolist()},
        "codec": {"patch": model.codec.patch},
        "window": model.window,
        "params": table,
        "provenance": provenance or {},
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Reload a model; returns (model, header_dict)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    n = int.from_bytes(raw[len(MAGIC): len(MAGIC) + 8], "little")
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(raw[header_start: header_start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc

    blob = np.frombuffer(raw[header_start + n:], dtype="<f4")
    params = {}
    for entry in header["params"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = blob[entry["offset"]: entry["offset"] + size]
        if chunk.size != size:
            raise CheckpointError(f"{path}: blob truncated at {entry['name']}")
        params[entry["name"]] = chunk.astype(np.float64).reshape(entry["shape"])

    cfg = DenoiserConfig.from_dict(header["net"])
    net = DenoiserNet(cfg, params=params)
    schedule = NoiseSchedule(np.array(header["schedule"]["betas"]))
    codec = Codec(patch=int(header["codec"]["patch"]))
    window = int(header["window"])
    kind = header["kind"]
    if kind == KIND_DEFLICKER:
        model = DeflickerModel(net=net, schedule=schedule, codec=codec, window=window)
    elif kind == KIND_HARMONIZER:
        model = HarmonizerModel(net=net, schedule=schedule, codec=codec, window=window)
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    return model, header
