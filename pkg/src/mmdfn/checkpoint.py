"""Checkpoint directories: ``manifest.txt`` plus raw ``params.bin``.

The manifest is ``key: value`` text. Structured values (config, class names,
feature dims) are JSON; each ``param:`` line gives a name and its shape as
``RxC``. ``params.bin`` holds the parameters as little-endian float64 in
manifest order, and ``checksum`` is the SHA-256 of that file.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .model import ModelConfig

FORMAT = "mmdfn-checkpoint/1"
MANIFEST = "manifest.txt"
BLOB = "params.bin"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    class_names: tuple[str, ...]
    feature_dims: dict[str, int]
    seed: int
    extra: dict | None = None


def _shape_text(shape) -> str:
    return "x".join(str(s) for s in shape) if shape else "scalar"


def _parse_shape(text: str) -> tuple[int, ...]:
    return () if text == "scalar" else tuple(int(s) for s in text.split("x"))


def save_checkpoint(ckpt: Checkpoint, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in ckpt.params.values())
    lines = [
        f"format: {FORMAT}",
        f"seed: {int(ckpt.seed)}",
        f"config: {json.dumps(ckpt.config.to_dict(), sort_keys=True)}",
        f"class_names: {json.dumps(list(ckpt.class_names))}",
        f"feature_dims: {json.dumps(dict(ckpt.feature_dims), sort_keys=True)}",
    ]
    if ckpt.extra:
        lines.append(f"extra: {json.dumps(ckpt.extra, sort_keys=True)}")
    lines += [f"param: {name} {_shape_text(np.shape(v))}" for name, v in ckpt.params.items()]
    lines.append(f"checksum: sha256 {hashlib.sha256(blob).hexdigest()}")
    (directory / BLOB).write_bytes(blob)
    (directory / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    manifest, blob_path = directory / MANIFEST, directory / BLOB
    if not manifest.is_file() or not blob_path.is_file():
        raise CheckpointError(f"{directory}: not a checkpoint (need {MANIFEST} and {BLOB})")
    fields: dict[str, str] = {}
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition(": ")
        if not sep:
            raise CheckpointError(f"{manifest}:{lineno}: expected 'key: value'")
        if key == "param":
            name, _, shape = value.rpartition(" ")
            shapes.append((name, _parse_shape(shape)))
        else:
            fields[key] = value
    if fields.get("format") != FORMAT:
        raise CheckpointError(f"{manifest}: unsupported format {fields.get('format')!r}")
    blob = blob_path.read_bytes()
    algo, _, digest = fields.get("checksum", "").partition(" ")
    if algo != "sha256" or hashlib.sha256(blob).hexdigest() != digest:
        raise CheckpointError(f"{blob_path}: checksum mismatch")
    flat = np.frombuffer(blob, dtype="<f8")
    params, offset = {}, 0
    for name, shape in shapes:
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = flat[offset:offset + size].astype(np.float64).reshape(shape)
        offset += size
    if offset != flat.size:
        raise CheckpointError(f"{blob_path}: {flat.size} values for {offset} declared")
    return Checkpoint(
        config=ModelConfig.from_dict(json.loads(fields["config"])),
        params=params,
        class_names=tuple(json.loads(fields["class_names"])),
        feature_dims=json.loads(fields["feature_dims"]),
        seed=int(fields["seed"]),
        extra=json.loads(fields["extra"]) if "extra" in fields else None,
    )


def same_params(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    """Bitwise equality, including names and order."""
    return list(a) == list(b) and all(
        np.asarray(a[k]).tobytes() == np.asarray(b[k]).tobytes() and np.shape(a[k]) == np.shape(b[k])
        for k in a)
