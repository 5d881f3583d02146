"""Dataset files, synthetic conversations and conversation-level splits.

File format (UTF-8, one JSON object per line)::

    {"class_names": ["neutral", "happy", ...], "feature_dims": {"a": 100, "v": 342, "t": 100}}
    {"id": "dlg01", "utterances": [{"speaker": "M", "label": "happy",
                                    "a": [...], "v": [...], "t": [...]}, ...]}

The first line is the header, every following non-blank line one conversation.
Floats are written with Python's shortest round-trip repr (at most 17
significant digits), so a written dataset loads back bit-exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .conversation import MODALITIES, Conversation, Utterance
from .errors import ConfigError, DatasetFormatError
from .numerics.rng import Rng


@dataclass(frozen=True)
class Dataset:
    conversations: tuple[Conversation, ...]
    class_names: tuple[str, ...]
    feature_dims: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "conversations", tuple(self.conversations))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "feature_dims", {m: int(self.feature_dims[m]) for m in MODALITIES})
        for conv in self.conversations:
            if conv.dims() != self.feature_dims:
                raise DatasetFormatError(f"conversation {conv.id!r}: dims {conv.dims()} "
                                         f"differ from dataset dims {self.feature_dims}")
            bad = [y for y in conv.labels if not 0 <= y < len(self.class_names)]
            if bad:
                raise DatasetFormatError(f"conversation {conv.id!r}: label index {bad[0]} out of range")

    def __len__(self):
        return len(self.conversations)

    @property
    def n_utterances(self) -> int:
        return sum(len(c) for c in self.conversations)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.conversations]

    def labels(self) -> np.ndarray:
        if not self.conversations:
            return np.zeros(0, dtype=np.intp)
        return np.concatenate([c.labels for c in self.conversations])

    def subset(self, ids: Iterable[str]) -> "Dataset":
        by_id = {c.id: c for c in self.conversations}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ConfigError(f"unknown conversation id {missing[0]!r}")
        return Dataset(tuple(by_id[i] for i in ids), self.class_names, self.feature_dims)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.class_names == other.class_names and self.feature_dims == other.feature_dims
                and len(self) == len(other)
                and all(a.id == b.id and a.utterances == b.utterances
                        for a, b in zip(self.conversations, other.conversations)))


# serialization

def _utterance_record(u: Utterance, class_names) -> dict:
    rec = {"speaker": u.speaker, "label": class_names[u.label]}
    for m in MODALITIES:
        rec[m] = [float(v) for v in u.features[m]]
    return rec


def dumps_dataset(ds: Dataset) -> str:
    lines = [json.dumps({"class_names": list(ds.class_names), "feature_dims": dict(ds.feature_dims)})]
    for conv in ds.conversations:
        lines.append(json.dumps({"id": conv.id,
                                 "utterances": [_utterance_record(u, ds.class_names)
                                                for u in conv.utterances]}))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def _fail(lineno: int, msg: str):
    raise DatasetFormatError(f"line {lineno}: {msg}")


def _parse_header(obj, lineno: int):
    if not isinstance(obj, dict):
        _fail(lineno, "header must be an object")
    names = obj.get("class_names")
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        _fail(lineno, "field 'class_names' must be a nonempty list of strings")
    if len(set(names)) != len(names):
        _fail(lineno, "field 'class_names' has duplicates")
    dims = obj.get("feature_dims")
    if not isinstance(dims, dict):
        _fail(lineno, "field 'feature_dims' must be an object with keys a, v, t")
    for m in MODALITIES:
        if not isinstance(dims.get(m), int) or isinstance(dims.get(m), bool) or dims[m] < 1:
            _fail(lineno, f"field 'feature_dims.{m}' must be a positive integer")
    return tuple(names), {m: dims[m] for m in MODALITIES}


def _parse_conversation(obj, lineno: int, class_names, dims) -> Conversation:
    if not isinstance(obj, dict):
        _fail(lineno, "conversation record must be an object")
    cid = obj.get("id")
    if not isinstance(cid, str) or not cid:
        _fail(lineno, "field 'id' must be a nonempty string")
    utts = obj.get("utterances")
    if not isinstance(utts, list) or not utts:
        _fail(lineno, f"conversation {cid!r}: field 'utterances' must be a nonempty list")
    label_index = {n: i for i, n in enumerate(class_names)}
    parsed = []
    for i, rec in enumerate(utts):
        where = f"conversation {cid!r} utterance {i}"
        if not isinstance(rec, dict):
            _fail(lineno, f"{where}: must be an object")
        for key in ("speaker", "label", *MODALITIES):
            if key not in rec:
                _fail(lineno, f"{where}: missing field {key!r}")
        speaker = rec["speaker"]
        if not isinstance(speaker, (str, int)) or isinstance(speaker, bool):
            _fail(lineno, f"{where}: field 'speaker' must be a string")
        if rec["label"] not in label_index:
            _fail(lineno, f"{where}: field 'label' has unknown class {rec['label']!r}")
        feats = {}
        for m in MODALITIES:
            vec = rec[m]
            if not isinstance(vec, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec):
                _fail(lineno, f"{where}: field {m!r} must be a list of numbers")
            if len(vec) != dims[m]:
                _fail(lineno, f"{where}: field {m!r} has {len(vec)} values, header declares {dims[m]}")
            arr = np.array(vec, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                _fail(lineno, f"{where}: field {m!r} has non-finite values")
            feats[m] = arr
        parsed.append(Utterance(i, str(speaker), feats, label_index[rec["label"]]))
    return Conversation(cid, tuple(parsed))


def loads_dataset(text: str) -> Dataset:
    header = None
    convs: list[Conversation] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(lineno, f"invalid JSON ({exc.msg})")
        if header is None:
            header = _parse_header(obj, lineno)
            continue
        conv = _parse_conversation(obj, lineno, *header)
        if conv.id in seen:
            _fail(lineno, f"duplicate conversation id {conv.id!r}")
        seen.add(conv.id)
        convs.append(conv)
    if header is None:
        raise DatasetFormatError("no header record")
    return Dataset(tuple(convs), header[0], header[1])


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"{path}: no such dataset file")
    return loads_dataset(path.read_text(encoding="utf-8"))


# synthetic data

@dataclass(frozen=True)
class SynthSpec:
    n_conversations: int = 8
    utterances: tuple[int, int] = (4, 8)
    speakers: tuple[int, int] = (2, 3)
    n_classes: int = 6
    feature_dims: Mapping[str, int] = field(default_factory=lambda: {"a": 12, "v": 10, "t": 16})
    separation: float = 1.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.separation < 0 or self.noise < 0:
            raise ConfigError("separation and noise must be >= 0")
        if any(int(self.feature_dims[m]) < 1 for m in MODALITIES):
            raise ConfigError("feature dims must be >= 1")
        lo, hi = self.utterances
        if not 1 <= lo <= hi:
            raise ConfigError(f"utterance range {self.utterances} is invalid")
        lo, hi = self.speakers
        if not 1 <= lo <= hi:
            raise ConfigError(f"speaker range {self.speakers} is invalid")
        if self.n_conversations < 1 or self.n_classes < 1:
            raise ConfigError("need at least one conversation and one class")


def synth_generate(spec: SynthSpec) -> Dataset:
    """Class-conditional Gaussian features around seeded per-class directions.

    The mean of class c in modality m is ``separation`` times a random unit
    vector; each utterance adds ``noise`` times a standard normal draw.
    """
    rng = Rng(spec.seed)
    dims = {m: int(spec.feature_dims[m]) for m in MODALITIES}
    mean_rng = rng.stream("means")
    means = {}
    for m in MODALITIES:
        raw = mean_rng.normal((spec.n_classes, dims[m]))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        means[m] = spec.separation * raw / np.where(norms > 0, norms, 1.0)
    draw = rng.stream("conversations")
    width = len(str(spec.n_conversations - 1))
    convs = []
    for k in range(spec.n_conversations):
        n = int(draw.integers(spec.utterances[0], spec.utterances[1] + 1))
        n_spk = int(draw.integers(spec.speakers[0], spec.speakers[1] + 1))
        speakers = draw.integers(0, n_spk, n)
        labels = draw.integers(0, spec.n_classes, n)
        utts = []
        for i in range(n):
            feats = {m: means[m][labels[i]] + spec.noise * draw.normal(dims[m]) for m in MODALITIES}
            utts.append(Utterance(i, f"S{int(speakers[i])}", feats, int(labels[i])))
        convs.append(Conversation(f"synth{k:0{width}d}", tuple(utts)))
    names = tuple(f"class{c}" for c in range(spec.n_classes))
    return Dataset(tuple(convs), names, dims)


# splits

def split(dataset: Dataset, fractions: Sequence[float] | None = (0.8, 0.1, 0.1), seed: int = 0,
          ids: Sequence[Sequence[str]] | None = None) -> tuple[Dataset, Dataset, Dataset]:
    """Partition conversations into (train, val, test).

    Either shuffle with ``seed`` and cut by ``fractions`` (val and test sizes
    are rounded, train takes the rest) or pass ``ids`` as three explicit lists.
    """
    if ids is not None:
        if len(ids) != 3:
            raise ConfigError("explicit split needs three id lists (train, val, test)")
        flat = [i for part in ids for i in part]
        if len(set(flat)) != len(flat):
            raise ConfigError("explicit split lists overlap")
        parts = tuple(dataset.subset(part) for part in ids)
    else:
        if len(fractions) != 3 or any(f < 0 for f in fractions) \
                or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions {tuple(fractions)} must be three nonnegative values summing to 1")
        n = len(dataset)
        order = Rng(seed).stream("split").permutation(n)
        n_val = int(round(fractions[1] * n))
        n_test = int(round(fractions[2] * n))
        n_train = n - n_val - n_test
        all_ids = dataset.ids
        cuts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
        parts = tuple(dataset.subset([all_ids[i] for i in sorted(cut)]) for cut in cuts)
    for name, part in zip(("train", "val", "test"), parts):
        if len(part) == 0:
            raise ConfigError(f"split produced an empty {name} set")
    return parts
