"""Training loop, Adam, evaluation."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .. import checkpoint as ckpt_io
from ..data import Dataset
from ..errors import ConfigError, ContractError
from ..model import (ModelConfig, as_leaves, batch_loss, forward_log_probs, init_params,
                     inverse_frequency_weights)
from ..numerics.autodiff import Tensor, backward
from ..numerics.rng import Rng
from .metrics import MetricsReport, score

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, grad_norms: Mapping[str, float]):
        self.epoch = epoch
        self.grad_norms = dict(grad_norms)
        worst = sorted(self.grad_norms.items(), key=lambda kv: -np.nan_to_num(kv[1], nan=np.inf))[:5]
        super().__init__(f"loss became non-finite in epoch {epoch}; largest gradient norms: "
                         + ", ".join(f"{k}={v:.3g}" for k, v in worst))


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-3
    optimizer: str = "adam"
    epochs: int = 100
    batch_size: int = 8
    clip_norm: float = 5.0
    patience: int = 20
    seed: int = 0
    class_weighting: str = "inverse-frequency"
    out_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.class_weighting not in ("inverse-frequency", "none"):
            raise ConfigError(f"class_weighting must be 'inverse-frequency' or 'none'")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        out["model"] = self.model.to_dict()
        return out


class Adam:
    def __init__(self, params: Mapping[str, np.ndarray], lr: float, b1: float = 0.9,
                 b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor
    return norm


def predict(params: Mapping[str, np.ndarray], config: ModelConfig, dataset: Dataset) -> np.ndarray:
    consts = {k: Tensor(v) for k, v in params.items()}
    if not dataset.conversations:
        return np.zeros(0, dtype=np.intp)
    return np.concatenate([np.argmax(forward_log_probs(c, consts, config).data, axis=1)
                           for c in dataset.conversations])


def evaluate_params(params, config: ModelConfig, dataset: Dataset,
                    class_names=None) -> MetricsReport:
    class_names = tuple(class_names or config.classes or dataset.class_names)
    if len(dataset) == 0 or dataset.n_utterances == 0:
        raise ContractError("cannot evaluate an empty split")
    unknown = [c for c in dataset.class_names if c not in class_names]
    if unknown:
        raise ContractError(f"class {unknown[0]!r} is not in the checkpoint label set")
    remap = np.array([class_names.index(c) for c in dataset.class_names], dtype=np.intp)
    y_true = remap[dataset.labels()]
    return score(y_true, predict(params, config, dataset), class_names)


def evaluate(checkpoint, dataset: Dataset) -> MetricsReport:
    """Score a checkpoint (object or directory) on a split."""
    if not isinstance(checkpoint, ckpt_io.Checkpoint):
        checkpoint = ckpt_io.load_checkpoint(checkpoint)
    if dict(checkpoint.feature_dims) != dict(dataset.feature_dims):
        raise ContractError(f"checkpoint feature dims {checkpoint.feature_dims} do not match "
                            f"dataset dims {dict(dataset.feature_dims)}")
    return evaluate_params(checkpoint.params, checkpoint.config, dataset, checkpoint.class_names)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float | None = None
    val_wf1: float | None = None


@dataclass
class TrainResult:
    checkpoint: ckpt_io.Checkpoint
    final_params: dict[str, np.ndarray]
    log: list[EpochRecord]
    best_epoch: int
    stopped_early: bool = False

    def log_rows(self) -> list[tuple]:
        return [(r.epoch, r.train_loss, r.val_acc, r.val_wf1) for r in self.log]


def write_epoch_log(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_acc", "val_wf1"])
        for r in records:
            writer.writerow([r.epoch, repr(r.train_loss),
                             "" if r.val_acc is None else repr(r.val_acc),
                             "" if r.val_wf1 is None else repr(r.val_wf1)])


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset | None = None,
          params: Mapping[str, np.ndarray] | None = None) -> TrainResult:
    """Minimize the configured loss; keep the parameters with the best validation w-F1.

    Without a validation split the final parameters are kept. Everything
    (initialization, shuffling, updates) is a function of ``config.seed``.
    """
    if len(train_set) == 0:
        raise ConfigError("training split is empty")
    mcfg = config.model
    if not mcfg.classes:
        mcfg = mcfg.replace(classes=train_set.class_names)
    elif tuple(mcfg.classes) != tuple(train_set.class_names):
        raise ConfigError(f"configured classes {mcfg.classes} differ from dataset classes "
                          f"{train_set.class_names}")
    n_classes = len(mcfg.classes)
    params = {k: np.array(v, dtype=np.float64) for k, v in (
        params or init_params(mcfg, train_set.feature_dims, n_classes, config.seed)).items()}
    weights = None
    if mcfg.loss == "focal" and config.class_weighting == "inverse-frequency":
        weights = inverse_frequency_weights(train_set.labels(), n_classes)
    opt = Adam(params, config.lr) if config.optimizer == "adam" else SGD(params, config.lr)
    order_rng = Rng(config.seed).stream("order")
    convs = train_set.conversations

    best = (-math.inf, 0, {k: v.copy() for k, v in params.items()})
    records: list[EpochRecord] = []
    stale = 0
    stopped = False
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(convs))
        loss_sum, utt_sum = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [convs[i] for i in order[start:start + config.batch_size]]
            leaves = as_leaves(params)
            loss = batch_loss(batch, leaves, mcfg, weights)
            grads = backward(loss, leaves)
            if not np.isfinite(loss.data) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(epoch, {k: float(np.linalg.norm(g)) for k, g in grads.items()})
            clip_gradients(grads, config.clip_norm)
            opt.step(params, grads)
            n_utt = sum(len(c) for c in batch)
            loss_sum += float(loss.data) * n_utt
            utt_sum += n_utt
        record = EpochRecord(epoch, loss_sum / utt_sum)
        if val_set is not None and len(val_set):
            report = evaluate_params(params, mcfg, val_set)
            record.val_acc, record.val_wf1 = report.accuracy, report.weighted_f1
            if report.weighted_f1 > best[0]:
                best = (report.weighted_f1, epoch, {k: v.copy() for k, v in params.items()})
                stale = 0
            else:
                stale += 1
        records.append(record)
        log.debug("epoch %d loss %.6f val_wf1 %s", epoch, record.train_loss, record.val_wf1)
        if val_set is not None and config.patience and stale >= config.patience:
            stopped = True
            break

    if val_set is None or not len(val_set):
        best = (None, records[-1].epoch, {k: v.copy() for k, v in params.items()})
    ckpt = ckpt_io.Checkpoint(mcfg, best[2], mcfg.classes, dict(train_set.feature_dims), config.seed,
                              extra={"best_epoch": best[1]})
    result = TrainResult(ckpt, params, records, best[1], stopped)
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt_io.save_checkpoint(ckpt, out / "checkpoint")
        write_epoch_log(records, out / "epochs.csv")
        (out / "train_config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return result


def write_report(report: MetricsReport, directory, stem: str = "report", min_support: int = 0,
                 extra: Mapping | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    if extra:
        data.update(extra)
    (directory / f"{stem}.json").write_text(json.dumps(data, sort_keys=True) + "\n")
    (directory / f"{stem}.txt").write_text(report.table(min_support) + "\n")
