"""Command-line entry point: ``mmdfn {train,eval,gradcheck,synth,ablate}``.

Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .. import __version__
from ..checkpoint import CheckpointError, load_checkpoint
from ..data import Dataset, SynthSpec, load_dataset, save_dataset, split, synth_generate
from ..errors import ConfigError, ContractError, DatasetFormatError
from ..model import ModelConfig
from .ablate import AXES, ablate, ablation_table
from .gradcheck import TOLERANCE, run_gradcheck
from .train import TrainConfig, TrainingDiverged, evaluate, train, write_report

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("mmdfn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _modalities(text: str) -> tuple[str, ...]:
    mods = tuple(m for m in text.replace(",", "").lower())
    if not mods or any(m not in "avt" for m in mods):
        raise argparse.ArgumentTypeError(f"modalities must be letters from 'avt', got {text!r}")
    return mods


# key -> (type, help); dest names equal config keys (K is spelled k on the command line)
MODEL_FLAGS = {
    "d": (int, "embedding width (even)"),
    "k": (int, "number of fusion layers"),
    "alpha": (float, "initial-residual weight"),
    "rho": (float, "identity-mapping schedule constant"),
    "gamma_a": (float, "speaker trade-off, acoustic"),
    "gamma_v": (float, "speaker trade-off, visual"),
    "gamma_t": (float, "speaker trade-off, textual"),
    "modalities": (_modalities, "active modalities, e.g. avt or at"),
    "loss": (str, "cross_entropy or focal"),
    "focal_gamma": (float, "focal-loss focusing parameter"),
    "eta": (float, "regularization weight"),
    "forget_bias": (float, "initial forget-gate bias"),
}
MODEL_SWITCHES = ("intra", "inter", "use_gdf", "use_speaker", "use_context", "l2_squared")
TRAIN_FLAGS = {
    "lr": (float, "learning rate"),
    "optimizer": (str, "adam or sgd"),
    "epochs": (int, "maximum epochs"),
    "batch_size": (int, "conversations per step"),
    "clip_norm": (float, "global gradient-norm clip (0 disables)"),
    "patience": (int, "early-stopping patience on validation w-F1 (0 disables)"),
    "seed": (int, "random seed"),
    "class_weighting": (str, "inverse-frequency or none"),
}


def _add_model_flags(p):
    for key, (typ, help_) in MODEL_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_)
    for key in MODEL_SWITCHES:
        p.add_argument("--" + key.replace("_", "-"), dest=key, action=argparse.BooleanOptionalAction,
                       default=None)


def _add_train_flags(p):
    _add_model_flags(p)
    for key, (typ, help_) in TRAIN_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_)
    p.add_argument("--config", type=Path, help="JSON file with the same keys as the flags")
    p.add_argument("--data", type=Path, required=True, help="dataset file (training data)")
    p.add_argument("--val-data", type=Path, help="validation dataset file")
    p.add_argument("--test-data", type=Path, help="test dataset file")
    p.add_argument("--split", type=_floats, help="train,val,test fractions applied to --data")
    p.add_argument("--min-support", type=int, default=0, help="hide rarer classes in printed tables")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmdfn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mmdfn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and save the best checkpoint")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--min-support", type=int, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--loss", choices=("both", "cross_entropy", "focal"), default="both")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    spec_defaults = SynthSpec()
    p.add_argument("--seed", type=int, default=spec_defaults.seed)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-conversations", type=int, default=spec_defaults.n_conversations)
    p.add_argument("--utterances", type=_ints, default=spec_defaults.utterances, help="min,max")
    p.add_argument("--speakers", type=_ints, default=spec_defaults.speakers, help="min,max")
    p.add_argument("--n-classes", type=int, default=spec_defaults.n_classes)
    p.add_argument("--feature-dims", type=_ints,
                   default=tuple(spec_defaults.feature_dims.values()), help="D_a,D_v,D_t")
    p.add_argument("--separation", type=float, default=spec_defaults.separation)
    p.add_argument("--noise", type=float, default=spec_defaults.noise)

    p = sub.add_parser("ablate", help="train and score a matrix of ablation variants")
    _add_train_flags(p)
    p.add_argument("--axes", nargs="*", default=[], choices=AXES, metavar="AXIS",
                   help=f"any of: {', '.join(AXES)}")
    return parser


# config assembly

def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def _load_config_file(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"--config: no such file {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config {path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"--config {path}: expected an object")
    known = set(MODEL_FLAGS) | set(MODEL_SWITCHES) | set(TRAIN_FLAGS)
    out = {}
    for key, value in data.items():
        norm = _normalize_key(key)
        if norm not in known:
            raise ConfigError(f"--config {path}: unknown key {key!r}")
        if norm == "modalities" and isinstance(value, str):
            value = _modalities(value)
        out[norm] = value
    return out


def train_config_from_args(args) -> TrainConfig:
    settings = _load_config_file(args.config) if args.config else {}
    for key in list(MODEL_FLAGS) + list(MODEL_SWITCHES) + list(TRAIN_FLAGS):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    model_kw = {}
    gamma = list(ModelConfig().gamma)
    for i, m in enumerate("avt"):
        if f"gamma_{m}" in settings:
            gamma[i] = float(settings.pop(f"gamma_{m}"))
    model_kw["gamma"] = tuple(gamma)
    model_names = {f.name for f in fields(ModelConfig)}
    for key in list(settings):
        target = "K" if key == "k" else key
        if target in model_names:
            model_kw[target] = settings.pop(key)
    if "modalities" in model_kw:
        model_kw["modalities"] = tuple(model_kw["modalities"])
    return TrainConfig(model=ModelConfig(**model_kw), out_dir=str(args.out) if args.out else None,
                       **settings)


def _datasets(args) -> tuple[Dataset, Dataset | None, Dataset | None]:
    if not args.data.is_file():
        raise ConfigError(f"--data: no such file {args.data}")
    data = load_dataset(args.data)
    val = load_dataset(args.val_data) if args.val_data else None
    test = load_dataset(args.test_data) if args.test_data else None
    if args.split:
        if val is not None or test is not None:
            raise ConfigError("--split cannot be combined with --val-data/--test-data")
        return split(data, args.split, seed=args.seed or 0)
    return data, val, test


# commands

def cmd_train(args) -> int:
    config = train_config_from_args(args)
    train_set, val_set, test_set = _datasets(args)
    result = train(config, train_set, val_set)
    print(f"trained {len(result.log)} epochs; best epoch {result.best_epoch}; "
          f"final train loss {result.log[-1].train_loss:.6f}")
    target = test_set if test_set is not None else (val_set if val_set is not None else train_set)
    report = evaluate(result.checkpoint, target)
    print(report.table(args.min_support))
    if args.out:
        write_report(report, args.out, min_support=args.min_support)
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.data.is_file():
        raise ConfigError(f"--data: no such file {args.data}")
    report = evaluate(load_checkpoint(args.checkpoint), load_dataset(args.data))
    print(report.table(args.min_support))
    if args.out:
        write_report(report, args.out, min_support=args.min_support)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    losses = ("cross_entropy", "focal") if args.loss == "both" else (args.loss,)
    ok = True
    for res in run_gradcheck(K=args.k, d=args.d, seed=args.seed, eps=args.eps, losses=losses):
        print(f"[{res.loss}] {len(res.per_param)} tensors, {res.seconds:.1f}s")
        for group, err in sorted(res.per_group.items()):
            flag = "ok" if err <= TOLERANCE else "FAIL"
            print(f"  {group:<16} max rel err {err:.3e}  {flag}")
        ok &= res.max_error <= TOLERANCE
    print("gradcheck passed" if ok else f"gradcheck FAILED (tolerance {TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_synth(args) -> int:
    if len(args.feature_dims) != 3 or len(args.utterances) != 2 or len(args.speakers) != 2:
        raise ConfigError("--feature-dims needs 3 values; --utterances and --speakers need 2")
    spec = SynthSpec(n_conversations=args.n_conversations, utterances=tuple(args.utterances),
                     speakers=tuple(args.speakers), n_classes=args.n_classes,
                     feature_dims=dict(zip("avt", args.feature_dims)),
                     separation=args.separation, noise=args.noise, seed=args.seed)
    ds = synth_generate(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} conversations ({ds.n_utterances} utterances) to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = train_config_from_args(args)
    train_set, val_set, test_set = _datasets(args)
    results = ablate(config, args.axes, train_set, val_set,
                     test_set if test_set is not None else train_set, out_dir=args.out)
    print(ablation_table(results))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "synth": cmd_synth, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetFormatError, CheckpointError, ContractError, argparse.ArgumentTypeError) as exc:
        print(f"mmdfn {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"mmdfn {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("unhandled failure", exc_info=True)
        print(f"mmdfn {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
