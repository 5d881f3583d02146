"""Ablation matrices: component removal, edge rules, modality subsets."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from ..data import Dataset
from ..model import ModelConfig
from .metrics import MetricsReport
from .train import TrainConfig, evaluate, train, write_report

TOGGLES = ("use_gdf", "use_speaker", "use_context", "intra", "inter")
_NAMES = {"a": "A", "v": "V", "t": "T"}

# (label, overrides) per row
PRESETS: dict[str, list[tuple[str, dict]]] = {
    "components": [
        ("full", {}),
        ("w/o GDF", {"use_gdf": False}),
        ("w/o Speaker", {"use_speaker": False}),
        ("w/o GDF, w/o Speaker", {"use_gdf": False, "use_speaker": False}),
        ("w/o GDF, w/o Speaker, w/o Context",
         {"use_gdf": False, "use_speaker": False, "use_context": False}),
    ],
    "edges": [
        ("GDF", {}),
        ("GDF w/o Inter-Modal", {"inter": False}),
        ("GDF w/o Intra-Modal", {"intra": False}),
    ],
    "subsets": [
        ("A", {"modalities": ("a",), "use_gdf": False}),
        ("V", {"modalities": ("v",), "use_gdf": False}),
        ("T", {"modalities": ("t",), "use_gdf": False}),
        ("A + V", {"modalities": ("a", "v")}),
        ("A + T", {"modalities": ("a", "t")}),
        ("V + T", {"modalities": ("v", "t")}),
        ("A + V + T", {"modalities": ("a", "v", "t")}),
    ],
}
AXES = TOGGLES + ("modalities",) + tuple(PRESETS)


@dataclass
class Variant:
    name: str
    config: ModelConfig
    fusion: str

    def diff(self, base: ModelConfig) -> dict:
        mine, theirs = self.config.to_dict(), base.to_dict()
        return {k: mine[k] for k in mine if mine[k] != theirs[k]}


@dataclass
class VariantResult:
    variant: Variant
    config_diff: dict
    report: MetricsReport
    epochs_run: int


def _fusion_kind(cfg: ModelConfig) -> str:
    if len(cfg.modalities) == 1 and not cfg.use_gdf:
        return "none"
    return "gdf" if cfg.use_gdf else "concat"


def _variant(name: str, base: ModelConfig, overrides: dict) -> Variant:
    cfg = base.replace(**overrides)
    return Variant(name, cfg, _fusion_kind(cfg))


def expand_axes(base: ModelConfig, axes: Sequence[str]) -> list[Variant]:
    """Variants for the requested axes, base first, duplicates dropped.

    A preset name expands to its full row list. A toggle axis adds the base
    with that switch flipped. ``modalities`` adds every nonempty subset;
    single-modality rows run without fusion.
    """
    unknown = [a for a in axes if a not in AXES]
    if unknown:
        raise ValueError(f"unknown ablation axis {unknown[0]!r}; choose from {', '.join(AXES)}")
    if not axes:
        return [_variant("base", base, {})]
    variants: list[Variant] = []
    only_presets = all(a in PRESETS for a in axes)
    if not only_presets:
        variants.append(_variant("base", base, {}))
    for axis in axes:
        if axis in PRESETS:
            variants += [_variant(name, base, o) for name, o in PRESETS[axis]]
        elif axis == "modalities":
            for r in (1, 2, 3):
                for subset in itertools.combinations("avt", r):
                    over = {"modalities": subset}
                    if r == 1:
                        over["use_gdf"] = False
                    variants.append(_variant(" + ".join(_NAMES[m] for m in subset), base, over))
        else:
            flipped = not getattr(base, axis)
            variants.append(_variant(f"{axis}={flipped}", base, {axis: flipped}))
    unique, seen = [], set()
    for v in variants:
        key = json.dumps(v.config.to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            unique.append(v)
    return unique


def ablate(base: TrainConfig, axes: Sequence[str], train_set: Dataset, val_set: Dataset | None,
           test_set: Dataset, out_dir=None) -> list[VariantResult]:
    """Train and evaluate every variant with the base seed."""
    results = []
    for variant in expand_axes(base.model, axes):
        cfg = replace(base, model=variant.config, out_dir=None)
        try:
            trained = train(cfg, train_set, val_set)
            report = evaluate(trained.checkpoint, test_set)
        except Exception as exc:
            exc.args = (f"[variant {variant.name}] {exc}",) + exc.args[1:]
            raise
        results.append(VariantResult(variant, variant.diff(base.model), report, len(trained.log)))
    if out_dir is not None:
        write_ablation(results, out_dir)
    return results


def ablation_table(results: Sequence[VariantResult]) -> str:
    width = max([len("variant")] + [len(r.variant.name) for r in results])
    lines = [f"{'variant':<{width}}  {'fusion':>6}  {'acc':>6}  {'w-F1':>6}"]
    for r in results:
        lines.append(f"{r.variant.name:<{width}}  {r.variant.fusion:>6}  "
                     f"{100 * r.report.accuracy:>6.2f}  {100 * r.report.weighted_f1:>6.2f}")
    return "\n".join(lines)


def write_ablation(results: Sequence[VariantResult], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps({"variant": r.variant.name, "fusion": r.variant.fusion,
                                 "config_diff": r.config_diff, "epochs_run": r.epochs_run,
                                 "report": r.report.to_dict()}, sort_keys=True) + "\n")
    (out / "ablation.txt").write_text(ablation_table(results) + "\n")
    for i, r in enumerate(results):
        write_report(r.report, out / "variants", stem=f"{i:02d}", extra={"variant": r.variant.name})
