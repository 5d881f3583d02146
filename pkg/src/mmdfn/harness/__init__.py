from .ablate import PRESETS, ablate, expand_axes
from .metrics import MetricsReport, confusion_matrix, report_from_confusion, score
from .train import Adam, TrainConfig, TrainResult, evaluate, evaluate_params, train

__all__ = [
    "PRESETS", "ablate", "expand_axes", "MetricsReport", "confusion_matrix",
    "report_from_confusion", "score", "Adam", "TrainConfig", "TrainResult", "evaluate",
    "evaluate_params", "train",
]
