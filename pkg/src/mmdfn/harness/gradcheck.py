"""Full-model finite-difference suite on a small synthetic batch."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..conversation import make_conversation
from ..model import LOSSES, ModelConfig, batch_loss, init_params, inverse_frequency_weights
from ..numerics.gradcheck import finite_difference_check, group_max
from ..numerics.rng import Rng

TOLERANCE = 1e-4
DIMS = {"a": 5, "v": 4, "t": 6}
N_CLASSES = 4


@dataclass
class GradcheckResult:
    loss: str
    per_param: dict[str, float]
    seconds: float

    @property
    def per_group(self) -> dict[str, float]:
        return group_max(self.per_param, depth=2)

    @property
    def max_error(self) -> float:
        return max(self.per_param.values())


def synthetic_batch(seed: int, sizes=(3, 4), dims=DIMS, n_classes: int = N_CLASSES):
    """Conversations of the given lengths, two alternating speakers each."""
    rng = Rng(seed).stream("gradcheck-batch")
    convs = []
    for k, n in enumerate(sizes):
        speakers = ["A" if i % 2 == 0 else "B" for i in range(n)]
        labels = rng.integers(0, n_classes, n)
        feats = {m: rng.normal((n, dims[m])) for m in dims}
        convs.append(make_conversation(f"gc{k}", speakers, labels, feats))
    return convs


def run_gradcheck(K: int = 2, d: int = 8, seed: int = 3, eps: float = 1e-5, losses=LOSSES,
                  eta: float = 1e-3, param_scale: float = 0.3) -> list[GradcheckResult]:
    """Check reverse-mode gradients of the whole model against central differences.

    Initial parameters get an extra N(0, param_scale^2) jitter so that zero
    biases and symmetric starting points do not hide errors.
    """
    convs = synthetic_batch(seed)
    labels = np.concatenate([c.labels for c in convs])
    weights = inverse_frequency_weights(labels, N_CLASSES)
    results = []
    for loss in losses:
        cfg = ModelConfig(d=d, K=K, loss=loss, eta=eta, classes=tuple(f"c{i}" for i in range(N_CLASSES)))
        params = init_params(cfg, DIMS, N_CLASSES, seed)
        jitter = Rng(seed).stream("gradcheck-jitter")
        params = {k: v + jitter.normal(v.shape, param_scale) for k, v in params.items()}
        start = time.perf_counter()
        errors = finite_difference_check(lambda p: batch_loss(convs, p, cfg, weights), params, eps)
        results.append(GradcheckResult(loss, errors, time.perf_counter() - start))
    return results
