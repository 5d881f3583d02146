"""Central finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import ContractError, Tensor, backward

DENOM_FLOOR = 1e-8


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return np.abs(analytic - numeric) / denom


def analytic_gradients(f: Callable[[Mapping[str, Tensor]], Tensor],
                       params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    leaves = {name: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=name)
              for name, v in params.items()}
    return backward(f(leaves), leaves)


def numeric_gradients(f, params: Mapping[str, np.ndarray], eps: float = 1e-5,
                      names=None) -> dict[str, np.ndarray]:
    work = {name: np.array(v, dtype=np.float64) for name, v in params.items()}

    def evaluate():
        return float(f({name: Tensor(v) for name, v in work.items()}).data)

    out = {}
    for name in names if names is not None else work:
        arr = work[name]
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = evaluate()
            flat[i] = keep - eps
            down = evaluate()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = grad
    return out


def finite_difference_check(f, params: Mapping[str, np.ndarray], eps: float = 1e-5,
                            analytic: Mapping[str, np.ndarray] | None = None) -> dict[str, float]:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps ``{name: Tensor}`` to a scalar Tensor. ``analytic`` substitutes
    precomputed gradients (used to confirm that planted faults are caught).
    Relative error is ``|a - n| / max(|a|, |n|, 1e-8)`` per scalar, maxed per
    parameter.
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    consts = {name: Tensor(np.array(v, dtype=np.float64)) for name, v in params.items()}
    first, second = f(consts).data, f(consts).data
    if not np.array_equal(first, second):
        raise ContractError(f"objective is not deterministic: {float(first)!r} != {float(second)!r}")
    if analytic is None:
        analytic = analytic_gradients(f, params)
    numeric = numeric_gradients(f, params, eps)
    return {name: float(relative_error(analytic[name], numeric[name]).max(initial=0.0))
            for name in params}


def group_max(errors: Mapping[str, float], depth: int = 2) -> dict[str, float]:
    """Collapse dotted parameter names to their first ``depth`` components."""
    groups: dict[str, float] = {}
    for name, err in errors.items():
        key = ".".join(name.split(".")[:depth])
        groups[key] = max(groups.get(key, 0.0), err)
    return groups
