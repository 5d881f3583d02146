"""Graph-based dynamic fusion: an LSTM-style gate running over layer depth
wrapped around an initial-residual, identity-mapped graph convolution.

Per layer k = 1..K, with H'(0) = H(0) = H0 and g(0) = C(0) = 0::

    (g, C)  = gate_step(g(k-1), H'(k-1), C(k-1))
    H(k)    = ReLU(((1-alpha) P H'(k-1) + alpha H0) ((1-beta_k) I + beta_k W(k-1)))
    H'(k)   = H(k) + g(k)

Gate parameters are shared by all layers; each layer owns its W.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, ContractError
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.rng import Rng

GATES = ("u", "f", "o", "c")


def beta(k: int, rho: float) -> float:
    """Identity-mapping strength ``ln(rho / k + 1)`` of layer ``k`` (1-based)."""
    if k < 1:
        raise ContractError(f"beta is defined for layers k >= 1, got k={k}")
    if rho <= 0:
        raise ContractError(f"rho must be positive, got {rho}")
    return math.log(rho / k + 1.0)


@dataclass
class GdfParams:
    gate_w: dict[str, Tensor]
    gate_b: dict[str, Tensor]
    conv_w: list[Tensor]
    alpha: float
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")

    @property
    def K(self) -> int:
        return len(self.conv_w)

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], K: int, alpha: float, rho: float,
                    prefix: str = "gdf") -> "GdfParams":
        return cls(
            gate_w={e: ad.as_tensor(params[f"{prefix}.gate.W_{e}"]) for e in GATES},
            gate_b={e: ad.as_tensor(params[f"{prefix}.gate.b_{e}"]) for e in GATES},
            conv_w=[ad.as_tensor(params[f"{prefix}.conv.W{k}"]) for k in range(K)],
            alpha=alpha, rho=rho)


@dataclass
class LayerState:
    H_prime: Tensor
    C: Tensor
    g: Tensor


def gate_step(g_prev, h_prime_prev, c_prev, gdf: GdfParams) -> tuple[Tensor, Tensor]:
    g_prev, h_prime_prev, c_prev = map(ad.as_tensor, (g_prev, h_prime_prev, c_prev))
    if not g_prev.shape == h_prime_prev.shape == c_prev.shape:
        raise ad.ShapeError(f"gate_step: g {g_prev.shape}, H' {h_prime_prev.shape}, "
                            f"C {c_prev.shape} must match")
    z = ad.concat([g_prev, h_prime_prev], axis=1)
    pre = {e: ad.linear(z, gdf.gate_w[e], gdf.gate_b[e]) for e in GATES}
    update, forget, output = (ad.sigmoid(pre[e]) for e in "ufo")
    candidate = ad.tanh(pre["c"])
    c = ad.add(ad.mul(forget, c_prev), ad.mul(update, candidate))
    return ad.mul(output, ad.tanh(c)), c


def conv_step(h_prime_prev, h0, propagation, w_k, alpha: float, beta_k: float) -> Tensor:
    h_prime_prev, h0, propagation, w_k = map(ad.as_tensor, (h_prime_prev, h0, propagation, w_k))
    support = ad.add(ad.scale(ad.matmul(propagation, h_prime_prev), 1.0 - alpha),
                     ad.scale(h0, alpha))
    width = w_k.shape[0]
    mixing = ad.add(Tensor(np.eye(width) * (1.0 - beta_k)), ad.scale(w_k, beta_k))
    return ad.relu(ad.matmul(support, mixing))


def gdf_forward(h0, propagation, gdf: GdfParams, return_states: bool = False):
    """Run the K-layer stack; returns H'(K), plus the per-layer states if asked."""
    h0 = ad.as_tensor(h0)
    zeros = Tensor(np.zeros(h0.shape))
    h_prime, g, c = h0, zeros, zeros
    states = []
    for k in range(1, gdf.K + 1):
        g, c = gate_step(g, h_prime, c, gdf)
        h = conv_step(h_prime, h0, propagation, gdf.conv_w[k - 1], gdf.alpha, beta(k, gdf.rho))
        h_prime = ad.add(h, g)
        if return_states:
            states.append(LayerState(h_prime, c, g))
    return (h_prime, states) if return_states else h_prime


def init_gdf_params(rng: Rng, d: int, K: int, forget_bias: float = 1.0) -> dict[str, np.ndarray]:
    if K < 0:
        raise ConfigError(f"K must be >= 0, got {K}")
    out = {}
    gate_rng, conv_rng = rng.stream("gate"), rng.stream("conv")
    bound = 1.0 / math.sqrt(2 * d)
    for e in GATES:
        out[f"gdf.gate.W_{e}"] = gate_rng.uniform(-bound, bound, (d, 2 * d))
        out[f"gdf.gate.b_{e}"] = np.full(d, forget_bias if e == "f" else 0.0)
    bound = 1.0 / math.sqrt(d)
    for k in range(K):
        out[f"gdf.conv.W{k}"] = conv_rng.uniform(-bound, bound, (d, d))
    return out
