"""Modality encoders: context, per-speaker, and node-initialization embeddings.

Parameter names used here::

    ctx.{a,v}.W / .b              affine context map (d x D)
    ctx.t.{fwd,bwd}.W_ih ...      textual BiGRU (hidden d/2 per direction)
    ctx.t.W / .b                  affine text map, only without context recurrence
    spk.{a,v,t}.{fwd,bwd}.*       speaker BiGRU, shared across speakers

GRU tensors per direction: ``W_ih`` (3h x D), ``W_hh`` (3h x h), ``b_ih``, ``b_hh`` (3h).
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .conversation import MODALITIES, Conversation, Utterance
from .errors import ConfigError
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.rng import Rng

__all__ = [
    "Conversation", "Utterance", "bigru", "encode_context", "encode_speaker",
    "init_encoder_params", "init_node_embeddings",
]


def _gru_direction(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    gi = ad.linear(x, params[prefix + ".W_ih"], params[prefix + ".b_ih"])
    return ad.gru_recurrence(gi, params[prefix + ".W_hh"], params[prefix + ".b_hh"])


def bigru(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    """Forward and backward GRU passes over the rows of ``x``, concatenated per step."""
    fwd = _gru_direction(x, params, prefix + ".fwd")
    bwd = ad.reverse_rows(_gru_direction(ad.reverse_rows(x), params, prefix + ".bwd"))
    return ad.concat([fwd, bwd], axis=1)


def _check_width(d: int):
    if d < 2 or d % 2:
        raise ConfigError(f"embedding width d={d} must be even (bidirectional split)")


def _raw(conv: Conversation, modality: str, params: Mapping[str, Tensor], weight: str) -> Tensor:
    x = conv.matrix(modality)
    expected = params[weight].shape[1]
    if x.shape[1] != expected:
        raise ad.ShapeError(f"encoders: modality {modality!r} of conversation {conv.id!r} has "
                            f"{x.shape[1]} features, parameters {weight} expect {expected}")
    return Tensor(x)


def encode_context(conv: Conversation, params: Mapping[str, Tensor],
                   modalities: Sequence[str] = MODALITIES, recurrent_text: bool = True) -> dict[str, Tensor]:
    """Context embeddings ``c`` (N x d) per modality.

    Acoustic and visual use an affine map. Text runs the BiGRU unless
    ``recurrent_text`` is off, in which case it falls back to ``ctx.t.W/.b``.
    """
    out = {}
    for m in modalities:
        if m == "t" and recurrent_text:
            x = _raw(conv, m, params, "ctx.t.fwd.W_ih")
            out[m] = bigru(x, params, "ctx.t")
        else:
            x = _raw(conv, m, params, f"ctx.{m}.W")
            out[m] = ad.linear(x, params[f"ctx.{m}.W"], params[f"ctx.{m}.b"])
    return out


def encode_speaker(conv: Conversation, params: Mapping[str, Tensor],
                   modalities: Sequence[str] = MODALITIES) -> dict[str, Tensor]:
    """Speaker embeddings ``s`` (N x d) per modality.

    Each speaker's own utterances, in conversation order, go through the
    modality's BiGRU; the rows are then put back at their original positions.
    """
    positions = conv.speaker_positions()
    order = np.concatenate(positions)
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    out = {}
    for m in modalities:
        x = _raw(conv, m, params, f"spk.{m}.fwd.W_ih")
        pieces = [bigru(ad.take_rows(x, idx), params, f"spk.{m}") for idx in positions]
        out[m] = ad.take_rows(ad.concat(pieces, axis=0), inverse)
    return out


def init_node_embeddings(context: Mapping[str, Tensor], speaker: Mapping[str, Tensor] | None,
                         gamma: Mapping[str, float]) -> dict[str, Tensor]:
    """``x = c + gamma * s`` per modality; ``speaker=None`` means s = 0."""
    nodes = {}
    for m, c in context.items():
        c = ad.as_tensor(c)
        if speaker is None:
            nodes[m] = c
            continue
        s = ad.as_tensor(speaker[m])
        if s.shape != c.shape:
            raise ad.ShapeError(f"node init: context {c.shape} vs speaker {s.shape} for {m!r}")
        nodes[m] = ad.add(c, ad.scale(s, float(gamma[m])))
    return nodes


# parameter initialization

def _uniform(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def _init_gru(rng: Rng, prefix: str, in_dim: int, hidden: int, out: dict):
    for direction in ("fwd", "bwd"):
        p = f"{prefix}.{direction}"
        out[p + ".W_ih"] = _uniform(rng, (3 * hidden, in_dim), hidden)
        out[p + ".W_hh"] = _uniform(rng, (3 * hidden, hidden), hidden)
        out[p + ".b_ih"] = _uniform(rng, (3 * hidden,), hidden)
        out[p + ".b_hh"] = _uniform(rng, (3 * hidden,), hidden)


def init_encoder_params(rng: Rng, d: int, feature_dims: Mapping[str, int],
                        modalities: Sequence[str] = MODALITIES,
                        recurrent_text: bool = True) -> dict[str, np.ndarray]:
    _check_width(d)
    out: dict[str, np.ndarray] = {}
    ctx_rng, spk_rng = rng.stream("context"), rng.stream("speaker")
    for m in modalities:
        dim = int(feature_dims[m])
        if m == "t" and recurrent_text:
            _init_gru(ctx_rng.stream("t"), "ctx.t", dim, d // 2, out)
        else:
            r = ctx_rng.stream(m)
            out[f"ctx.{m}.W"] = _uniform(r, (d, dim), dim)
            out[f"ctx.{m}.b"] = _uniform(r, (d,), dim)
    for m in modalities:
        _init_gru(spk_rng.stream(m), f"spk.{m}", int(feature_dims[m]), d // 2, out)
    return out
