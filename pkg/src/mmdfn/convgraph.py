"""Multimodal conversation graph: node layout, edge rules, angular weights, P-tilde."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .conversation import Conversation
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor

NORM_FLOOR = 1e-12


class EdgelessGraphWarning(UserWarning):
    pass


def edge_weight(x_i, x_j) -> float:
    """``1 - arccos(cos_sim(x_i, x_j)) / pi``; near-zero vectors count as orthogonal.

    The angle is evaluated as ``2 atan2(|u - v|, |u + v|)`` on the unit
    vectors, which equals the clamped arccos but keeps full precision at
    identical and antipodal inputs.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ad.ShapeError(f"edge_weight: lengths differ, {x_i.shape} vs {x_j.shape}")
    n_i, n_j = np.linalg.norm(x_i), np.linalg.norm(x_j)
    if n_i < NORM_FLOOR or n_j < NORM_FLOOR:
        return 0.5
    u, v = x_i / n_i, x_j / n_j
    angle = 2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v))
    return 1.0 - angle / math.pi


def edge_mask(n_utterances: int, n_modalities: int = 3, intra: bool = True,
              inter: bool = True) -> np.ndarray:
    """Boolean adjacency pattern for the block layout ``node = block * N + utterance``."""
    n = n_utterances
    size = n * n_modalities
    block = np.arange(size) // n
    utt = np.arange(size) % n
    same_block = block[:, None] == block[None, :]
    same_utt = utt[:, None] == utt[None, :]
    mask = np.zeros((size, size), dtype=bool)
    if intra:
        mask |= same_block
    if inter:
        mask |= same_utt & ~same_block
    np.fill_diagonal(mask, False)
    return mask


def renormalize(adjacency):
    """``D^-1/2 (A + I) D^-1/2``. Returns the same kind (array or Tensor) it was given."""
    if isinstance(adjacency, Tensor):
        return ad.sym_normalize(adjacency)
    return ad.sym_normalize(Tensor(adjacency)).data


@dataclass
class ConversationGraph:
    modalities: tuple[str, ...]
    n_utterances: int
    mask: np.ndarray
    features: Tensor
    adjacency_t: Tensor
    propagation_t: Tensor

    @property
    def n_nodes(self) -> int:
        return self.mask.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self.adjacency_t.data

    @property
    def propagation(self) -> np.ndarray:
        return self.propagation_t.data

    @property
    def node_index(self) -> dict[tuple[int, str], int]:
        n = self.n_utterances
        return {(i, m): b * n + i for b, m in enumerate(self.modalities) for i in range(n)}

    def edges(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(np.triu(self.mask, k=1))
        adj = self.adjacency
        return [(int(i), int(j), float(adj[i, j])) for i, j in zip(rows, cols)]

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.mask, k=1).sum())

    def dump_edges(self, path) -> None:
        """Write ``node_i node_j weight`` lines, weights with 17 significant digits."""
        lines = [f"{i} {j} {w:.17g}\n" for i, j, w in self.edges()]
        Path(path).write_text("".join(lines))


def build_graph(conv: Conversation | None, nodes: Mapping[str, Tensor | np.ndarray],
                intra: bool = True, inter: bool = True, fusion_layers: int = 0,
                modalities: Sequence[str] | None = None) -> ConversationGraph:
    """Stack node embeddings in modality-block order and wire them up.

    Edge weights are differentiable functions of the node embeddings.
    """
    modalities = tuple(modalities or nodes.keys())
    stacked = ad.concat([ad.as_tensor(nodes[m]) for m in modalities], axis=0)
    n = stacked.shape[0] // len(modalities)
    if conv is not None and n != len(conv):
        raise ad.ShapeError(f"graph: {n} node rows per modality for a conversation of {len(conv)}")
    if n < 1:
        raise ad.ShapeError("graph: need at least one utterance")
    if fusion_layers > 0 and not (intra or inter):
        warnings.warn("both edge rules are off: the graph is edgeless and propagation is the identity",
                      EdgelessGraphWarning, stacklevel=2)
    mask = edge_mask(n, len(modalities), intra, inter)
    adjacency = ad.angular_adjacency(stacked, mask)
    return ConversationGraph(modalities, n, mask, stacked, adjacency, ad.sym_normalize(adjacency))


def expected_edge_count(n_utterances: int, n_modalities: int = 3, intra: bool = True,
                        inter: bool = True) -> int:
    n = n_utterances
    pairs = n_modalities * (n_modalities - 1) // 2
    return n_modalities * n * (n - 1) // 2 * intra + pairs * n * inter
