from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MODALITIES = ("a", "v", "t")


@dataclass(frozen=True, eq=False)
class Utterance:
    index: int
    speaker: str
    features: Mapping[str, np.ndarray]
    label: int

    def __post_init__(self):
        missing = [m for m in MODALITIES if m not in self.features]
        if missing:
            raise ValueError(f"utterance {self.index}: missing modality {missing[0]!r}")
        object.__setattr__(self, "features", {
            m: np.asarray(self.features[m], dtype=np.float64).reshape(-1) for m in MODALITIES})

    def __eq__(self, other):
        if not isinstance(other, Utterance):
            return NotImplemented
        return (self.index, self.speaker, self.label) == (other.index, other.speaker, other.label) \
            and all(np.array_equal(self.features[m], other.features[m]) for m in MODALITIES)


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]
    _matrices: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise ValueError(f"conversation {self.id!r} has no utterances")
        for m in MODALITIES:
            dims = {u.features[m].shape[0] for u in self.utterances}
            if len(dims) != 1:
                raise ValueError(f"conversation {self.id!r}: modality {m!r} has mixed dims {sorted(dims)}")

    def __len__(self):
        return len(self.utterances)

    @property
    def speakers(self) -> tuple[str, ...]:
        """Speaker ids in order of first appearance."""
        return tuple(dict.fromkeys(u.speaker for u in self.utterances))

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=np.intp)

    def dims(self) -> dict[str, int]:
        first = self.utterances[0]
        return {m: first.features[m].shape[0] for m in MODALITIES}

    def matrix(self, modality: str) -> np.ndarray:
        """Raw features of one modality stacked as an N x D array (cached)."""
        if modality not in self._matrices:
            mat = np.stack([u.features[modality] for u in self.utterances])
            mat.setflags(write=False)
            self._matrices[modality] = mat
        return self._matrices[modality]

    def speaker_positions(self) -> list[np.ndarray]:
        """Utterance indices of each speaker, speakers in first-appearance order."""
        spk = [u.speaker for u in self.utterances]
        return [np.array([i for i, s in enumerate(spk) if s == who], dtype=np.intp)
                for who in self.speakers]


def make_conversation(conv_id: str, speakers, labels, features: Mapping[str, np.ndarray]) -> Conversation:
    """Build a conversation from per-modality N x D arrays."""
    utts = [Utterance(i, str(s), {m: np.asarray(features[m])[i] for m in MODALITIES}, int(y))
            for i, (s, y) in enumerate(zip(speakers, labels))]
    return Conversation(conv_id, tuple(utts))
