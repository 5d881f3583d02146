"""End-to-end forward pass, classifier and training objectives."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from . import convgraph, encoders, fusion
from .conversation import MODALITIES, Conversation
from .errors import ConfigError, ContractError
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.rng import Rng

LOSSES = ("cross_entropy", "focal")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and objective settings.

    ``use_gdf=False`` swaps the fusion stack for the concatenation fallback,
    where the refined slots of the classifier input repeat the node embeddings.
    ``l2_squared`` switches the regularizer from ``eta*||theta||`` to
    ``eta*||theta||^2``.
    """

    d: int = 64
    K: int = 16
    alpha: float = 0.2
    rho: float = 0.5
    gamma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    modalities: tuple[str, ...] = MODALITIES
    intra: bool = True
    inter: bool = True
    use_gdf: bool = True
    use_speaker: bool = True
    use_context: bool = True
    loss: str = "focal"
    focal_gamma: float = 2.0
    eta: float = 1e-5
    l2_squared: bool = False
    forget_bias: float = 1.0
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        unknown = [m for m in self.modalities if m not in MODALITIES]
        if unknown:
            raise ConfigError(f"unknown modality {unknown[0]!r}; choose from a, v, t")
        object.__setattr__(self, "modalities", tuple(m for m in MODALITIES if m in self.modalities))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "classes", tuple(self.classes))
        self.validate()

    def validate(self):
        if not self.modalities:
            raise ConfigError("modalities must be a nonempty subset of {a, v, t}")
        if self.d < 2 or self.d % 2:
            raise ConfigError(f"d={self.d} must be even (bidirectional split)")
        if self.K < 0:
            raise ConfigError(f"K must be >= 0, got {self.K}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if len(self.gamma) != 3:
            raise ConfigError("gamma needs one value per modality (a, v, t)")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.focal_gamma < 0:
            raise ConfigError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")

    @property
    def gamma_map(self) -> dict[str, float]:
        return dict(zip(MODALITIES, self.gamma))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("gamma", "modalities", "classes"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class Prediction:
    probabilities: np.ndarray
    predicted: int = field(init=False)

    def __post_init__(self):
        self.predicted = int(np.argmax(self.probabilities))


def init_params(config: ModelConfig, feature_dims: Mapping[str, int], n_classes: int,
                seed: int) -> dict[str, np.ndarray]:
    """Fresh parameters; every ablation keeps the GDF and speaker tensors so they can be checked dead."""
    rng = Rng(seed)
    params = encoders.init_encoder_params(rng.stream("encoders"), config.d, feature_dims,
                                          config.modalities, config.use_context)
    params.update(fusion.init_gdf_params(rng.stream("gdf"), config.d, config.K, config.forget_bias))
    width = 2 * len(config.modalities) * config.d
    clf = rng.stream("classifier")
    bound = 1.0 / np.sqrt(width)
    params["clf.W"] = clf.uniform(-bound, bound, (n_classes, width))
    params["clf.b"] = np.zeros(n_classes)
    return params


def as_leaves(params: Mapping[str, np.ndarray], requires_grad: bool = True) -> dict[str, Tensor]:
    return {k: Tensor(np.array(v, dtype=np.float64), requires_grad=requires_grad, name=k)
            for k, v in params.items()}


def _tensors(params) -> dict[str, Tensor]:
    return {k: ad.as_tensor(v) for k, v in params.items()}


def embed(conv: Conversation, params: Mapping[str, Tensor], config: ModelConfig) -> dict[str, Tensor]:
    """Node embeddings ``x`` per active modality."""
    context = encoders.encode_context(conv, params, config.modalities, config.use_context)
    speaker = encoders.encode_speaker(conv, params, config.modalities) if config.use_speaker else None
    return encoders.init_node_embeddings(context, speaker, config.gamma_map)


def refine(conv: Conversation, nodes: Mapping[str, Tensor], params: Mapping[str, Tensor],
           config: ModelConfig) -> dict[str, Tensor]:
    """Fused embeddings ``o`` per modality (identity under the concatenation fallback)."""
    if not config.use_gdf:
        return dict(nodes)
    graph = convgraph.build_graph(conv, nodes, config.intra, config.inter, config.K, config.modalities)
    gdf = fusion.GdfParams.from_params(params, config.K, config.alpha, config.rho)
    out = fusion.gdf_forward(graph.features, graph.propagation_t, gdf)
    n = len(conv)
    return {m: ad.take_rows(out, np.arange(b * n, (b + 1) * n)) for b, m in enumerate(config.modalities)}


def classifier_log_probs(x_parts: Sequence[Tensor], o_parts: Sequence[Tensor],
                         params: Mapping[str, Tensor]) -> Tensor:
    features = ad.concat(list(x_parts) + list(o_parts), axis=1)
    return ad.log_softmax_rows(ad.linear(features, params["clf.W"], params["clf.b"]))


def classify(x_parts, o_parts, params) -> list[Prediction]:
    """Softmax over ``W_z [x_a; x_v; x_t; o_a; o_v; o_t] + b_z`` for each row."""
    log_probs = classifier_log_probs([ad.as_tensor(p) for p in x_parts],
                                     [ad.as_tensor(p) for p in o_parts], _tensors(params))
    return [Prediction(p) for p in np.exp(log_probs.data)]


def forward_log_probs(conv: Conversation, params: Mapping[str, Tensor], config: ModelConfig) -> Tensor:
    nodes = embed(conv, params, config)
    refined = refine(conv, nodes, params, config)
    return classifier_log_probs([nodes[m] for m in config.modalities],
                                [refined[m] for m in config.modalities], params)


def model_forward(conv: Conversation, params, config: ModelConfig) -> list[Prediction]:
    log_probs = forward_log_probs(conv, _tensors(params), config)
    return [Prediction(p) for p in np.exp(log_probs.data)]


# objectives

def _regularizer(theta: Mapping[str, Tensor], squared: bool) -> Tensor:
    squares = None
    for t in theta.values():
        t = ad.as_tensor(t)
        term = ad.total(ad.mul(t, t))
        squares = term if squares is None else ad.add(squares, term)
    if squares is None:
        return Tensor(0.0)
    return squares if squared else ad.power(squares, 0.5)


def _per_utterance_terms(log_probs, labels, focal_gamma=None, class_weights=None):
    terms, count = [], 0
    for lp, y in zip(log_probs, labels):
        lp = ad.as_tensor(lp)
        y = np.asarray(y, dtype=np.intp)
        if lp.shape[0] != y.shape[0]:
            raise ad.ShapeError(f"loss: {lp.shape[0]} predictions for {y.shape[0]} labels")
        # NaN is left to propagate so the trainer can report divergence
        if np.any(np.isneginf(lp.data)):
            raise ContractError("loss: probabilities must be strictly positive")
        true_lp = ad.pick(lp, y)
        term = ad.scale(true_lp, -1.0)
        if focal_gamma is not None:
            modulator = ad.power(ad.sub(1.0, ad.exp(true_lp)), focal_gamma)
            term = ad.mul(term, modulator)
            if class_weights is not None:
                term = ad.mul(term, Tensor(np.asarray(class_weights, dtype=np.float64)[y]))
        terms.append(ad.total(term))
        count += y.shape[0]
    if count == 0:
        raise ContractError("loss over zero utterances")
    summed = terms[0]
    for t in terms[1:]:
        summed = ad.add(summed, t)
    return ad.scale(summed, 1.0 / count)


def cross_entropy_loss(log_probs: Sequence, labels: Sequence, eta: float = 0.0,
                       theta: Mapping[str, Tensor] | None = None, squared: bool = False) -> Tensor:
    """Mean negative log-likelihood over every utterance of the batch plus ``eta*||theta||``.

    ``log_probs`` holds one N_l x C array/Tensor of log-probabilities per conversation.
    """
    loss = _per_utterance_terms(log_probs, labels)
    if eta and theta:
        loss = ad.add(loss, ad.scale(_regularizer(theta, squared), eta))
    return loss


def focal_loss(log_probs: Sequence, labels: Sequence, focal_gamma: float = 2.0,
               class_weights=None, eta: float = 0.0, theta: Mapping[str, Tensor] | None = None,
               squared: bool = False) -> Tensor:
    """Each ``-log p`` term becomes ``-w_c (1 - p)^gamma log p``; same normalization and penalty."""
    if focal_gamma < 0:
        raise ContractError(f"focal_gamma must be >= 0, got {focal_gamma}")
    loss = _per_utterance_terms(log_probs, labels, focal_gamma, class_weights)
    if eta and theta:
        loss = ad.add(loss, ad.scale(_regularizer(theta, squared), eta))
    return loss


def active_params(params: Mapping, config: ModelConfig) -> dict:
    """Parameters the configured model actually uses (the regularized set)."""
    dead = []
    if not config.use_gdf:
        dead.append("gdf.")
    if not config.use_speaker:
        dead.append("spk.")
    return {k: v for k, v in params.items() if not k.startswith(tuple(dead))}


def batch_loss(convs: Sequence[Conversation], params: Mapping[str, Tensor], config: ModelConfig,
               class_weights=None) -> Tensor:
    log_probs = [forward_log_probs(c, params, config) for c in convs]
    labels = [c.labels for c in convs]
    theta = active_params(params, config)
    if config.loss == "focal":
        return focal_loss(log_probs, labels, config.focal_gamma, class_weights,
                          config.eta, theta, config.l2_squared)
    return cross_entropy_loss(log_probs, labels, config.eta, theta, config.l2_squared)


def inverse_frequency_weights(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """``total / (n_classes * count_c)``; classes absent from ``labels`` get weight 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=n_classes).astype(np.float64)
    weights = np.ones(n_classes)
    present = counts > 0
    weights[present] = counts.sum() / (n_classes * counts[present])
    return weights


def check_edges(config: ModelConfig):
    if config.use_gdf and config.K > 0 and not (config.intra or config.inter):
        warnings.warn("both edge rules are off: fusion runs on an edgeless graph",
                      convgraph.EdgelessGraphWarning, stacklevel=2)
