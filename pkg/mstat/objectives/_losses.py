import numpy as np

from collections import Counter
from dataclasses import dataclass, field

from mstat.tensor import Tensor, reshape, sum, mean, sqrt, clamp_min, relu, max_axis, min_axis, log_softmax_axis, as_tensor
from mstat.util.exceptions import ConfigError, DataContractError, SamplerContractError, DimensionError

head_names = ("attr", "stage2", "stage3")

smoothing_variants = (
    "others",
    "uniform"
)

@dataclass(frozen = True)
class LossConfig:
    """
    ``smoothing`` is the label smoothing mass. With the ``others`` variant it is spread over the
    C - 1 wrong classes, with ``uniform`` over all C classes.
    ``head_weights`` scales each head's CE + triplet sum, ``ce_weight`` and ``triplet_weight`` the two terms
    """
    smoothing: float = 0.1
    margin: float = 0.3
    smoothing_variant: str = "others"
    ce_weight: float = 1.0
    triplet_weight: float = 1.0
    head_weights: dict = field(default_factory = lambda: {name: 1.0 for name in head_names})

    def __post_init__(self):
        if not 0 <= self.smoothing < 1:
            raise ConfigError(f"smoothing must lie in [0, 1), not {self.smoothing}")

        if self.margin < 0:
            raise ConfigError(f"triplet margin must be >= 0, not {self.margin}")

        if self.smoothing_variant not in smoothing_variants:
            raise ConfigError(f"smoothing_variant must be one of {', '.join(smoothing_variants)}, not {self.smoothing_variant}")

        unknown = set(self.head_weights) - set(head_names)

        if unknown:
            raise ConfigError(f"unknown loss heads {sorted(unknown)}")

        if any(weight < 0 for weight in self.head_weights.values()):
            raise ConfigError("head weights must be >= 0")

@dataclass
class LossReport:
    total: Tensor
    heads: dict
    terms: dict

    def record(self):
        return {"total": self.total.item(), **{f"loss_{name}": value for name, value in self.heads.items()}}

def _labels(labels, batch):
    labels = np.asarray(labels)

    if labels.shape != (batch,):
        raise DimensionError(f"expected {batch} labels, got shape {labels.shape}")

    return labels.astype(np.int64)

def smoothed_targets(labels, classes, smoothing, variant = "others"):
    """
    :returns: target distributions (B, C)
    :rtype: numpy.ndarray
    """
    if variant == "uniform" or classes == 1:
        targets = np.full((len(labels), classes), smoothing / classes)
        targets[np.arange(len(labels)), labels] += 1 - smoothing
        return targets

    targets = np.full((len(labels), classes), smoothing / (classes - 1))
    targets[np.arange(len(labels)), labels] = 1 - smoothing
    return targets

def ce_label_smoothing(logits, labels, smoothing = 0.1, variant = "others"):
    """
    Cross-entropy against label-smoothed targets, averaged over the batch

    :param logits: (B, C)
    :param labels: (B,) integers in [0, C)
    :param smoothing: epsilon
    :param variant: ``others`` or ``uniform``

    :type logits: Tensor
    :type labels: numpy.ndarray
    :type smoothing: float
    :type variant: str

    :rtype: Tensor
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (B, C), got {logits.shape}")

    batch, classes = logits.shape
    labels = _labels(labels, batch)

    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataContractError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")

    targets = as_tensor(smoothed_targets(labels, classes, smoothing, variant), like = logits)
    return -mean(sum(targets * log_softmax_axis(logits, 1), axis = 1))

def pairwise_distances(embeddings):
    """
    Euclidean distances (B, B). Coincident points sit at exactly zero with a zero gradient
    """
    batch, width = embeddings.shape
    diff = reshape(embeddings, (batch, 1, width)) - reshape(embeddings, (1, batch, width))
    squared = sum(diff * diff, axis = 2)

    return sqrt(clamp_min(squared, 1e-24)) * (squared.data > 0)

def batch_hard_triplet(embeddings, labels, margin = 0.3):
    """
    For every anchor take the farthest same-label sample and the nearest other-label sample,
    then average max(0, d_p - d_n + m)

    :param embeddings: (B, D)
    :param labels: (B,)
    :param margin: m

    :type embeddings: Tensor
    :type labels: numpy.ndarray
    :type margin: float

    :rtype: Tensor
    """
    if embeddings.ndim != 2:
        raise DimensionError(f"embeddings must be (B, D), got {embeddings.shape}")

    labels = _labels(labels, embeddings.shape[0])
    counts = Counter(labels.tolist())

    singles = sorted(label for label, count in counts.items() if count < 2)

    if singles:
        raise SamplerContractError(f"labels {singles[:5]} appear once in the batch, batch-hard mining needs two")

    if len(counts) < 2:
        raise SamplerContractError("batch-hard mining needs at least two labels in the batch")

    same = labels[:, None] == labels[None, :]
    positive = same & ~np.eye(len(labels), dtype = bool)

    dist = pairwise_distances(embeddings)
    shift = float(dist.data.max()) + 1.0

    hardest_positive = max_axis(dist * positive, 1)
    hardest_negative = min_axis(dist + same * shift, 1)

    return mean(relu(hardest_positive - hardest_negative + margin))

def multi_head_loss(outs, labels, cfg):
    """
    Sum of weighted CE + triplet over the supervised heads. Heads with weight 0 are not evaluated

    :param outs: stage outputs with logits
    :param labels: (B,)
    :param cfg: loss settings

    :type outs: StageOutputs
    :type labels: numpy.ndarray
    :type cfg: LossConfig

    :rtype: LossReport
    """
    features = outs.features()
    total = None
    heads, terms = {}, {}

    for name in head_names:
        weight = cfg.head_weights.get(name, 1.0)

        if name not in features or weight == 0:
            heads[name] = 0.0
            continue

        ce = ce_label_smoothing(outs.logits[name], labels, cfg.smoothing, cfg.smoothing_variant)
        triplet = batch_hard_triplet(features[name], labels, cfg.margin)
        value = (ce * cfg.ce_weight + triplet * cfg.triplet_weight) * weight

        terms[f"{name}.ce"] = ce.item()
        terms[f"{name}.triplet"] = triplet.item()
        heads[name] = value.item()

        total = value if total is None else total + value

    if total is None:
        raise ConfigError("every loss head is disabled or weighted zero")

    return LossReport(total, heads, terms)
