"""Loss terms for star-rating training and their weighted composition.

The total objective is a weighted sum of a supervised star-rating term
(cross-entropy plus a squared-CDF-distance regression term), an auxiliary
multi-task cross-entropy sum, and an unsupervised prediction-consistency
term over panorama pairs. Labels are 1-based throughout (stars 1..5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Tensor

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class CategoricalDistribution:
    """Probability vector over K ordered labels (K >= 2)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError(f"need a 1-d vector of K >= 2 probabilities, got shape {probs.shape}")
        if (probs < 0).any():
            raise ValueError("probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum():.12f}, not 1")

    @property
    def k(self) -> int:
        return self.probs.size

    def expectation(self) -> float:
        """Expected label under 1-based indexing."""
        return float(np.dot(self.probs, np.arange(1, self.k + 1)))

    def argmax_label(self) -> int:
        """Most likely label; ties break toward the lowest index."""
        return int(np.argmax(self.probs)) + 1

    @classmethod
    def one_hot(cls, label: int, k: int) -> "CategoricalDistribution":
        probs = np.zeros(k)
        probs[label - 1] = 1.0
        return cls(probs)


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights, 1-based like the labels they rebalance."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if (w <= 0).any():
            raise ValueError("class weights must be positive")

    def for_labels(self, labels: np.ndarray) -> np.ndarray:
        return self.w[np.asarray(labels) - 1]

    @classmethod
    def uniform(cls, k: int) -> "ClassWeights":
        return cls(np.ones(k))


def class_weights_from_histogram(counts: Sequence[int], n: int) -> ClassWeights:
    """weight(l) = n / (K * count(l)); balanced counts give all-ones."""
    counts = np.asarray(counts, dtype=np.int64)
    if (counts <= 0).any():
        bad = int(np.argmin(counts)) + 1
        raise ValueError(f"class {bad} has zero samples; weight undefined")
    if int(counts.sum()) != int(n):
        raise ValueError(f"histogram sums to {counts.sum()}, expected n={n}")
    k = counts.size
    return ClassWeights(n / (k * counts.astype(np.float64)))


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the loss components and their composition."""

    star_ce: float = 1.0        # cross-entropy inside the supervised term
    star_cramer: float = 100.0  # CDF-distance inside the supervised term
    supervised: float = 0.1
    multitask: float = 1.0
    consistency: float = 0.001

    def __post_init__(self):
        for name in ("star_ce", "star_cramer", "supervised", "multitask", "consistency"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


REFERENCE_WEIGHTS = LossWeights(1.0, 100.0, 0.1, 1.0, 0.001)


# ---------------------------------------------------------------------------
# helpers


def _as_prob_tensor(value) -> Tensor:
    if isinstance(value, CategoricalDistribution):
        return Tensor(value.probs)
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def one_hot(labels: Sequence[int], k: int) -> np.ndarray:
    """Rows of one-hot targets for 1-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 1 or labels.max() > k:
        raise ValueError(f"labels must lie in 1..{k}, got range [{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


# ---------------------------------------------------------------------------
# single-sample forms


def cross_entropy(pred, label: int, weight: float = 1.0) -> Tensor:
    """-weight * log(pred[label]), with the probability floored at 1e-12."""
    probs = _as_prob_tensor(pred)
    k = probs.shape[-1]
    if not 1 <= label <= k:
        raise ValueError(f"label {label} out of range 1..{k}")
    target = one_hot([label], k)[0]
    picked = (probs * target).sum()
    return -(weight * picked.clip_min(LOG_FLOOR).log())


def cramer(pred, target, weight: float = 1.0) -> Tensor:
    """weight * sum_k (F(pred)_k - F(target)_k)^2 over the class index."""
    p = _as_prob_tensor(pred)
    q = _as_prob_tensor(target)
    if p.shape != q.shape:
        raise ValueError(f"distribution lengths differ: {p.shape} vs {q.shape}")
    return weight * (p - q).cumsum(axis=-1).square().sum()


# ---------------------------------------------------------------------------
# batched forms (used by the trainer; spec-level ops are their means)


def batch_cross_entropy(probs: Tensor, labels: Sequence[int],
                        sample_weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over the batch of -w_i * log(probs_i[label_i])."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    targets = one_hot(labels, probs.shape[-1])
    picked = (probs * targets).sum(axis=-1).clip_min(LOG_FLOOR).log()
    if sample_weights is not None:
        picked = picked * np.asarray(sample_weights, dtype=np.float64)
    return -(picked.mean())


def batch_cramer(probs: Tensor, labels: Sequence[int],
                 sample_weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over the batch of w_i * ||F(probs_i) - F(onehot(label_i))||^2."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    targets = one_hot(labels, probs.shape[-1])
    dist = (probs - targets).cumsum(axis=-1).square().sum(axis=-1)
    if sample_weights is not None:
        dist = dist * np.asarray(sample_weights, dtype=np.float64)
    return dist.mean()


def supervised_loss(probs: Tensor, labels: Sequence[int],
                    class_weights: Optional[ClassWeights] = None,
                    star_ce: float = 1.0, star_cramer: float = 100.0) -> Tensor:
    """Weighted cross-entropy plus weighted CDF-distance, combined per batch mean."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty batch")
    sw = class_weights.for_labels(labels) if class_weights is not None else None
    ce = batch_cross_entropy(probs, labels, sw)
    cr = batch_cramer(probs, labels, sw)
    return star_ce * ce + star_cramer * cr


def multitask_loss(predictions: Mapping[str, Tensor],
                   labels: Mapping[str, Sequence[int]]) -> Tensor:
    """Unweighted sum over tasks of the batch-mean cross-entropy."""
    if set(predictions.keys()) != set(labels.keys()):
        missing = set(predictions) ^ set(labels)
        raise ValueError(f"prediction/label task sets differ on: {sorted(missing)}")
    if not predictions:
        raise ValueError("no tasks given")
    total = None
    for name in sorted(predictions.keys()):
        term = batch_cross_entropy(predictions[name], labels[name])
        total = term if total is None else total + term
    return total


def unsupervised_loss(probs_a: Union[Tensor, Sequence], probs_b: Optional[Tensor] = None) -> Tensor:
    """Mean squared CDF distance between paired predictions.

    Accepts either two batched (N, K) tensors or a list of (a, b) pairs.
    """
    if probs_b is None:
        pairs = list(probs_a)
        if not pairs:
            raise ValueError("empty pair set")
        total = None
        for a, b in pairs:
            term = cramer(a, b)
            total = term if total is None else total + term
        return (1.0 / len(pairs)) * total
    if probs_a.shape != probs_b.shape:
        raise ValueError(f"pair batches differ in shape: {probs_a.shape} vs {probs_b.shape}")
    if probs_a.shape[0] == 0:
        raise ValueError("empty pair set")
    return (probs_a - probs_b).cumsum(axis=-1).square().sum(axis=-1).mean()


def total_loss(supervised: Tensor, multitask: Tensor, consistency: Tensor,
               weights: LossWeights) -> Tensor:
    """Weighted sum of the three components; a zero weight removes a term exactly."""
    parts = {"supervised": supervised, "multitask": multitask, "consistency": consistency}
    for name, part in parts.items():
        if not math.isfinite(part.item()):
            raise FloatingPointError(f"{name} loss is not finite: {part.item()}")
    return (weights.supervised * supervised
            + weights.multitask * multitask
            + weights.consistency * consistency)


def l2_penalty(params: Iterable[Tensor], scale: float = 0.0005) -> Tensor:
    """scale * sum of squared entries over the given parameter tensors."""
    total = None
    for p in params:
        term = p.square().sum()
        total = term if total is None else total + term
    if total is None:
        return Tensor(0.0)
    return scale * total
