"""Test-set metrics and attention-map export.

Accuracy here is always macro-averaged: per-class recall, averaged over
classes, times 100.  That convention keeps rare classes visible, which is
the point of class weighting in the first place.  Argmax ties are broken
toward the lowest class index, so results are deterministic.
"""

import os
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .model.network import PanoramaNetwork
from .trainer.loop import inference_mode


def _check_labels(predictions, labels, num_classes: int):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError("predictions and labels must be 1-d and equal length")
    if labels.size == 0:
        raise ValueError("empty label set")
    for arr, what in ((predictions, "prediction"), (labels, "label")):
        if arr.min() < 1 or arr.max() > num_classes:
            raise ValueError(f"{what} outside 1..{num_classes}")
    return predictions, labels


def macro_accuracy(predictions, labels, num_classes: int) -> float:
    """Mean per-class recall in percent. Every class must appear in labels."""
    predictions, labels = _check_labels(predictions, labels, num_classes)
    recalls = []
    for c in range(1, num_classes + 1):
        mask = labels == c
        if not mask.any():
            raise ValueError(f"class {c} missing from labels; "
                             "per-class accuracy undefined")
        recalls.append(float((predictions[mask] == c).mean()))
    return 100.0 * float(np.mean(recalls))


@dataclass
class ConfusionMatrix:
    """Counts with rows = ground truth, columns = prediction."""

    counts: np.ndarray

    def normalized(self) -> np.ndarray:
        """Row-normalized view; empty rows stay all-zero."""
        row = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        safe = np.where(row > 0, row, 1.0)
        return self.counts / safe

    def diagonal_mean(self) -> float:
        return float(np.mean(np.diag(self.normalized())))


def confusion(predictions, labels, num_classes: int) -> ConfusionMatrix:
    predictions, labels = _check_labels(predictions, labels, num_classes)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels - 1, predictions - 1), 1)
    return ConfusionMatrix(counts)


def predict_labels(net: PanoramaNetwork, images, task: str = "star",
                   chunk: int = 32) -> np.ndarray:
    """Argmax class labels (1-based) for a stack of images."""
    out = []
    with inference_mode(net):
        for i in range(0, len(images), chunk):
            block = np.stack([np.asarray(img, dtype=np.float64)
                              for img in images[i:i + chunk]])
            probs = net.predict_proba(block, task=task)
            out.append(np.argmax(probs, axis=1) + 1)
    return np.concatenate(out)


def predict_probabilities(net: PanoramaNetwork, images, task: str = "star",
                          chunk: int = 32) -> np.ndarray:
    """Class probabilities for a stack of images, graph-free."""
    out = []
    with inference_mode(net):
        for i in range(0, len(images), chunk):
            block = np.stack([np.asarray(img, dtype=np.float64)
                              for img in images[i:i + chunk]])
            out.append(net.predict_proba(block, task=task))
    return np.concatenate(out)


def predict_all_labels(net: PanoramaNetwork, images,
                       chunk: int = 32) -> Dict[str, np.ndarray]:
    """Argmax labels for every task head in one trunk pass per chunk."""
    outs: Dict[str, list] = {t.name: [] for t in net.tasks}
    with inference_mode(net):
        for i in range(0, len(images), chunk):
            block = np.stack([np.asarray(img, dtype=np.float64)
                              for img in images[i:i + chunk]])
            flat = net.forward_trunk(block)
            for t in net.tasks:
                probs = net.task_probabilities(flat, t.name).data
                outs[t.name].append(np.argmax(probs, axis=1) + 1)
    return {name: np.concatenate(parts) for name, parts in outs.items()}


def analytic_random_macro(histogram) -> float:
    """Expected macro accuracy of prior-sampled guessing.

    Per-class recall equals that class's prior, so the macro average is
    always 100/K regardless of how skewed the prior is.
    """
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim != 1 or hist.size < 2 or hist.min() < 0 or hist.sum() <= 0:
        raise ValueError("histogram must be 1-d, nonnegative, nonzero")
    prior = hist / hist.sum()
    return 100.0 * float(prior.mean())


def random_baseline_trials(histogram, labels, trials: int = 10000,
                           seed: int = 0) -> np.ndarray:
    """Per-trial macro accuracies of predictions sampled from the prior."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hist = np.asarray(histogram, dtype=np.float64)
    k = hist.size
    prior = hist / hist.sum()
    _, labels = _check_labels(np.asarray(labels), labels, k)
    rng = np.random.default_rng(seed)
    preds = rng.choice(k, size=(trials, labels.size), p=prior) + 1
    per_class = []
    for c in range(1, k + 1):
        mask = labels == c
        if not mask.any():
            raise ValueError(f"class {c} missing from labels")
        per_class.append((preds[:, mask] == c).mean(axis=1))
    return 100.0 * np.mean(per_class, axis=0)


def random_baseline(histogram, labels, trials: int = 10000,
                    seed: int = 0) -> float:
    """Monte-Carlo macro accuracy of guessing from the label prior."""
    return float(random_baseline_trials(histogram, labels, trials, seed).mean())


@dataclass
class TaskReport:
    """One row of the per-task evaluation table."""

    task: str
    top1_macro: float
    random_macro: float
    pct_increase: float

    def __post_init__(self):
        gap = abs(self.pct_increase - (self.top1_macro - self.random_macro))
        if gap > 1e-9:
            raise ValueError("pct_increase must equal top1 - random")

    @classmethod
    def from_scores(cls, task: str, top1: float, rand: float) -> "TaskReport":
        return cls(task, top1, rand, top1 - rand)


def task_report(task: str, predictions, labels, num_classes: int,
                histogram, trials: int = 10000, seed: int = 0) -> TaskReport:
    top1 = macro_accuracy(predictions, labels, num_classes)
    rand = random_baseline(histogram, labels, trials=trials, seed=seed)
    return TaskReport.from_scores(task, top1, rand)


def write_task_reports(reports: Sequence[TaskReport], path: str):
    lines = ["task\ttop1_macro\trandom_macro\tpct_increase"]
    for r in reports:
        lines.append(f"{r.task}\t{r.top1_macro:.2f}\t{r.random_macro:.2f}"
                     f"\t{r.pct_increase:.2f}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def attention_heatmap(net: PanoramaNetwork, task: str,
                      path: Optional[str] = None,
                      upsample: int = 1) -> np.ndarray:
    """Softmax attention weights reshaped to the feature grid.

    Returns the raw weights (they sum to 1).  When a path is given the
    map is min-max normalized and written as an ASCII graymap.
    """
    weights = net.attention_map(task)
    h, w = net.config.feature_shape
    grid = weights.reshape(h, w)
    if path is not None:
        write_pgm(minmax_normalize(grid), path, upsample=upsample)
    return grid


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant map normalizes to all zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def upsample_nearest(values: np.ndarray, factor: int) -> np.ndarray:
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return np.repeat(np.repeat(values, factor, axis=0), factor, axis=1)


def write_pgm(values: np.ndarray, path: str, upsample: int = 1):
    """ASCII PGM (P2) from values in [0, 1]."""
    grid = upsample_nearest(np.asarray(values, dtype=np.float64), upsample)
    pixels = np.clip(np.rint(grid * 255), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    rows = "\n".join(" ".join(str(v) for v in row) for row in pixels)
    _atomic_write_text(path, f"P2\n{w} {h}\n255\n{rows}\n")


def write_ppm(rgb: np.ndarray, path: str):
    """ASCII PPM (P3) from a uint8 H x W x 3 array."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected uint8 H x W x 3")
    h, w, _ = rgb.shape
    rows = "\n".join(" ".join(str(v) for v in row.ravel()) for row in rgb)
    _atomic_write_text(path, f"P3\n{w} {h}\n255\n{rows}\n")


def render_overlay(image: np.ndarray, heatmap: np.ndarray,
                   alpha: float = 0.6) -> np.ndarray:
    """Blend a red attention overlay onto an image for visual checks."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    gh, gw = heatmap.shape
    if h % gh or w % gw:
        raise ValueError("image size must be a multiple of the heatmap grid")
    up = upsample_nearest(minmax_normalize(heatmap), h // gh)
    if up.shape != (h, w):
        up = np.repeat(up, w // up.shape[1], axis=1)
    weight = (alpha * up)[..., None]
    red = np.zeros_like(image)
    red[..., 0] = 1.0
    blended = image * (1 - weight) + red * weight
    return np.clip(np.rint(blended * 255), 0, 255).astype(np.uint8)


def left_fraction_mass(heatmap: np.ndarray, fraction: float = 1 / 3) -> float:
    """Share of attention mass in the leftmost columns of the grid."""
    w = heatmap.shape[1]
    cols = max(1, int(round(w * fraction)))
    total = float(heatmap.sum())
    return float(heatmap[:, :cols].sum()) / total


def _atomic_write_text(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
