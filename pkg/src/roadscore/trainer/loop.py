"""Training loop: batch assembly, optimization, validation, checkpoints.

Six named configurations cover the ablation grid over attention pooling
and the three loss components. Training is deterministic given the seed;
a non-finite loss or gradient aborts the run and keeps the best
checkpoint seen so far.
"""

from __future__ import annotations

import contextlib
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor
from ..data.attributes import ALL_TASKS
from ..data.generate import PairRecord, PanoramaRecord
from ..data.splits import SplitManifest, class_histogram
from ..losses import (
    ClassWeights,
    LossWeights,
    batch_cramer,
    batch_cross_entropy,
    class_weights_from_histogram,
    l2_penalty,
    multitask_loss,
    total_loss,
    unsupervised_loss,
)
from ..model import NetworkConfig, PanoramaNetwork, save_checkpoint
from .adam import Adam
from .schedule import lr_multiplier

L2_SCALE = 0.0005
LOG_COLUMNS = ("iter", "L", "L_s1", "L_s2", "L_m", "L_u", "l2", "val_macro_acc")


@dataclass(frozen=True)
class AblationConfig:
    """One training configuration: attention on/off plus loss weights."""

    name: str
    attention: bool
    weights: LossWeights


ABLATIONS: Dict[str, AblationConfig] = {
    "baseline": AblationConfig("baseline", False, LossWeights(1, 100, 1.0, 0.0, 0.0)),
    "m1": AblationConfig("m1", True, LossWeights(1, 100, 1.0, 0.0, 0.0)),
    "m2": AblationConfig("m2", False, LossWeights(1, 100, 0.1, 1.0, 0.0)),
    "m3": AblationConfig("m3", True, LossWeights(1, 100, 1.0, 0.0, 0.001)),
    "m4": AblationConfig("m4", True, LossWeights(1, 100, 0.1, 1.0, 0.0)),
    "ours": AblationConfig("ours", True, LossWeights(1, 100, 0.1, 1.0, 0.001)),
}


class EpochSampler:
    """Without-replacement sampling; reshuffles at each epoch boundary."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("empty pool")
        self.n = n
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        while len(out) < k:
            if self._pos >= self.n:
                self._order = self.rng.permutation(self.n)
                self._pos = 0
            take = min(k - len(out), self.n - self._pos)
            out.extend(self._order[self._pos:self._pos + take])
            self._pos += take
        return np.array(out, dtype=np.int64)


@dataclass
class Batch:
    images: np.ndarray                      # (B, H, W, 3) float64, jittered
    star_labels: np.ndarray                 # (B,)
    aux_labels: Dict[str, np.ndarray]       # task -> (B,)
    pair_a: Optional[np.ndarray] = None     # (B, H, W, 3) float64
    pair_b: Optional[np.ndarray] = None


def _roll_image(image: np.ndarray, delta_deg: float) -> np.ndarray:
    shift = int(np.rint(delta_deg / 360.0 * image.shape[1]))
    return np.roll(image, shift, axis=1) if shift else image


def make_batch(records: Sequence[PanoramaRecord], sampler: EpochSampler,
               pairs: Sequence[PairRecord], pair_sampler: Optional[EpochSampler],
               rng: np.random.Generator, batch_size: int = 16,
               use_pairs: bool = True,
               pair_features: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
               ) -> Batch:
    """Sample one training batch: jittered supervised records plus, when the
    consistency loss is active, an equal number of unjittered pair images.

    When `pair_features` is given the pair slots carry precomputed feature
    maps instead of raw images; the caller forwards them from mid-trunk."""
    idx = sampler.take(batch_size)
    deltas = rng.uniform(-5.0, 5.0, size=batch_size)
    images = np.stack([
        _roll_image(records[i].image, d) for i, d in zip(idx, deltas)
    ]).astype(np.float64)
    star = np.array([records[i].star for i in idx], dtype=np.int64)
    aux = {}
    if records[idx[0]].aux:
        for name in records[idx[0]].aux:
            aux[name] = np.array([records[i].aux[name] for i in idx], dtype=np.int64)

    pair_a = pair_b = None
    if use_pairs:
        if not pairs:
            raise ValueError("consistency loss is active but the pair pool is empty")
        pidx = pair_sampler.take(batch_size)
        if pair_features is not None:
            pair_a = np.stack([pair_features[i][0] for i in pidx])
            pair_b = np.stack([pair_features[i][1] for i in pidx])
        else:
            pair_a = np.stack([pairs[i].image_a for i in pidx]).astype(np.float64)
            pair_b = np.stack([pairs[i].image_b for i in pidx]).astype(np.float64)
    return Batch(images, star, aux, pair_a, pair_b)


@contextlib.contextmanager
def inference_mode(net: PanoramaNetwork):
    """Temporarily stop gradient tracking so forward passes build no graph."""
    flags = [(p, p.requires_grad) for p in net.parameters()]
    for p, _ in flags:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, was in flags:
            p.requires_grad = was


def lenient_macro_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-class recall over the classes that appear in `labels`.

    The evaluator's strict metric refuses absent classes; for periodic
    validation on a small split, missing classes are simply skipped."""
    recalls = []
    for cls in np.unique(labels):
        mask = labels == cls
        recalls.append(float((predictions[mask] == cls).mean()))
    return 100.0 * float(np.mean(recalls))


def _predict_stars(net: PanoramaNetwork, images: List[np.ndarray],
                   chunk: int = 32) -> np.ndarray:
    out = []
    with inference_mode(net):
        for i in range(0, len(images), chunk):
            block = np.stack(images[i:i + chunk]).astype(np.float64)
            probs = net.predict_proba(block, "star")
            out.append(probs.argmax(axis=-1) + 1)
    return np.concatenate(out) if out else np.array([], dtype=np.int64)


def _cached_pair_features(net: PanoramaNetwork, pairs: Sequence[PairRecord],
                          n_blocks: int, chunk: int = 32,
                          ) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Push every pair image through the frozen block prefix once.

    Frozen blocks never change during a run, so their activations for the
    (unjittered) pair pool are constants; caching them removes most of the
    per-iteration cost of the consistency term."""
    images: List[np.ndarray] = []
    for p in pairs:
        images.append(p.image_a)
        images.append(p.image_b)
    feats = []
    with inference_mode(net):
        for i in range(0, len(images), chunk):
            block = np.stack(images[i:i + chunk]).astype(np.float64)
            feats.append(net.block_features(block, n_blocks).numpy())
    stacked = np.concatenate(feats)
    return [(stacked[2 * i], stacked[2 * i + 1]) for i in range(len(pairs))]


@dataclass
class TrainResult:
    net: PanoramaNetwork
    best_val_macro: float
    log_rows: List[Tuple]
    aborted: bool
    iterations_run: int
    class_weights: np.ndarray


def _atomic_write_text(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_log(rows: List[Tuple], path: str) -> None:
    lines = ["\t".join(LOG_COLUMNS)]
    for row in rows:
        cells = [str(row[0])]
        cells.extend(repr(float(v)) for v in row[1:7])
        cells.append("" if row[7] is None else repr(float(row[7])))
        lines.append("\t".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def train(config: AblationConfig,
          records: Sequence[PanoramaRecord],
          manifest: SplitManifest,
          pairs: Sequence[PairRecord] = (),
          net_config: Optional[NetworkConfig] = None,
          tasks=None,
          iterations: int = 1000,
          seed: int = 0,
          batch_size: int = 16,
          val_every: int = 250,
          class_weighting: bool = True,
          lr_backbone: float = 1e-4,
          lr_head: float = 1e-3,
          log_path: Optional[str] = None,
          checkpoint_dir: Optional[str] = None) -> TrainResult:
    """Run one training configuration end to end.

    The final conv block trains at `lr_backbone`, the mixing conv and all
    task heads at `lr_head`; earlier blocks stay frozen. Conv stages are
    standardized against the first train images before the first step
    (see PanoramaNetwork.calibrate). Both rates decay by 10x at 25/50/75%
    of `iterations`. Every `val_every` steps the star head is scored on
    the validation split and the best parameters are retained; those
    parameters are restored (and optionally saved) at the end.
    `class_weighting=False` drops the inverse-frequency weights on the
    supervised star losses, for measuring what the weighting buys."""
    if iterations < 1:
        raise ValueError("iterations must be positive")
    by_id = {r.id: r for r in records}
    train_records = [by_id[i] for i in manifest.train_ids]
    val_records = [by_id[i] for i in manifest.val_ids]
    if not train_records:
        raise ValueError("empty train split")

    use_pairs = config.weights.consistency > 0
    if use_pairs and not pairs:
        raise ValueError("config has a consistency term but no pairs were given")

    h, w = train_records[0].image.shape[:2]
    if net_config is None:
        net_config = NetworkConfig(input_height=h, input_width=w, input_channels=3,
                                   block_channels=(8, 16, 32, 32, 64),
                                   mid_channels=128)
    net_config = replace(net_config, use_attention=config.attention)
    net = PanoramaNetwork(tasks if tasks is not None else ALL_TASKS,
                          net_config, seed=seed)
    net.freeze_blocks(keep_final=1)
    calib = np.stack([r.image for r in train_records[:64]]).astype(np.float64)
    net.calibrate(calib)

    counts = class_histogram(manifest, records)
    cw = (class_weights_from_histogram(counts, int(counts.sum()))
          if class_weighting else ClassWeights.uniform(counts.size))

    optimizer = Adam([
        {"params": net.final_block_parameters(), "lr": lr_backbone, "name": "backbone"},
        {"params": net.head_parameters(), "lr": lr_head, "name": "head"},
    ])
    decay_params = [p for p in net.weight_decay_parameters() if p.requires_grad]
    aux_names = [t.name for t in net.tasks if t.name != "star"]

    sampler = EpochSampler(len(train_records), np.random.default_rng([seed, 17]))
    pair_sampler = EpochSampler(len(pairs), np.random.default_rng([seed, 19])) \
        if use_pairs else None
    jitter_rng = np.random.default_rng([seed, 23])

    n_frozen = len(net.blocks) - 1
    pair_features = (_cached_pair_features(net, pairs, n_frozen)
                     if use_pairs and n_frozen > 0 else None)

    lw = config.weights
    log_rows: List[Tuple] = []
    best_val = -1.0
    best_params: Optional[Dict[str, np.ndarray]] = None
    aborted = False
    iterations_run = 0

    for step in range(iterations):
        scale = lr_multiplier(step, iterations)
        batch = make_batch(train_records, sampler, pairs, pair_sampler,
                           jitter_rng, batch_size, use_pairs, pair_features)
        net.zero_grad()
        try:
            flat = net.forward_trunk(batch.images)
            wanted = ["star"] + (aux_names if lw.multitask > 0 else [])
            probs = net.task_probability_set(flat, wanted)
            star_probs = probs["star"]
            sw = cw.for_labels(batch.star_labels)
            l_s1 = batch_cross_entropy(star_probs, batch.star_labels, sw)
            l_s2 = batch_cramer(star_probs, batch.star_labels, sw)
            l_s = lw.star_ce * l_s1 + lw.star_cramer * l_s2

            if lw.multitask > 0:
                l_m = multitask_loss({n: probs[n] for n in aux_names},
                                     {n: batch.aux_labels[n] for n in aux_names})
            else:
                l_m = Tensor(0.0)

            if use_pairs:
                both = np.concatenate([batch.pair_a, batch.pair_b])
                pair_flat = net.forward_trunk(
                    both, from_block=n_frozen if pair_features is not None else 0)
                pair_probs = net.task_probabilities(pair_flat, "star")
                n_pairs = batch.pair_a.shape[0]
                l_u = unsupervised_loss(pair_probs[:n_pairs], pair_probs[n_pairs:])
            else:
                l_u = Tensor(0.0)

            reg = l2_penalty(decay_params, L2_SCALE)
            loss = total_loss(l_s, l_m, l_u, lw) + reg
            loss.backward()
            optimizer.step(lr_scale=scale)
        except FloatingPointError:
            aborted = True
            break

        iterations_run = step + 1
        val_macro = None
        if (step + 1) % val_every == 0 or step == iterations - 1:
            if val_records:
                preds = _predict_stars(net, [r.image for r in val_records])
                val_macro = lenient_macro_accuracy(
                    preds, np.array([r.star for r in val_records]))
                if val_macro > best_val:
                    best_val = val_macro
                    best_params = {k: p.data.copy()
                                   for k, p in net.named_parameters().items()}
        log_rows.append((step, loss.item(), l_s1.item(), l_s2.item(),
                         l_m.item(), l_u.item(), reg.item(), val_macro))

    if best_params is not None:
        for name, p in net.named_parameters().items():
            p.data = best_params[name]

    if log_path:
        write_log(log_rows, log_path)
    if checkpoint_dir:
        save_checkpoint(net, checkpoint_dir, extra={
            "config": config.name, "seed": seed, "iterations": iterations_run,
            "best_val_macro": best_val, "aborted": aborted,
        })
    return TrainResult(net, best_val, log_rows, aborted, iterations_run,
                       cw.w.copy())
