"""Dataset splitting with stratification and spatial separation.

Test records sit at least 300 m from every train record; violators are
reassigned to train until the constraint holds. Validation is carved out
of train (about 2%, stratified, at least one record per class).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..geo import EARTH_RADIUS_M
from .generate import PanoramaRecord


@dataclass
class SplitManifest:
    train_ids: List[str]
    val_ids: List[str]
    test_ids: List[str]
    seed: int

    def __post_init__(self):
        overlap = (set(self.train_ids) & set(self.val_ids)) | \
                  (set(self.train_ids) & set(self.test_ids)) | \
                  (set(self.val_ids) & set(self.test_ids))
        if overlap:
            raise ValueError(f"splits overlap on ids: {sorted(overlap)[:5]}")


def _pairwise_distances_m(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Haversine distances between two coordinate sets, (len(a), len(b))."""
    p_a, p_b = np.radians(lat_a)[:, None], np.radians(lat_b)[None, :]
    dl = np.radians(lon_a)[:, None] - np.radians(lon_b)[None, :]
    dp = p_a - p_b
    h = np.sin(dp / 2) ** 2 + np.cos(p_a) * np.cos(p_b) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def make_splits(records: Sequence[PanoramaRecord], seed: int,
                test_fraction: float = 0.1, val_fraction: float = 0.02,
                min_separation_m: float = 300.0) -> SplitManifest:
    """Stratified train/val/test ids with the spatial separation rule."""
    by_star: Dict[int, List[PanoramaRecord]] = {s: [] for s in range(1, 6)}
    for rec in records:
        by_star.setdefault(rec.star, []).append(rec)
    for star, group in sorted(by_star.items()):
        if 0 < len(group) < 10:
            raise ValueError(f"class {star} has only {len(group)} records; "
                             f"need at least 10 to stratify")
    rng = np.random.default_rng(seed)

    train: List[PanoramaRecord] = []
    test: List[PanoramaRecord] = []
    for star in sorted(by_star):
        group = sorted(by_star[star], key=lambda r: r.id)
        if not group:
            continue
        order = rng.permutation(len(group))
        n_test = int(round(test_fraction * len(group)))
        for j, idx in enumerate(order):
            (test if j < n_test else train).append(group[idx])

    # Spatial rule: any test record within min_separation_m of a train
    # record moves to train. Moving records grows train, so iterate to a
    # fixed point.
    while test:
        t_lat = np.array([r.lat for r in train])
        t_lon = np.array([r.lon for r in train])
        s_lat = np.array([r.lat for r in test])
        s_lon = np.array([r.lon for r in test])
        dists = _pairwise_distances_m(s_lat, s_lon, t_lat, t_lon)
        close = dists.min(axis=1) < min_separation_m if train else \
            np.zeros(len(test), dtype=bool)
        if not close.any():
            break
        train.extend(r for r, c in zip(test, close) if c)
        test = [r for r, c in zip(test, close) if not c]

    # Validation: a stratified slice of train, at least one per class.
    val: List[PanoramaRecord] = []
    remaining: List[PanoramaRecord] = []
    train_by_star: Dict[int, List[PanoramaRecord]] = {}
    for rec in train:
        train_by_star.setdefault(rec.star, []).append(rec)
    for star in sorted(train_by_star):
        group = sorted(train_by_star[star], key=lambda r: r.id)
        order = rng.permutation(len(group))
        n_val = max(1, int(round(val_fraction * len(group))))
        for j, idx in enumerate(order):
            (val if j < n_val else remaining).append(group[idx])

    return SplitManifest(
        train_ids=sorted(r.id for r in remaining),
        val_ids=sorted(r.id for r in val),
        test_ids=sorted(r.id for r in test),
        seed=seed,
    )


def class_histogram(manifest: SplitManifest, records: Sequence[PanoramaRecord]) -> np.ndarray:
    """Star counts over the train split, classes 1..5."""
    stars = {r.id: r.star for r in records}
    counts = np.zeros(5, dtype=np.int64)
    for rid in manifest.train_ids:
        if rid not in stars:
            raise KeyError(f"manifest id {rid} not among the records")
        counts[stars[rid] - 1] += 1
    return counts
