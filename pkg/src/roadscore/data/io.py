"""On-disk dataset layout.

A dataset directory holds `images/<id>.ften` (one tensor per record) and
`metadata.tsv` (id, location, heading, star, then one column per
attribute in canonical order). Pairs live under `pairs/` with a matching
`pairs.tsv`. Split manifests are JSON with the seed recorded. Text files
are written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import List, Optional

import numpy as np

from ..autodiff import load_tensor, save_tensor
from .attributes import AUX_TASK_NAMES
from .generate import PairRecord, PanoramaRecord
from .splits import SplitManifest

METADATA_COLUMNS = ["id", "lat", "lon", "heading", "star", *AUX_TASK_NAMES]


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


def save_dataset(records: List[PanoramaRecord], directory: str) -> None:
    images_dir = os.path.join(directory, "images")
    os.makedirs(images_dir, exist_ok=True)
    lines = ["\t".join(METADATA_COLUMNS)]
    for rec in records:
        save_tensor(os.path.join(images_dir, f"{rec.id}.ften"), rec.image)
        row = [rec.id, repr(rec.lat), repr(rec.lon), repr(rec.heading), str(rec.star)]
        row.extend(str(rec.aux[name]) for name in AUX_TASK_NAMES)
        lines.append("\t".join(row))
    _atomic_write_text(os.path.join(directory, "metadata.tsv"), "\n".join(lines) + "\n")


def load_dataset(directory: str, load_images: bool = True) -> List[PanoramaRecord]:
    meta_path = os.path.join(directory, "metadata.tsv")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no metadata table at {meta_path}")
    with open(meta_path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != METADATA_COLUMNS:
            raise ValueError(f"unexpected metadata columns: {header}")
        records = []
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            rec_id = parts[0]
            image = None
            if load_images:
                image = load_image(directory, rec_id)
            aux = {name: int(v) for name, v in zip(AUX_TASK_NAMES, parts[5:])}
            records.append(PanoramaRecord(
                id=rec_id, image=image,
                lat=float(parts[1]), lon=float(parts[2]), heading=float(parts[3]),
                star=int(parts[4]), aux=aux,
            ))
    return records


def load_image(directory: str, record_id: str) -> np.ndarray:
    data = load_tensor(os.path.join(directory, "images", f"{record_id}.ften"))
    return data.astype(np.float32)


def save_pairs(pairs: List[PairRecord], directory: str) -> None:
    pair_dir = os.path.join(directory, "pairs")
    os.makedirs(pair_dir, exist_ok=True)
    lines = ["\t".join(["id", "separation_m", "road_id"])]
    for pair in pairs:
        save_tensor(os.path.join(pair_dir, f"{pair.id}_a.ften"), pair.image_a)
        save_tensor(os.path.join(pair_dir, f"{pair.id}_b.ften"), pair.image_b)
        lines.append("\t".join([pair.id, repr(pair.separation_m), pair.road_id]))
    _atomic_write_text(os.path.join(directory, "pairs.tsv"), "\n".join(lines) + "\n")


def load_pairs(directory: str, load_images: bool = True) -> List[PairRecord]:
    table = os.path.join(directory, "pairs.tsv")
    if not os.path.exists(table):
        raise FileNotFoundError(f"no pair table at {table}")
    pair_dir = os.path.join(directory, "pairs")
    pairs = []
    with open(table) as fh:
        fh.readline()
        for line in fh:
            if not line.strip():
                continue
            pid, sep, road_id = line.rstrip("\n").split("\t")
            a = b = None
            if load_images:
                a = load_tensor(os.path.join(pair_dir, f"{pid}_a.ften")).astype(np.float32)
                b = load_tensor(os.path.join(pair_dir, f"{pid}_b.ften")).astype(np.float32)
            pairs.append(PairRecord(pid, a, b, float(sep), road_id))
    return pairs


def save_split(manifest: SplitManifest, path: str) -> None:
    payload = {
        "seed": manifest.seed,
        "train_ids": manifest.train_ids,
        "val_ids": manifest.val_ids,
        "test_ids": manifest.test_ids,
    }
    _atomic_write_text(path, json.dumps(payload, indent=2))


def load_split(path: str) -> SplitManifest:
    with open(path) as fh:
        payload = json.load(fh)
    return SplitManifest(
        train_ids=list(payload["train_ids"]),
        val_ids=list(payload["val_ids"]),
        test_ids=list(payload["test_ids"]),
        seed=int(payload["seed"]),
    )
