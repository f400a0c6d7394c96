"""Safety factors: from star distributions to edge cost multipliers.

A 5-star road travels at face value; lower expected ratings inflate the
edge cost linearly, up to doubling at 1 star when alpha is 1:

    factor = 1 + alpha * (5 - E[star]) / 4

Factor files store the alpha=1 values; queries rescale them on the fly,
so one scored graph serves every alpha. Edges nothing snapped to keep
factor 1.
"""

import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geo import haversine_m
from ..losses import CategoricalDistribution
from .graph import RoadGraph

SNAP_RADIUS_M = 30.0


def star_to_factor(distribution: CategoricalDistribution, alpha: float) -> float:
    if distribution.k != 5:
        raise ValueError("star distributions have 5 classes")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return 1.0 + alpha * (5.0 - distribution.expectation()) / 4.0


def rescale_factor(factor_at_one: float, alpha: float) -> float:
    """Turn a stored alpha=1 factor into the factor for another alpha."""
    return 1.0 + alpha * (factor_at_one - 1.0)


def factor_to_star(factor_at_one: float) -> float:
    """Invert the alpha=1 mapping back to an expected star value."""
    return 5.0 - 4.0 * (factor_at_one - 1.0)


class SafetyFactorMap:
    """Edge-id to positive factor; missing edges behave as factor 1."""

    def __init__(self, factors: Optional[Dict[str, float]] = None):
        factors = dict(factors or {})
        for edge_id, value in factors.items():
            if not value > 0:
                raise ValueError(f"factor for edge {edge_id!r} must be positive")
        self.factors = factors

    def get(self, edge_id: str) -> float:
        return self.factors.get(edge_id, 1.0)

    def rescaled(self, alpha: float) -> "SafetyFactorMap":
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        return SafetyFactorMap({k: rescale_factor(v, alpha)
                                for k, v in self.factors.items()})

    def __len__(self):
        return len(self.factors)


# -- snapping model predictions onto edges -----------------------------------

@dataclass
class PanoramaPrediction:
    id: str
    lat: float
    lon: float
    probs: np.ndarray  # 5 star probabilities

    def expected_star(self) -> float:
        return CategoricalDistribution(self.probs).expectation()


def _point_segment_m(lat, lon, a, b) -> float:
    """Distance from a point to a geo segment via a local flat projection."""
    scale = math.cos(math.radians(lat))
    ax, ay = (a[1] - lon) * scale, a[0] - lat
    bx, by = (b[1] - lon) * scale, b[0] - lat
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, -(ax * dx + ay * dy) / denom))
    px, py = ax + t * dx, ay + t * dy
    deg = math.hypot(px, py)
    return deg * math.pi / 180.0 * 6371000.0


def nearest_edge(graph: RoadGraph, lat: float, lon: float) -> Tuple[Optional[str], float]:
    """Closest edge id and its distance in meters (None for empty graphs)."""
    best_id, best_d = None, float("inf")
    for edge_id in sorted(graph.edges):
        pts = graph.edge_geometry(edge_id)
        for a, b in zip(pts[:-1], pts[1:]):
            d = _point_segment_m(lat, lon, a, b)
            if d < best_d:
                best_id, best_d = edge_id, d
    return best_id, best_d


def edge_expected_stars(graph: RoadGraph,
                        predictions: Sequence[PanoramaPrediction],
                        radius_m: float = SNAP_RADIUS_M) -> Dict[str, float]:
    """Mean expected star of the predictions snapped to each edge."""
    sums: Dict[str, List[float]] = {}
    for pred in predictions:
        edge_id, dist = nearest_edge(graph, pred.lat, pred.lon)
        if edge_id is None or dist > radius_m:
            continue
        sums.setdefault(edge_id, []).append(pred.expected_star())
    return {k: float(np.mean(v)) for k, v in sorted(sums.items())}


def factors_from_predictions(graph: RoadGraph,
                             predictions: Sequence[PanoramaPrediction],
                             radius_m: float = SNAP_RADIUS_M) -> SafetyFactorMap:
    """Alpha=1 factor map from snapped panorama predictions."""
    stars = edge_expected_stars(graph, predictions, radius_m=radius_m)
    return SafetyFactorMap({edge_id: 1.0 + (5.0 - star) / 4.0
                            for edge_id, star in stars.items()})


# -- file IO ----------------------------------------------------------------

FACTOR_HEADER = ["edge_id", "factor"]
PREDICTION_HEADER = ["id", "lat", "lon", "p1", "p2", "p3", "p4", "p5"]


def save_factors(factors: SafetyFactorMap, path: str):
    lines = ["\t".join(FACTOR_HEADER)]
    for edge_id in sorted(factors.factors):
        lines.append(f"{edge_id}\t{factors.factors[edge_id]!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_factors(path: str) -> SafetyFactorMap:
    rows = _read_rows(path, FACTOR_HEADER)
    out = {}
    for row in rows:
        if len(row) != 2 or row[0] in out:
            raise ValueError(f"{path}: bad or duplicate row {row!r}")
        out[row[0]] = float(row[1])
    return SafetyFactorMap(out)


def save_predictions(predictions: Sequence[PanoramaPrediction], path: str):
    lines = ["\t".join(PREDICTION_HEADER)]
    for p in predictions:
        probs = "\t".join(repr(float(v)) for v in p.probs)
        lines.append(f"{p.id}\t{p.lat!r}\t{p.lon!r}\t{probs}")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_predictions(path: str) -> List[PanoramaPrediction]:
    rows = _read_rows(path, PREDICTION_HEADER)
    out = []
    for row in rows:
        if len(row) != 8:
            raise ValueError(f"{path}: bad row {row!r}")
        out.append(PanoramaPrediction(
            id=row[0], lat=float(row[1]), lon=float(row[2]),
            probs=np.array([float(v) for v in row[3:]])))
    return out


def _read_rows(path: str, header: List[str]) -> List[List[str]]:
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0].split("\t") != header:
        raise ValueError(f"{path}: expected header {chr(9).join(header)!r}")
    return [line.split("\t") for line in lines[1:]]


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
