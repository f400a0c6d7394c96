"""Roadway attribute schema and the star-rating rubric.

Twenty-three attributes are predicted as auxiliary classification tasks.
Ten of them are safety-relevant and contribute points to a single
additive score (label 1 is always the least protective level, so a
label's point contribution is simply label - 1). The total score, out of
a maximum of 16, maps through fixed bands to the 1..5 star rating:
higher score, safer road, more stars.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from ..model.network import TaskSpec


@dataclass(frozen=True)
class AttributeSpec:
    """One roadway attribute: label range and whether it scores points."""

    name: str
    num_classes: int
    scored: bool

    @property
    def max_points(self) -> int:
        return self.num_classes - 1 if self.scored else 0


# Scored attributes, in canonical order. Driver side is the left half of
# the panorama, passenger the right.
SCORED_ATTRIBUTES: Tuple[AttributeSpec, ...] = (
    AttributeSpec("median_type", 3, True),          # none / painted / physical barrier
    AttributeSpec("lane_width", 3, True),           # narrow / medium / wide
    AttributeSpec("shoulder_driver", 2, True),      # absent / paved
    AttributeSpec("shoulder_passenger", 2, True),
    AttributeSpec("sidewalk_driver", 2, True),      # absent / present
    AttributeSpec("sidewalk_passenger", 2, True),
    AttributeSpec("roadside_obj_driver", 3, True),  # severe / moderate / clear
    AttributeSpec("roadside_obj_passenger", 3, True),
    AttributeSpec("curvature", 3, True),            # sharp / moderate / straight
    AttributeSpec("road_condition", 3, True),       # poor / fair / good
)

UNSCORED_ATTRIBUTES: Tuple[AttributeSpec, ...] = (
    AttributeSpec("area_type", 2, False),                   # rural / urban
    AttributeSpec("intersection_channelization", 2, False),
    AttributeSpec("upgrade_cost", 3, False),
    AttributeSpec("land_use_driver", 4, False),
    AttributeSpec("land_use_passenger", 4, False),
    AttributeSpec("roadside_dist_driver", 4, False),        # clutter setback
    AttributeSpec("roadside_dist_passenger", 4, False),
    AttributeSpec("intersecting_volume", 7, False),
    AttributeSpec("intersection_quality", 3, False),
    AttributeSpec("num_lanes", 3, False),
    AttributeSpec("curve_quality", 3, False),
    AttributeSpec("vehicle_parking", 3, False),
    AttributeSpec("bicycle_facilities", 2, False),
)

ATTRIBUTES: Tuple[AttributeSpec, ...] = SCORED_ATTRIBUTES + UNSCORED_ATTRIBUTES
AUX_TASK_NAMES: Tuple[str, ...] = tuple(a.name for a in ATTRIBUTES)
ATTRIBUTE_BY_NAME: Dict[str, AttributeSpec] = {a.name: a for a in ATTRIBUTES}

MAX_SCORE = sum(a.max_points for a in ATTRIBUTES)  # 16

# Score bands for stars 1..5 (inclusive ranges).
STAR_BANDS: Tuple[Tuple[int, int], ...] = ((0, 3), (4, 6), (7, 9), (10, 12), (13, 16))

STAR_TASK = TaskSpec("star", 5)


def attribute_specs() -> List[TaskSpec]:
    """All 24 prediction tasks: the star rating plus every attribute."""
    return [STAR_TASK] + [TaskSpec(a.name, a.num_classes) for a in ATTRIBUTES]


def safety_score(aux: Mapping[str, int]) -> int:
    """Total rubric points for a full attribute labeling."""
    score = 0
    for a in SCORED_ATTRIBUTES:
        label = aux[a.name]
        if not 1 <= label <= a.num_classes:
            raise ValueError(f"{a.name} label {label} out of range 1..{a.num_classes}")
        score += label - 1
    return score


def star_from_score(score: int) -> int:
    if not 0 <= score <= MAX_SCORE:
        raise ValueError(f"score {score} out of range 0..{MAX_SCORE}")
    for star, (lo, hi) in enumerate(STAR_BANDS, start=1):
        if lo <= score <= hi:
            return star
    raise AssertionError("unreachable: bands cover 0..16")


def star_from_aux(aux: Mapping[str, int]) -> int:
    return star_from_score(safety_score(aux))


# ---------------------------------------------------------------------------
# Sampling attribute combinations with a prescribed total score.
#
# ways[i][t] counts the labelings of scored attributes i.. that contribute
# exactly t points; sampling walks the table front to back, which draws
# uniformly from all combinations with the requested total.

def _build_ways() -> np.ndarray:
    n = len(SCORED_ATTRIBUTES)
    ways = np.zeros((n + 1, MAX_SCORE + 1), dtype=np.int64)
    ways[n][0] = 1
    for i in range(n - 1, -1, -1):
        m = SCORED_ATTRIBUTES[i].max_points
        for t in range(MAX_SCORE + 1):
            ways[i][t] = sum(ways[i + 1][t - v] for v in range(min(m, t) + 1))
    return ways


_WAYS = _build_ways()


def combinations_with_score(total: int) -> int:
    """How many scored labelings produce the given total."""
    if not 0 <= total <= MAX_SCORE:
        return 0
    return int(_WAYS[0][total])


def sample_scored_for_total(total: int, rng: np.random.Generator) -> Dict[str, int]:
    """Uniform draw from the scored labelings with exactly `total` points."""
    if combinations_with_score(total) == 0:
        raise ValueError(f"no attribute combination scores {total}")
    labels: Dict[str, int] = {}
    remaining = total
    for i, attr in enumerate(SCORED_ATTRIBUTES):
        choices = range(min(attr.max_points, remaining) + 1)
        weights = np.array([_WAYS[i + 1][remaining - v] for v in choices], dtype=np.float64)
        v = int(rng.choice(len(weights), p=weights / weights.sum()))
        labels[attr.name] = v + 1
        remaining -= v
    assert remaining == 0
    return labels


def sample_scored_for_star(star: int, rng: np.random.Generator,
                           totals: Sequence[int] = ()) -> Dict[str, int]:
    """Uniform draw over combinations whose score falls in the star's band
    (or is one of `totals`, which must all lie inside the band)."""
    lo, hi = STAR_BANDS[star - 1]
    candidates = list(totals) if totals else list(range(lo, hi + 1))
    for t in candidates:
        if not lo <= t <= hi:
            raise ValueError(f"total {t} outside the star-{star} band {lo}..{hi}")
    weights = np.array([combinations_with_score(t) for t in candidates], dtype=np.float64)
    total = candidates[int(rng.choice(len(candidates), p=weights / weights.sum()))]
    return sample_scored_for_total(total, rng)


def sample_unscored(rng: np.random.Generator) -> Dict[str, int]:
    """Independent uniform labels for every non-scored attribute."""
    return {a.name: int(rng.integers(1, a.num_classes + 1)) for a in UNSCORED_ATTRIBUTES}


ALL_TASKS = attribute_specs()
