"""Dataset, road, and panorama-pair generation.

Three generator profiles cover the experimental needs: `separable` keeps
star classes far apart in rubric score (easy to learn), `correlated`
draws a latent safety level and lets scores fall where they may (harder,
with boundary cases), and `imbalanced` skews the star prior so 1-star
roads are rare. Records are deterministic functions of (seed, index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geo import offset_latlon
from .attributes import (
    sample_scored_for_star,
    sample_scored_for_total,
    sample_unscored,
    star_from_aux,
    star_from_score,
)
from .scene import render_scene

PROFILES = ("separable", "correlated", "imbalanced")

# Mid-band score targets keep a margin of at least 3 points between
# adjacent star classes.
SEPARABLE_TOTALS = {1: (1, 2), 2: (5,), 3: (8,), 4: (11,), 5: (14, 15)}

# Star prior with 1-star roads rare (5.6%).
IMBALANCED_PRIOR = (0.056, 0.244, 0.30, 0.25, 0.15)

MAX_PAIR_SEPARATION_M = 15.24  # 50 feet


@dataclass
class PanoramaRecord:
    """One labeled panorama: the supervised training unit."""

    id: str
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    lat: float
    lon: float
    heading: float
    star: int
    aux: Dict[str, int]


@dataclass
class PairRecord:
    """Two nearby unlabeled panoramas rendered along the same road."""

    id: str
    image_a: np.ndarray
    image_b: np.ndarray
    separation_m: float
    road_id: str = ""


@dataclass(frozen=True)
class RoadSegment:
    """A straight synthetic road: anchor point, direction, and scene labels."""

    id: str
    lat: float
    lon: float
    heading: float
    length_m: float
    aux: Dict[str, int]
    bend_sign: int
    phase0: float

    def point_at(self, arc_m: float) -> Tuple[float, float]:
        north = arc_m * math.cos(math.radians(self.heading))
        east = arc_m * math.sin(math.radians(self.heading))
        return offset_latlon(self.lat, self.lon, north, east)


@dataclass(frozen=True)
class GeneratorConfig:
    profile: str = "separable"
    num_records: int = 1000
    height: int = 64
    width: int = 192
    seed: int = 0
    origin_lat: float = 40.0
    origin_lon: float = -88.0
    grid_m: float = 400.0
    jitter_m: float = 40.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.num_records < 1:
            raise ValueError("num_records must be positive")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")


def _sample_aux(profile: str, rng: np.random.Generator) -> Dict[str, int]:
    if profile == "separable":
        star = int(rng.integers(1, 6))
        scored = sample_scored_for_star(star, rng, totals=SEPARABLE_TOTALS[star])
    elif profile == "correlated":
        latent = rng.random()
        scored = sample_scored_for_total(int(round(latent * 16)), rng)
    else:  # imbalanced
        star = int(rng.choice(5, p=np.asarray(IMBALANCED_PRIOR))) + 1
        scored = sample_scored_for_star(star, rng)
    aux = dict(scored)
    aux.update(sample_unscored(rng))
    return aux


def generate_scene(seed: int, aux: Dict[str, int], height: int = 64, width: int = 192,
                   lat: float = 40.0, lon: float = -88.0, heading: float = 0.0,
                   record_id: str = "scene") -> PanoramaRecord:
    """Render one panorama from explicit attribute labels."""
    rng = np.random.default_rng([seed, 104729])
    image = render_scene(aux, height, width, rng)
    return PanoramaRecord(record_id, image, lat, lon, heading,
                          star_from_aux(aux), dict(aux))


def generate_dataset(config: GeneratorConfig) -> List[PanoramaRecord]:
    """All records for a config; record i depends only on (seed, i)."""
    side = math.ceil(math.sqrt(config.num_records))
    records = []
    for i in range(config.num_records):
        rng = np.random.default_rng([config.seed, i])
        row, col = divmod(i, side)
        jn, je = rng.uniform(-config.jitter_m, config.jitter_m, size=2)
        lat, lon = offset_latlon(config.origin_lat, config.origin_lon,
                                 row * config.grid_m + jn, col * config.grid_m + je)
        heading = float(rng.uniform(0.0, 360.0))
        aux = _sample_aux(config.profile, rng)
        image = render_scene(aux, config.height, config.width, rng)
        records.append(PanoramaRecord(f"r{i:05d}", image, lat, lon, heading,
                                      star_from_aux(aux), aux))
    return records


def jitter_heading(record: PanoramaRecord, rng: Optional[np.random.Generator] = None,
                   delta: Optional[float] = None) -> PanoramaRecord:
    """Training-time augmentation: circularly shift the panorama by a small
    random viewing-angle offset. Labels (and the stored travel-direction
    heading) are unchanged."""
    if delta is None:
        if rng is None:
            raise ValueError("need an rng when delta is not given")
        delta = float(rng.uniform(-5.0, 5.0))
    width = record.image.shape[1]
    shift = int(np.rint(delta / 360.0 * width))
    if shift == 0:
        return record
    return replace(record, image=np.roll(record.image, shift, axis=1))


def make_roads(n_roads: int, config: GeneratorConfig, seed: Optional[int] = None) -> List[RoadSegment]:
    """Synthetic straight roads carrying scene labels, for pair sampling."""
    if n_roads < 1:
        raise ValueError("n_roads must be positive")
    seed = config.seed if seed is None else seed
    side = math.ceil(math.sqrt(max(1, n_roads)))
    roads = []
    for i in range(n_roads):
        rng = np.random.default_rng([seed, 7777, i])
        row, col = divmod(i, side)
        lat, lon = offset_latlon(config.origin_lat - 1.0, config.origin_lon + 1.0,
                                 row * config.grid_m, col * config.grid_m)
        roads.append(RoadSegment(
            id=f"road{i:04d}",
            lat=lat, lon=lon,
            heading=float(rng.uniform(0.0, 360.0)),
            length_m=float(rng.uniform(150.0, 400.0)),
            aux=_sample_aux(config.profile, rng),
            bend_sign=1 if rng.random() < 0.5 else -1,
            phase0=float(rng.random()),
        ))
    return roads


def sample_pairs(roads: Sequence[RoadSegment], n_pairs: int, seed: int,
                 height: int = 64, width: int = 192) -> List[PairRecord]:
    """Panorama pairs at most 50 feet apart along a shared road.

    Both members render the same scene labels; viewpoint advance shows up
    as a stripe-phase shift plus independent pavement noise, so the two
    images are never identical.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if not roads:
        raise ValueError("need at least one road")
    pick = np.random.default_rng([seed, 331])
    pairs = []
    for k in range(n_pairs):
        road = roads[int(pick.integers(len(roads)))]
        arc_a = float(pick.uniform(0.0, max(1.0, road.length_m - MAX_PAIR_SEPARATION_M)))
        sep = float(pick.uniform(1.0, MAX_PAIR_SEPARATION_M))
        arc_b = arc_a + sep
        images = []
        for member, arc in enumerate((arc_a, arc_b)):
            rng = np.random.default_rng([seed, k, member])
            phase = (road.phase0 + arc / 30.0) % 1.0
            images.append(render_scene(road.aux, height, width, rng,
                                       bend_sign=road.bend_sign, phase=phase))
        pairs.append(PairRecord(f"p{k:05d}", images[0], images[1], sep, road.id))
    return pairs
