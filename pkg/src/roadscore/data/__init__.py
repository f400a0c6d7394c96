from .attributes import (
    ALL_TASKS,
    AUX_TASK_NAMES,
    SCORED_ATTRIBUTES,
    STAR_BANDS,
    attribute_specs,
    safety_score,
    star_from_aux,
    star_from_score,
)
from .generate import (
    GeneratorConfig,
    PROFILES,
    PairRecord,
    PanoramaRecord,
    RoadSegment,
    generate_dataset,
    generate_scene,
    jitter_heading,
    make_roads,
    sample_pairs,
)
from .io import load_dataset, load_pairs, load_split, save_dataset, save_pairs, save_split
from .splits import SplitManifest, class_histogram, make_splits

__all__ = [
    "ALL_TASKS",
    "AUX_TASK_NAMES",
    "SCORED_ATTRIBUTES",
    "STAR_BANDS",
    "attribute_specs",
    "safety_score",
    "star_from_aux",
    "star_from_score",
    "GeneratorConfig",
    "PROFILES",
    "PairRecord",
    "PanoramaRecord",
    "RoadSegment",
    "generate_dataset",
    "generate_scene",
    "jitter_heading",
    "make_roads",
    "sample_pairs",
    "SplitManifest",
    "class_histogram",
    "make_splits",
    "load_dataset",
    "load_pairs",
    "load_split",
    "save_dataset",
    "save_pairs",
    "save_split",
]
