from .adam import Adam
from .schedule import lr_multiplier
from .loop import (
    ABLATIONS,
    AblationConfig,
    Batch,
    EpochSampler,
    TrainResult,
    make_batch,
    train,
)

__all__ = [
    "ABLATIONS",
    "AblationConfig",
    "Adam",
    "Batch",
    "EpochSampler",
    "TrainResult",
    "lr_multiplier",
    "make_batch",
    "train",
]
