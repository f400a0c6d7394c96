from .network import NetworkConfig, PanoramaNetwork, TaskSpec
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "NetworkConfig",
    "PanoramaNetwork",
    "TaskSpec",
    "load_checkpoint",
    "save_checkpoint",
]
