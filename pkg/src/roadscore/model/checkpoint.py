"""Checkpoint directories: one manifest plus one tensor file per parameter.

The manifest is written last so a half-written directory is never mistaken
for a checkpoint. Parameter payloads round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Optional, Tuple

import numpy as np

from ..autodiff import Tensor, load_tensor, save_tensor
from .network import NetworkConfig, PanoramaNetwork, TaskSpec

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


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


def save_checkpoint(net: PanoramaNetwork, directory: str,
                    extra: Optional[dict] = None) -> None:
    """Write the network's architecture and parameters under `directory`."""
    os.makedirs(directory, exist_ok=True)
    params = net.named_parameters()
    for name, tensor in params.items():
        save_tensor(os.path.join(directory, f"{name}.ften"), tensor.data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": net.config.to_dict(),
        "tasks": [{"name": t.name, "num_classes": t.num_classes} for t in net.tasks],
        "seed": net.seed,
        "parameters": list(params.keys()),
        "extra": extra or {},
    }
    _atomic_write_text(os.path.join(directory, MANIFEST_NAME),
                       json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(directory: str) -> Tuple[PanoramaNetwork, dict]:
    """Rebuild a network from a checkpoint directory; returns (net, extra)."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")

    config = NetworkConfig.from_dict(manifest["config"])
    tasks = [TaskSpec(t["name"], t["num_classes"]) for t in manifest["tasks"]]
    net = PanoramaNetwork(tasks, config, seed=manifest.get("seed", 0))

    params = net.named_parameters()
    listed = manifest["parameters"]
    if set(listed) != set(params.keys()):
        missing = set(params.keys()) - set(listed)
        surplus = set(listed) - set(params.keys())
        raise ValueError(f"checkpoint parameter set mismatch: "
                         f"missing {sorted(missing)}, surplus {sorted(surplus)}")
    for name, tensor in params.items():
        data = load_tensor(os.path.join(directory, f"{name}.ften"))
        if data.shape != tensor.data.shape:
            raise ValueError(f"parameter {name} has shape {data.shape}, "
                             f"expected {tensor.data.shape}")
        tensor.data = data
    return net, manifest.get("extra", {})
