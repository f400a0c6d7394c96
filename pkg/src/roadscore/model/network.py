"""Multi-task convolutional network over road panoramas.

A shared stack of conv blocks (3x3 conv, ReLU, 2x2 max pool) feeds a 1x1
mixing convolution, then each prediction task pools the feature map with
its own learned spatial attention (softmax over positions) and applies a
small per-task classifier. Attention logits start at zero, which makes
the pooling exactly global average pooling until training moves them.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import Tensor, stack


@dataclass(frozen=True)
class TaskSpec:
    """One classification task: a name and its number of classes."""

    name: str
    num_classes: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("task name must be nonempty")
        if self.num_classes < 2:
            raise ValueError(f"task {self.name!r} needs >= 2 classes, got {self.num_classes}")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture sizes; defaults match the full-resolution setup."""

    input_height: int = 224
    input_width: int = 960
    input_channels: int = 3
    block_channels: Tuple[int, ...] = (16, 32, 64, 64, 128)
    mid_channels: int = 512
    use_attention: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if not self.block_channels:
            raise ValueError("need at least one conv block")
        if any(c < 1 for c in self.block_channels):
            raise ValueError("block channel counts must be positive")
        if self.mid_channels < 1:
            raise ValueError("mid_channels must be positive")
        factor = 2 ** len(self.block_channels)
        if self.input_height % factor or self.input_width % factor:
            raise ValueError(
                f"input {self.input_height}x{self.input_width} not divisible by the "
                f"total pooling factor {factor}"
            )

    @property
    def feature_shape(self) -> Tuple[int, int]:
        factor = 2 ** len(self.block_channels)
        return self.input_height // factor, self.input_width // factor

    @property
    def num_positions(self) -> int:
        h, w = self.feature_shape
        return h * w

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "input_channels": self.input_channels,
            "block_channels": list(self.block_channels),
            "mid_channels": self.mid_channels,
            "use_attention": self.use_attention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            input_height=d["input_height"],
            input_width=d["input_width"],
            input_channels=d["input_channels"],
            block_channels=tuple(d["block_channels"]),
            mid_channels=d["mid_channels"],
            use_attention=d["use_attention"],
        )


class _ConvBlock:
    """3x3 same-padding conv + ReLU + 2x2 max pool."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        scale = np.sqrt(2.0 / (3 * 3 * cin))
        self.weight = Tensor(rng.normal(0.0, scale, (3, 3, cin, cout)), requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x.conv2d(self.weight, self.bias).relu().max_pool2d(2)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


class _TaskHead:
    """Per-task attention pooling plus a linear classifier."""

    def __init__(self, spec: TaskSpec, channels: int, positions: int,
                 use_attention: bool, rng: np.random.Generator):
        self.spec = spec
        self.use_attention = use_attention
        # Small noise instead of zeros: exact zeros make every head start as
        # plain average pooling, a saddle that side-sensitive tasks escape
        # only on lucky seeds.
        self.attention = (
            Tensor(0.5 * rng.standard_normal(positions), requires_grad=True)
            if use_attention else None
        )
        bound = 1.0 / np.sqrt(channels)
        self.weight = Tensor(rng.uniform(-bound, bound, (channels, spec.num_classes)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(spec.num_classes), requires_grad=True)

    def pool(self, flat: Tensor) -> Tensor:
        """(N, P, C) feature positions -> (N, C) pooled descriptor."""
        if self.attention is None:
            return flat.mean(axis=1)
        return flat.position_pool(self.attention.softmax(axis=-1))

    def classify(self, pooled: Tensor) -> Tensor:
        logits = pooled @ self.weight + self.bias
        return logits.softmax(axis=-1)

    def __call__(self, flat: Tensor) -> Tensor:
        return self.classify(self.pool(flat))

    def parameters(self) -> List[Tensor]:
        params = [self.weight, self.bias]
        if self.attention is not None:
            params.append(self.attention)
        return params


class PanoramaNetwork:
    """The full multi-task model: shared trunk, per-task attention heads."""

    def __init__(self, tasks: Sequence[TaskSpec], config: Optional[NetworkConfig] = None,
                 seed: int = 0):
        self.config = config or NetworkConfig()
        self.tasks = list(tasks)
        if not self.tasks:
            raise ValueError("need at least one task")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate task names: {names}")
        self.seed = seed

        rng = np.random.default_rng(seed)
        chans = [self.config.input_channels, *self.config.block_channels]
        self.blocks = [_ConvBlock(chans[i], chans[i + 1], rng) for i in range(len(chans) - 1)]
        last = chans[-1]
        scale = np.sqrt(2.0 / last)
        self.mid_weight = Tensor(
            rng.normal(0.0, scale, (1, 1, last, self.config.mid_channels)), requires_grad=True
        )
        self.mid_bias = Tensor(np.zeros(self.config.mid_channels), requires_grad=True)
        self.heads: "OrderedDict[str, _TaskHead]" = OrderedDict()
        for spec in self.tasks:
            self.heads[spec.name] = _TaskHead(
                spec, self.config.mid_channels, self.config.num_positions,
                self.config.use_attention, rng,
            )

    # -- forward ---------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        c = self.config
        expected = (c.input_height, c.input_width, c.input_channels)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ValueError(f"expected input (N, {expected[0]}, {expected[1]}, "
                             f"{expected[2]}), got {x.shape}")
        return x

    def block_features(self, x: Union[np.ndarray, Tensor],
                       n_blocks: int) -> Tensor:
        """Run only the first `n_blocks` conv blocks; returns the raw
        (N, h, w, c) feature map. Useful for caching the frozen prefix."""
        if not 0 <= n_blocks <= len(self.blocks):
            raise ValueError(f"n_blocks must be in [0, {len(self.blocks)}]")
        if isinstance(x, Tensor):
            t = x
        else:
            t = Tensor(self._check_input(x))
        for block in self.blocks[:n_blocks]:
            t = block(t)
        return t

    def forward_trunk(self, x: Union[np.ndarray, Tensor],
                      from_block: int = 0) -> Tensor:
        """Images (N, H, W, C) -> feature positions (N, P, mid_channels).

        `from_block` resumes mid-trunk: the input is then the feature map
        that `block_features(x, from_block)` would have produced."""
        if isinstance(x, Tensor):
            t = x
        elif from_block > 0:
            t = Tensor(np.asarray(x, dtype=np.float64))
        else:
            t = Tensor(self._check_input(x))
        for block in self.blocks[from_block:]:
            t = block(t)
        t = t.conv2d(self.mid_weight, self.mid_bias).relu()
        n = t.shape[0]
        return t.reshape(n, self.config.num_positions, self.config.mid_channels)

    def task_probabilities(self, flat: Tensor, name: str) -> Tensor:
        return self.heads[name](flat)

    def task_probability_set(self, flat: Tensor,
                             names: Optional[Sequence[str]] = None,
                             ) -> "OrderedDict[str, Tensor]":
        """Probabilities for several tasks off one feature stack.

        With attention enabled, all requested heads pool through a single
        stacked-weights pass instead of one contraction per head; without
        it, the global average is computed once and shared."""
        names = list(self.heads) if names is None else list(names)
        heads = [self.heads[n] for n in names]
        out: "OrderedDict[str, Tensor]" = OrderedDict()
        if not names:
            return out
        if self.config.use_attention:
            att = stack([h.attention for h in heads]).softmax(axis=-1)
            pooled_all = flat.position_pool(att)
            for i, (name, head) in enumerate(zip(names, heads)):
                out[name] = head.classify(pooled_all[:, i])
        else:
            shared = flat.mean(axis=1)
            for name, head in zip(names, heads):
                out[name] = head.classify(shared)
        return out

    def predict_all(self, x: Union[np.ndarray, Tensor]) -> Dict[str, Tensor]:
        flat = self.forward_trunk(x)
        return dict(self.task_probability_set(flat))

    def predict_proba(self, x: np.ndarray, task: str = "star") -> np.ndarray:
        if task not in self.heads:
            raise KeyError(f"unknown task {task!r}; have {list(self.heads)}")
        flat = self.forward_trunk(x)
        return self.heads[task](flat).numpy()

    def attention_map(self, task: str) -> np.ndarray:
        """Softmax attention over feature positions, as an (h, w) grid."""
        head = self.heads[task]
        if head.attention is None:
            raise ValueError("this network was built without attention pooling")
        logits = head.attention.data
        e = np.exp(logits - logits.max())
        return (e / e.sum()).reshape(self.config.feature_shape)

    def calibrate(self, images: np.ndarray, sample_limit: int = 64) -> Dict[str, np.ndarray]:
        """Standardize every conv stage against a sample of real images.

        Random filters over few channels give each seed a different
        activation scale per channel, and whole channels can start dead;
        downstream training dynamics then vary wildly between seeds. This
        folds the sample's per-channel mean and standard deviation into
        each conv's weight and bias (so pre-activations start zero-mean,
        unit-variance), one stage at a time, frozen and trainable alike.
        Call once right after construction, before any training step.
        Returns the per-stage std vectors that were folded in.
        """
        x = self._check_input(np.asarray(images, dtype=np.float64)[:sample_limit])
        flags = [(p, p.requires_grad) for p in self.parameters()]
        for p, _ in flags:
            p.requires_grad = False
        applied: Dict[str, np.ndarray] = {}
        try:
            t = Tensor(x)
            stages = [(f"block{i}", b.weight, b.bias)
                      for i, b in enumerate(self.blocks, start=1)]
            stages.append(("mid", self.mid_weight, self.mid_bias))
            for name, weight, bias in stages:
                pre = t.conv2d(weight, bias).data
                mean = pre.mean(axis=(0, 1, 2))
                std = pre.std(axis=(0, 1, 2))
                std = np.where(std > 1e-8, std, 1.0)
                weight.data /= std
                bias.data = (bias.data - mean) / std
                pre = (pre - mean) / std
                applied[name] = std
                post = Tensor(np.maximum(pre, 0.0))
                t = post.max_pool2d(2) if name != "mid" else post
        finally:
            for p, was in flags:
                p.requires_grad = was
        return applied

    # -- parameter bookkeeping --------------------------------------------

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: "OrderedDict[str, Tensor]" = OrderedDict()
        for i, block in enumerate(self.blocks, start=1):
            out[f"block{i}.weight"] = block.weight
            out[f"block{i}.bias"] = block.bias
        out["mid.weight"] = self.mid_weight
        out["mid.bias"] = self.mid_bias
        for name, head in self.heads.items():
            if head.attention is not None:
                out[f"task.{name}.attention"] = head.attention
            out[f"task.{name}.weight"] = head.weight
            out[f"task.{name}.bias"] = head.bias
        return out

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    def weight_decay_parameters(self) -> List[Tensor]:
        """Weight matrices only: biases and attention logits are exempt."""
        return [p for name, p in self.named_parameters().items() if name.endswith(".weight")]

    def final_block_parameters(self) -> List[Tensor]:
        return self.blocks[-1].parameters()

    def head_parameters(self) -> List[Tensor]:
        """The 1x1 mixing conv plus every task head."""
        out = [self.mid_weight, self.mid_bias]
        for head in self.heads.values():
            out.extend(head.parameters())
        return out

    def freeze_blocks(self, keep_final: int = 1) -> None:
        """Stop gradient flow through all but the last `keep_final` conv blocks."""
        if not 0 <= keep_final <= len(self.blocks):
            raise ValueError(f"keep_final must be in 0..{len(self.blocks)}")
        cutoff = len(self.blocks) - keep_final
        for i, block in enumerate(self.blocks):
            for p in block.parameters():
                p.requires_grad = i >= cutoff

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()
