"""Adam optimizer over parameter groups with distinct learning rates."""

from __future__ import annotations

from typing import Dict, List, Sequence

import numpy as np

from ..autodiff import Tensor


class Adam:
    """Bias-corrected Adam. Groups are dicts {"params": [...], "lr": float,
    "name": str}; a per-step scale multiplies every group's rate, which is
    how staged decay is applied."""

    def __init__(self, groups: Sequence[dict], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.groups = []
        seen = set()
        for g in groups:
            params = list(g["params"])
            for p in params:
                if id(p) in seen:
                    raise ValueError("a parameter appears in more than one group")
                seen.add(id(p))
            self.groups.append({"params": params, "lr": float(g["lr"]),
                                "name": g.get("name", f"group{len(self.groups)}")})
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}

    def step(self, lr_scale: float = 1.0) -> None:
        """Apply one update to every parameter that received a gradient."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for group in self.groups:
            lr = group["lr"] * lr_scale
            for i, p in enumerate(group["params"]):
                if p.grad is None:
                    continue
                g = p.grad
                if not np.isfinite(g).all():
                    raise FloatingPointError(
                        f"non-finite gradient in group {group['name']!r} (param {i})"
                    )
                key = id(p)
                m = self._m.get(key)
                if m is None:
                    m = np.zeros_like(p.data)
                    v = np.zeros_like(p.data)
                else:
                    v = self._v[key]
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * (g * g)
                self._m[key], self._v[key] = m, v
                p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group["params"]:
                p.zero_grad()
