"""Staged learning-rate decay: three factor-10 drops during training."""

from __future__ import annotations


def lr_multiplier(step: int, total_steps: int) -> float:
    """Piecewise-constant multiplier: 1 until 25% of training, then 0.1,
    0.01, and 0.001 for the final quarter."""
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside 0..{total_steps - 1}")
    frac = step / total_steps
    if frac < 0.25:
        return 1.0
    if frac < 0.5:
        return 0.1
    if frac < 0.75:
        return 0.01
    return 0.001
