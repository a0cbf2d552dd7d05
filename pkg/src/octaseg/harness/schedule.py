"""Warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math

from ..config import TrainConfig


def lr_at(epoch: float, tc: TrainConfig = TrainConfig()) -> float:
    """Learning rate at a (fractional) epoch position.

    Linear ramp from ``lr_init`` to ``lr_max`` over ``warmup_epochs``, then a
    cosine anneal down to ``lr_min`` at ``epochs``.
    """
    epoch = min(max(epoch, 0.0), tc.epochs)
    if tc.warmup_epochs > 0 and epoch < tc.warmup_epochs:
        return tc.lr_init + (tc.lr_max - tc.lr_init) * epoch / tc.warmup_epochs
    progress = (epoch - tc.warmup_epochs) / (tc.epochs - tc.warmup_epochs)
    return tc.lr_min + 0.5 * (tc.lr_max - tc.lr_min) * (1 + math.cos(math.pi * progress))
