"""Flip test-time augmentation, averaged in probability space."""
from __future__ import annotations

import torch

from ..networks import JointOutput, SegmentationOutput

FLIPS = ((), (-1,), (-2,))  # identity, horizontal, vertical


def _flip(x, dims):
    return torch.flip(x, dims) if dims else x


def tta_predict(model, image) -> SegmentationOutput:
    """Mean probability map over the identity, h-flipped and v-flipped inputs."""
    probs = [_flip(model(_flip(image, d)).prob_map, d) for d in FLIPS]
    return SegmentationOutput.from_probs(torch.stack(probs).mean(0))


def tta_joint(model, image) -> JointOutput:
    """TTA for the cascade: averages the RV map, the FAZ ROI map and the pasted FAZ map."""
    outs = [(d, model(_flip(image, d))) for d in FLIPS]
    rv = torch.stack([_flip(o.rv.prob_map, d) for d, o in outs]).mean(0)
    roi = torch.stack([_flip(o.faz_roi.prob_map, d) for d, o in outs]).mean(0)
    full = torch.stack([_flip(o.faz_full, d) for d, o in outs]).mean(0)
    return JointOutput(SegmentationOutput.from_probs(rv), SegmentationOutput.from_probs(roi), full)
