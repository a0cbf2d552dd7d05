"""Hybrid directional feature extractor."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import ECA, DirectionalConv, GhostModule, conv2d, zero_
from .errors import ShapeMismatch

DILATIONS = (2, 4, 6)


class PyramidEnhance(nn.Module):
    """Top-down lateral refinement over same-resolution dilation scales.

    Scales are ordered finest first; ``p3 = f3(s3)``, ``p2 = f2(s2 + p3)``,
    ``p1 = f1(s1 + p2)`` and ``p1`` is returned.
    """

    def __init__(self, channels):
        super().__init__()
        self.lateral = nn.ModuleList([conv2d(channels, channels) for _ in range(3)])

    def forward(self, scales):
        s1, s2, s3 = scales
        if not s1.shape == s2.shape == s3.shape:
            raise ShapeMismatch("pyramid scales must share one shape")
        f1, f2, f3 = self.lateral
        p3 = f3(s3)
        p2 = f2(s2 + p3)
        return f1(s1 + p2)


class HDFE(nn.Module):
    def __init__(self, channels, dsconv_mode="plain"):
        super().__init__()
        self.stem = nn.Sequential(conv2d(channels, channels), nn.PReLU(channels),
                                  GhostModule(channels, channels))
        self.dir_h = DirectionalConv(channels, "h", dsconv_mode)
        self.dir_v = DirectionalConv(channels, "v", dsconv_mode)
        self.interact = conv2d(2 * channels, channels)
        self.dilated = nn.ModuleList([conv2d(channels, channels, 3, dilation=r) for r in DILATIONS])
        self.pyramid = PyramidEnhance(channels)
        self.fusion_logits = nn.Parameter(torch.zeros(2))
        self.eca = ECA(channels)
        self.reset_to_identity()

    def fusion_weights(self):
        return torch.softmax(self.fusion_logits, dim=0)

    def streams(self, x):
        f = self.stem(x)
        d = self.interact(torch.cat([self.dir_h(f), self.dir_v(f)], dim=1))
        m = self.pyramid([F.silu(conv(f)) for conv in self.dilated])
        return d, m

    def forward(self, x):
        d, m = self.streams(x)
        alpha, beta = self.fusion_weights()
        return x + self.eca(alpha * d + beta * m)

    def reset_to_identity(self):
        """Zero the last layer of both streams so the block passes its input through."""
        zero_(self.interact, self.pyramid.lateral[0])
