"""Vessel multi-attention fusion: channel, spatial and structural gates."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import SeparableConv, conv2d, group_norm
from .errors import NonSquareInput


class VCAB(nn.Module):
    """Vessel channel attention. Returns a (B, C, 1, 1) gate."""

    def __init__(self, channels, local_size=4):
        super().__init__()
        self.local_size = local_size
        self.mlp = nn.Sequential(
            conv2d(3 * channels, channels), nn.ReLU(),
            SeparableConv(channels, channels),
            conv2d(channels, channels),
        )

    def descriptors(self, x):
        gap = x.mean(dim=(2, 3), keepdim=True)
        gmp = x.amax(dim=(2, 3), keepdim=True)
        local = F.avg_pool2d(x, self.local_size, ceil_mode=True)
        local = F.interpolate(local, scale_factor=self.local_size, mode="nearest")
        lmp = local.amax(dim=(2, 3), keepdim=True)
        return gap, gmp, lmp

    def forward(self, x):
        return torch.sigmoid(self.mlp(torch.cat(self.descriptors(x), dim=1)))


def diagonal_mask(length):
    return torch.eye(length)[None, None]


class VSAB(nn.Module):
    """Vessel spatial attention over the channel-pooled map. Returns a (B, 1, H, W) gate.

    Diagonal responses use a 9-tap kernel restricted to the main diagonal;
    the anti-diagonal is covered by rotating the pooled map 90 degrees,
    applying the same kernel and rotating back.
    """

    def __init__(self, length=9, diagonal=True):
        super().__init__()
        self.diagonal = diagonal
        self.base = conv2d(2, 1, 7)
        self.horizontal = conv2d(2, 1, (1, length))
        self.vertical = conv2d(2, 1, (length, 1))
        self.diag = conv2d(2, 1, length)
        self.register_buffer("diag_mask", diagonal_mask(length), persistent=False)
        self.reduce = conv2d(3, 1)

    @staticmethod
    def pool(x):
        return torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)

    def diagonal_map(self, p):
        w = self.diag.weight * self.diag_mask
        pad = w.shape[-1] // 2
        main = F.conv2d(p, w, self.diag.bias, padding=pad)
        anti = F.conv2d(torch.rot90(p, 1, (2, 3)), w, self.diag.bias, padding=pad)
        return main + torch.rot90(anti, -1, (2, 3))

    def branches(self, x):
        p = self.pool(x)
        maps = {"base": self.base(p), "horizontal": self.horizontal(p), "vertical": self.vertical(p)}
        if self.diagonal:
            if x.shape[2] != x.shape[3]:
                raise NonSquareInput(f"diagonal attention needs H == W, got {tuple(x.shape[2:])}")
            maps["diagonal"] = self.diagonal_map(p)
        else:
            maps["diagonal"] = torch.zeros_like(maps["base"])
        return maps

    def forward(self, x):
        m = self.branches(x)
        stack = torch.cat([m["base"], m["horizontal"] + m["vertical"], m["diagonal"]], dim=1)
        return torch.sigmoid(self.reduce(stack))


class VSTAB(nn.Module):
    """Vessel structure attention: center-line, bifurcation and width-variation maps."""

    def __init__(self, channels):
        super().__init__()
        self.centerline = conv2d(channels, 1, 3)
        self.bifurcation = conv2d(channels, 1, 3, dilation=2)
        self.width = conv2d(channels, 1, 5, dilation=2)
        self.fuse = conv2d(3, 1)

    def forward(self, x):
        maps = [torch.sigmoid(m(x)) for m in (self.centerline, self.bifurcation, self.width)]
        return torch.sigmoid(self.fuse(torch.cat(maps, dim=1)))


class EnhanceModule(nn.Module):
    """3x3 conv -> GroupNorm -> SiLU. The norm scale starts at zero, so the output does too."""

    def __init__(self, channels):
        super().__init__()
        self.conv = conv2d(channels, channels, 3)
        self.norm = group_norm(channels)
        nn.init.zeros_(self.norm.weight)

    def forward(self, x):
        return F.silu(self.norm(self.conv(x)))


class VMAF(nn.Module):
    def __init__(self, channels, diagonal=True):
        super().__init__()
        self.vcab = VCAB(channels)
        self.vsab = VSAB(diagonal=diagonal)
        self.vstab = VSTAB(channels)
        self.fusion_logits = nn.Parameter(torch.zeros(3))
        self.enhance = EnhanceModule(channels)

    def fusion_weights(self):
        return torch.softmax(self.fusion_logits, dim=0)

    def gates(self, x):
        return self.vcab(x), self.vsab(x), self.vstab(x)

    def forward(self, x):
        w = self.fusion_weights()
        gc, gs, gt = self.gates(x)
        a = x * (w[0] * gc + w[1] * gs + w[2] * gt)
        return x + self.enhance(a)

    def reset_to_identity(self):
        nn.init.zeros_(self.enhance.norm.weight)
        nn.init.zeros_(self.enhance.norm.bias)
