"""Reusable convolutional sub-blocks: SE, ECA, Ghost, separable and
directional convolutions, attentional feature fusion and the multi-branch stem."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ChannelTooSmall, OddChannels, ShapeMismatch


def conv2d(c_in, c_out, kernel_size=1, stride=1, padding=None, dilation=1, groups=1, bias=True):
    """``nn.Conv2d`` with Kaiming-uniform weights and zero bias.

    ``padding`` defaults to 'same' for odd kernels at stride 1.
    """
    if isinstance(kernel_size, int):
        kernel_size = (kernel_size, kernel_size)
    if padding is None:
        padding = tuple(dilation * (k - 1) // 2 for k in kernel_size)
    conv = nn.Conv2d(c_in, c_out, kernel_size, stride=stride, padding=padding,
                     dilation=dilation, groups=groups, bias=bias)
    nn.init.kaiming_uniform_(conv.weight, a=math.sqrt(5))
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)
    return conv


def zero_(*modules):
    for m in modules:
        for p in m.parameters():
            nn.init.zeros_(p)


def group_norm(channels):
    return nn.GroupNorm(min(8, channels), channels)


def count_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


class SqueezeExcite(nn.Module):
    def __init__(self, channels, reduction=16):
        super().__init__()
        if channels < reduction:
            raise ChannelTooSmall(f"SE needs channels >= reduction ({channels} < {reduction})")
        hidden = channels // reduction
        self.fc1 = conv2d(channels, hidden)
        self.fc2 = conv2d(hidden, channels)

    def gate(self, x):
        s = x.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.fc2(F.relu(self.fc1(s))))

    def forward(self, x):
        return x * self.gate(x)


def eca_kernel_size(channels, gamma=2, b=1):
    t = int(abs((math.log2(channels) + b) / gamma))
    return t if t % 2 else t + 1


class ECA(nn.Module):
    """Efficient channel attention: a 1-D conv across the pooled channel descriptor."""

    def __init__(self, channels):
        super().__init__()
        self.k = eca_kernel_size(channels)
        self.conv = nn.Conv1d(1, 1, self.k, padding=self.k // 2, bias=False)
        nn.init.kaiming_uniform_(self.conv.weight, a=math.sqrt(5))

    def gate(self, x):
        s = x.mean(dim=(2, 3))[:, None, :]  # (B, 1, C)
        return torch.sigmoid(self.conv(s))[:, 0, :, None, None]

    def forward(self, x):
        return x * self.gate(x)


class GhostModule(nn.Module):
    """Half the outputs from a 1x1 conv, the other half from a cheap depthwise 3x3 on those."""

    def __init__(self, c_in, c_out):
        super().__init__()
        if c_out % 2:
            raise OddChannels(f"Ghost module needs an even output width, got {c_out}")
        half = c_out // 2
        self.primary = conv2d(c_in, half)
        self.cheap = conv2d(half, half, 3, groups=half)

    def forward(self, x):
        p = self.primary(x)
        return torch.cat([p, self.cheap(p)], dim=1)


class SeparableConv(nn.Module):
    def __init__(self, c_in, c_out, kernel_size=3):
        super().__init__()
        self.depthwise = conv2d(c_in, c_in, kernel_size, groups=c_in)
        self.pointwise = conv2d(c_in, c_out)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


def _shift_rows(x, offset):
    """Bilinearly resample ``x`` (B,C,H,W) at rows ``i + offset[b,i,j]``, zeros outside."""
    _, _, h, _ = x.shape
    rows = torch.arange(h, device=x.device, dtype=x.dtype)[None, :, None] + offset
    r0 = torch.floor(rows)
    frac = (rows - r0)[:, None]
    r0 = r0.long()
    padded = F.pad(x, (0, 0, 1, 1))  # row index r lives at r + 1

    def take(r):
        idx = (r.clamp(-1, h) + 1)[:, None].expand(-1, x.shape[1], -1, -1)
        return torch.gather(padded, 2, idx)

    return (1 - frac) * take(r0) + frac * take(r0 + 1)


class DirectionalConv(nn.Module):
    """A 1x7 (``orientation='h'``) or 7x1 (``'v'``) convolution.

    In ``offset`` mode each of the 7 taps samples the input at a learned,
    per-position fractional shift perpendicular to the kernel axis.  The
    offset predictor starts at zero so both modes agree at initialization.
    """

    def __init__(self, channels, orientation="h", mode="plain", length=7):
        super().__init__()
        if orientation not in ("h", "v"):
            raise ValueError("orientation must be 'h' or 'v'")
        if mode not in ("plain", "offset"):
            raise ValueError("mode must be 'plain' or 'offset'")
        self.orientation, self.mode, self.length = orientation, mode, length
        ks = (1, length) if orientation == "h" else (length, 1)
        self.conv = conv2d(channels, channels, ks)
        if mode == "offset":
            self.offset = conv2d(channels, length, 3)
            zero_(self.offset)

    def forward(self, x):
        if self.mode == "plain":
            return self.conv(x)
        if self.orientation == "v":
            return self._forward_offset(x.transpose(2, 3), transposed=True).transpose(2, 3)
        return self._forward_offset(x, transposed=False)

    def _forward_offset(self, x, transposed):
        # works in a frame where the kernel runs along W; offsets move along H
        weight = self.conv.weight  # (C, C, 1, L) or (C, C, L, 1)
        weight = weight.reshape(weight.shape[0], weight.shape[1], self.length)
        offsets = self.offset(x.transpose(2, 3) if transposed else x)
        if transposed:
            offsets = offsets.transpose(2, 3)
        half = self.length // 2
        padded = F.pad(x, (half, half))
        w = x.shape[3]
        out = 0
        for k in range(self.length):
            tap = _shift_rows(padded[..., k:k + w], offsets[:, k])
            out = out + torch.einsum("oc,bchw->bohw", weight[:, :, k], tap)
        return out + self.conv.bias[None, :, None, None]


class AFF(nn.Module):
    """Attentional feature fusion with a two-scale (local + global) channel attention."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.local = nn.Sequential(conv2d(channels, hidden), nn.ReLU(), conv2d(hidden, channels))
        self.glob = nn.Sequential(conv2d(channels, hidden), nn.ReLU(), conv2d(hidden, channels))

    def weight(self, skip, up):
        s = skip + up
        return torch.sigmoid(self.local(s) + self.glob(s.mean(dim=(2, 3), keepdim=True)))

    def forward(self, skip, up):
        if skip.shape != up.shape:
            raise ShapeMismatch(f"AFF inputs differ: {tuple(skip.shape)} vs {tuple(up.shape)}")
        m = self.weight(skip, up)
        return m * skip + (1 - m) * up


class CMBF(nn.Module):
    """Compact multi-branch fusion stem.

    Expands to 32 channels, runs four 8-channel branches (max pool, average
    pool, separable conv, SE) and fuses back with a 1x1 conv.  All pooling is
    stride 1 so the spatial size is kept.
    """

    width = 32

    def __init__(self, c_in, c_out):
        super().__init__()
        branch = self.width // 4
        self.expand = conv2d(c_in, self.width)
        self.maxpool = nn.MaxPool2d(3, stride=1, padding=1)
        self.avgpool = nn.AvgPool2d(3, stride=1, padding=1, count_include_pad=False)
        self.sep = SeparableConv(branch, branch)
        self.se = SqueezeExcite(branch, reduction=4)
        self.fuse = conv2d(self.width, c_out)

    def forward(self, x):
        a, b, c, d = torch.chunk(self.expand(x), 4, dim=1)
        y = torch.cat([self.maxpool(a), self.avgpool(b), self.sep(c), self.se(d)], dim=1)
        return self.fuse(y)
