"""LSA, CFEB and the two Mamba blocks built on V-SS2D."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..blocks import SqueezeExcite, conv2d, group_norm, zero_
from ..hdfe import HDFE
from .ss2d import VSS2D


class LSA(nn.Module):
    """Local spatial attention: ``x + x * sigmoid(dwconv3x3(x))``.

    The conv starts at zero, giving ``1.5 * x`` at initialization.
    """

    def __init__(self, channels):
        super().__init__()
        self.conv = conv2d(channels, channels, 3, groups=channels)
        zero_(self.conv)

    def forward(self, x):
        return x + x * torch.sigmoid(self.conv(x))


def circle_mask(h, w, device=None, dtype=torch.float32):
    """Binary disc centred at (h//2, w//2) with radius min(h, w)//4."""
    r = min(h, w) // 4
    i = torch.arange(h, device=device)[:, None] - h // 2
    j = torch.arange(w, device=device)[None, :] - w // 2
    return (i * i + j * j <= r * r).to(dtype)


class CFEB(nn.Module):
    """Compact FAZ enhancement: dilated grouped 7x7 conv, SE, optional central disc emphasis."""

    residual_scale = 0.3

    def __init__(self, channels, use_mask=True, group_width=4):
        super().__init__()
        self.use_mask = use_mask
        self.conv = conv2d(channels, channels, 7, dilation=2, groups=max(1, channels // group_width))
        self.se = SqueezeExcite(channels, reduction=min(16, channels))

    def features(self, x):
        f = self.se(self.conv(x))
        if self.use_mask:
            f = f * (1 + circle_mask(*x.shape[2:], device=x.device, dtype=x.dtype))
        return f

    def forward(self, x):
        return x + self.residual_scale * self.features(x)


class PlainExtractor(nn.Module):
    """Residual 3x3 conv unit standing in for HDFE when that toggle is off."""

    def __init__(self, channels):
        super().__init__()
        self.conv = conv2d(channels, channels, 3)
        self.norm = group_norm(channels)

    def forward(self, x):
        return x + F.silu(self.norm(self.conv(x)))

    def reset_to_identity(self):
        zero_(self.norm)


class MambaBlock(nn.Module):
    """extractor -> V-SS2D -> [CFEB] -> LSA -> norm -> SiLU, plus the block residual.

    ``kind='rv'`` gates V-SS2D with VMAF (when ``vmaf`` is set);
    ``kind='faz'`` never uses VMAF and adds CFEB when ``cfeb`` is set.
    """

    def __init__(self, channels, kind="rv", d_state=16, expand=1, hdfe=True, vmaf=True,
                 cfeb=False, cfeb_mask=True, dsconv_mode="plain", scan_mode="fused"):
        super().__init__()
        if kind not in ("rv", "faz"):
            raise ValueError("kind must be 'rv' or 'faz'")
        self.kind = kind
        self.extractor = HDFE(channels, dsconv_mode) if hdfe else PlainExtractor(channels)
        self.vss = VSS2D(channels, d_state, expand, use_vmaf_gate=(kind == "rv" and vmaf),
                         mode=scan_mode)
        self.cfeb = CFEB(channels, cfeb_mask) if (kind == "faz" and cfeb) else None
        self.lsa = LSA(channels)
        self.norm = group_norm(channels)

    def forward(self, x):
        z = self.vss(self.extractor(x))
        if self.cfeb is not None:
            z = self.cfeb(z)
        z = self.lsa(z)
        return x + F.silu(self.norm(z))

    def reset_to_identity(self):
        """Zero every residual branch; the block then returns its input."""
        self.extractor.reset_to_identity()
        self.vss.reset_to_identity()
        if self.cfeb is not None:
            zero_(self.cfeb.conv)
        zero_(self.norm)


def RVMambaBlock(channels, **kw):
    return MambaBlock(channels, kind="rv", **kw)


def FAZMambaBlock(channels, **kw):
    return MambaBlock(channels, kind="faz", **kw)
