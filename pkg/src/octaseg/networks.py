"""RVMamba, FAZMamba and the two-stage joint cascade."""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from functools import partial

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import AFF, CMBF, conv2d, count_params, group_norm
from .config import ModelConfig
from .errors import RoiTooLarge
from .ssm.blocks import MambaBlock
from .vmaf import VMAF

THRESHOLD = 0.5


@dataclass
class SegmentationOutput:
    logits: torch.Tensor
    prob_map: torch.Tensor

    @classmethod
    def from_logits(cls, logits):
        return cls(logits=logits, prob_map=torch.sigmoid(logits))

    @classmethod
    def from_probs(cls, prob, eps=1e-6):
        return cls(logits=torch.logit(prob, eps=eps), prob_map=prob)

    def binary(self):
        return (self.prob_map > THRESHOLD).to(torch.uint8)


@dataclass
class JointOutput:
    rv: SegmentationOutput
    faz_roi: SegmentationOutput
    faz_full: torch.Tensor


def roi_window(h, w, size):
    """(top, left) corner of the centred ``size`` x ``size`` window."""
    if size > min(h, w):
        raise RoiTooLarge(f"ROI {size} does not fit in {h}x{w}")
    return (h - size) // 2, (w - size) // 2


def center_crop(x, size):
    top, left = roi_window(*x.shape[-2:], size)
    return x[..., top:top + size, left:left + size]


def paste(roi, full_hw):
    """Place ``roi`` at the centred window of a zero canvas of size ``full_hw``."""
    h, w = full_hw
    size = roi.shape[-1]
    top, left = roi_window(h, w, size)
    return F.pad(roi, (left, w - size - left, top, h - size - top))


class Upsample(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.proj = conv2d(c_in, c_out)

    def forward(self, x):
        return self.proj(F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False))


class FinalConv(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = conv2d(channels, channels, 3)
        self.norm = group_norm(channels)
        self.out = conv2d(channels, 1)

    def forward(self, x):
        return self.out(F.silu(self.norm(self.conv(x))))


class MambaUNet(nn.Module):
    """Shared U-Net skeleton; ``kind`` selects RV or FAZ Mamba blocks."""

    def __init__(self, cfg: ModelConfig, in_channels: int, kind: str):
        super().__init__()
        self.kind = kind
        t = cfg.toggles
        widths = cfg.widths
        block = partial(MambaBlock, kind=kind, d_state=cfg.ssm_state_dim, expand=cfg.ssm_expand,
                        hdfe=t.hdfe, vmaf=t.vmaf, cfeb=t.cfeb, cfeb_mask=cfg.cfeb_mask,
                        dsconv_mode=cfg.dsconv_mode, scan_mode=cfg.scan_mode)
        self.stride = 2 ** cfg.encoder_depth
        self.stem = CMBF(in_channels, widths[0]) if t.cmbf else conv2d(in_channels, widths[0])
        self.encoders = nn.ModuleList([block(c) for c in widths[:-1]])
        self.downs = nn.ModuleList([conv2d(c, 2 * c, 3, stride=2, padding=1) for c in widths[:-1]])
        self.bottleneck = block(widths[-1])
        self.dropout = nn.Dropout(cfg.dropout_rate)
        self.bottleneck_vmaf = VMAF(widths[-1]) if (kind == "rv" and t.vmaf) else None
        rev = widths[::-1]
        self.ups = nn.ModuleList([Upsample(a, b) for a, b in zip(rev, rev[1:])])
        self.fusions = nn.ModuleList([AFF(c) for c in rev[1:]])
        self.decoders = nn.ModuleList([block(c) for c in rev[1:]])
        self.head = FinalConv(widths[0])

    def _pad(self, x):
        h, w = x.shape[-2:]
        side = -(-max(h, w) // self.stride) * self.stride
        top, left = (side - h) // 2, (side - w) // 2
        if side == h == w:
            return x, None
        x = F.pad(x, (left, side - w - left, top, side - h - top))
        return x, (top, left, h, w)

    def forward(self, x) -> SegmentationOutput:
        x, crop = self._pad(x)
        z = self.stem(x)
        skips = []
        for enc, down in zip(self.encoders, self.downs):
            z = enc(z)
            skips.append(z)
            z = down(z)
        z = self.dropout(self.bottleneck(z))
        if self.bottleneck_vmaf is not None:
            z = self.bottleneck_vmaf(z)
        for up, fuse, dec, skip in zip(self.ups, self.fusions, self.decoders, reversed(skips)):
            z = dec(fuse(skip, up(z)))
        logits = self.head(z)
        if crop is not None:
            top, left, h, w = crop
            logits = logits[..., top:top + h, left:left + w]
        return SegmentationOutput.from_logits(logits)


def RVMamba(cfg: ModelConfig) -> MambaUNet:
    return MambaUNet(cfg, cfg.in_channels, "rv")


def FAZMamba(cfg: ModelConfig) -> MambaUNet:
    return MambaUNet(cfg, cfg.in_channels + int(cfg.toggles.rv_prior), "faz")


class JointModel(nn.Module):
    """Stage one segments vessels; stage two segments the FAZ from the
    (optionally cropped) image concatenated with the vessel probability map."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.rv = RVMamba(cfg)
        self.faz = FAZMamba(cfg)

    def forward(self, image) -> JointOutput:
        t = self.cfg.toggles
        rv = self.rv(image)
        x2 = image
        if t.rv_prior:
            prior = rv.prob_map.detach() if self.cfg.detach_rv_prior else rv.prob_map
            x2 = torch.cat([image, prior], dim=1)
        if t.roi:
            x2 = center_crop(x2, self.cfg.roi_size)
        faz = self.faz(x2)
        faz_full = paste(faz.prob_map, image.shape[-2:]) if t.roi else faz.prob_map
        return JointOutput(rv=rv, faz_roi=faz, faz_full=faz_full)


def params(model: nn.Module) -> int:
    """Number of trainable scalars."""
    return count_params(model)


def param_report(model: nn.Module, depth: int = 2) -> "OrderedDict[str, int]":
    """Trainable-scalar counts per module path, truncated at ``depth`` levels."""
    report = OrderedDict()
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        key = ".".join(name.split(".")[:depth])
        report[key] = report.get(key, 0) + p.numel()
    return report


def param_hash(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in model.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
