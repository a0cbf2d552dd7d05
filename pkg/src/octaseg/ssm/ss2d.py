"""Four-direction 2-D cross-scan and the gated V-SS2D block."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..blocks import conv2d, zero_
from ..vmaf import VMAF
from .scan import SelectiveScan

# row-major, reversed row-major, column-major, reversed column-major
DIRECTIONS = ("row", "row_rev", "col", "col_rev")


def unfold_directions(x):
    """(B, C, H, W) -> list of four (B, L, C) sequences, one per direction."""
    rows = x.flatten(2).transpose(1, 2)
    cols = x.transpose(2, 3).flatten(2).transpose(1, 2)
    return [rows, rows.flip(1), cols, cols.flip(1)]


def fold_directions(seqs, h, w):
    """Inverse of :func:`unfold_directions`, summing the four maps in row-major (B, L, C) layout."""
    rows, rows_rev, cols, cols_rev = seqs
    bsz, _, c = rows.shape
    col_sum = (cols + cols_rev.flip(1)).reshape(bsz, w, h, c).transpose(1, 2).reshape(bsz, h * w, c)
    return rows + rows_rev.flip(1) + col_sum


class CrossScan2D(nn.Module):
    def __init__(self, channels, d_state=16, mode="fused"):
        super().__init__()
        self.dwconv = conv2d(channels, channels, 3, groups=channels)
        self.scans = nn.ModuleList([SelectiveScan(channels, d_state, mode=mode) for _ in DIRECTIONS])
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        _, c, h, w = x.shape
        z = F.silu(self.dwconv(x))
        seqs = [scan(s) for scan, s in zip(self.scans, unfold_directions(z))]
        y = self.norm(fold_directions(seqs, h, w))
        return y.transpose(1, 2).reshape(-1, c, h, w)


class VSS2D(nn.Module):
    """Main path: projection + cross-scan.  Gate path: projection (+ VMAF) + SiLU.

    ``out = proj_out(main * gate) + x``; ``proj_out`` starts at zero.
    """

    def __init__(self, channels, d_state=16, expand=1, use_vmaf_gate=True, mode="fused"):
        super().__init__()
        inner = channels * expand
        self.use_vmaf_gate = use_vmaf_gate
        self.proj_in = conv2d(channels, inner)
        self.proj_gate = conv2d(channels, inner)
        self.scan = CrossScan2D(inner, d_state, mode)
        self.gate_attn = VMAF(inner) if use_vmaf_gate else None
        self.proj_out = conv2d(inner, channels)
        zero_(self.proj_out)

    def gate(self, x):
        g = self.proj_gate(x)
        if self.gate_attn is not None:
            g = self.gate_attn(g)
        return F.silu(g)

    def forward(self, x):
        return self.proj_out(self.scan(self.proj_in(x)) * self.gate(x)) + x

    def reset_to_identity(self):
        zero_(self.proj_out)
