"""Diagonal selective state-space scan.

For every channel ``d`` and state index ``n``::

    h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t
    y_t = <C_t, h_t> + D * u_t

with ``h_0 = 0``.  Three evaluation paths are provided:

``loop``
    the per-timestep recurrence in torch; the reference.
``assoc``
    a log-depth (Hillis-Steele) associative scan in torch.
``fused``
    compiled kernels with an analytic backward pass; used for training.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from . import _kernels


def _scan_loop(u, delta, A, B, C, D):
    bsz, length, dim = u.shape
    h = u.new_zeros(bsz, dim, A.shape[1])
    ys = []
    for t in range(length):
        dt = delta[:, t, :, None]
        h = torch.exp(dt * A) * h + dt * B[:, t, None, :] * u[:, t, :, None]
        ys.append((h * C[:, t, None, :]).sum(-1))
    return torch.stack(ys, dim=1) + u * D


def _scan_assoc(u, delta, A, B, C, D):
    a = torch.exp(delta[..., None] * A)               # (B, L, D, N)
    b = delta[..., None] * B[:, :, None, :] * u[..., None]
    length = u.shape[1]
    step = 1
    while step < length:
        b = torch.cat([b[:, :step], a[:, step:] * b[:, :-step] + b[:, step:]], dim=1)
        a = torch.cat([a[:, :step], a[:, step:] * a[:, :-step]], dim=1)
        step *= 2
    return (b * C[:, :, None, :]).sum(-1) + u * D


def _np(t):
    return t.detach().contiguous().cpu().numpy()


class _FusedScan(torch.autograd.Function):
    @staticmethod
    def forward(ctx, u, delta, A, B, C, D):
        ctx.save_for_backward(u, delta, A, B, C, D)
        y = _kernels.scan_forward(*(_np(t) for t in (u, delta, A, B, C, D)))
        return torch.from_numpy(y).to(u.device)

    @staticmethod
    def backward(ctx, gy):
        saved = ctx.saved_tensors
        grads = _kernels.scan_backward(*(_np(t) for t in saved), _np(gy))
        return tuple(torch.from_numpy(g).to(gy.device) if need else None
                     for g, need in zip(grads, ctx.needs_input_grad))


SCAN_MODES = {"loop": _scan_loop, "assoc": _scan_assoc, "fused": _FusedScan.apply}


def selective_scan(u, delta, A, B, C, D, mode="fused"):
    """Run the scan.

    Args:
        u: inputs, (batch, length, channels).
        delta: positive step sizes, same shape as ``u``.
        A: (channels, N) negative decay rates.
        B, C: (batch, length, N) input and output projections.
        D: (channels,) skip weights.
        mode: ``'fused'``, ``'loop'`` or ``'assoc'``.
    """
    try:
        fn = SCAN_MODES[mode]
    except KeyError:
        raise ValueError(f"unknown scan mode {mode!r}") from None
    dtype = torch.promote_types(u.dtype, A.dtype)
    u, delta, A, B, C, D = (t.to(dtype) for t in (u, delta, A, B, C, D))
    return fn(u, delta, A, B, C, D)


class SelectiveScan(nn.Module):
    """Input-dependent scan parameters for one traversal direction.

    ``A = -exp(A_log)`` keeps decays strictly negative and ``delta`` goes
    through a softplus so it is strictly positive.
    """

    def __init__(self, d_inner, d_state=16, dt_rank=None, dt_min=1e-3, dt_max=1e-1, mode="fused"):
        super().__init__()
        self.d_inner, self.d_state, self.mode = d_inner, d_state, mode
        self.dt_rank = dt_rank or math.ceil(d_inner / 16)
        self.x_proj = nn.Linear(d_inner, self.dt_rank + 2 * d_state, bias=False)
        self.dt_proj = nn.Linear(self.dt_rank, d_inner)
        std = self.dt_rank ** -0.5
        nn.init.uniform_(self.dt_proj.weight, -std, std)
        dt = torch.exp(torch.rand(d_inner) * (math.log(dt_max) - math.log(dt_min)) + math.log(dt_min))
        with torch.no_grad():
            self.dt_proj.bias.copy_(dt + torch.log(-torch.expm1(-dt)))  # softplus^-1
        a = torch.arange(1, d_state + 1, dtype=torch.get_default_dtype()).repeat(d_inner, 1)
        self.A_log = nn.Parameter(torch.log(a))
        self.D = nn.Parameter(torch.ones(d_inner))

    @property
    def A(self):
        return -torch.exp(self.A_log)

    def project(self, u):
        dbc = self.x_proj(u)
        dt, B, C = torch.split(dbc, [self.dt_rank, self.d_state, self.d_state], dim=-1)
        delta = F.softplus(self.dt_proj(dt))
        return delta, B, C

    def forward(self, u):
        """u: (batch, length, d_inner) -> same shape."""
        delta, B, C = self.project(u)
        return selective_scan(u, delta, self.A, B, C, self.D, mode=self.mode)

