"""Segmentation losses and overlap metrics.

Losses take a binary ground truth ``Y`` and a probability map ``P`` of the
same shape.  A 1-D or 2-D input is one sample; higher-rank inputs are
``(batch, ...)`` and the per-sample losses are averaged over the batch.
Distance transforms are computed in numpy and enter the graph as constants.
"""
from __future__ import annotations

import csv

import numpy as np
import torch
from scipy.ndimage import distance_transform_edt

from .config import LossWeights
from .errors import EmptySet

EPS = 1e-6
THRESHOLD = 0.5


def _per_sample(x):
    x = torch.as_tensor(x)
    return x.reshape(1, -1) if x.ndim <= 2 else x.reshape(x.shape[0], -1)


def _as_float(y, p):
    p = torch.as_tensor(p)
    y = torch.as_tensor(y, device=p.device)
    return y.to(p.dtype), p


# --------------------------------------------------------------------------- losses

def dice_loss(y, p, eps=EPS):
    y, p = _as_float(y, p)
    y, p = _per_sample(y), _per_sample(p)
    inter = (y * p).sum(1)
    return (1 - (2 * inter + eps) / (y.sum(1) + p.sum(1) + eps)).mean()


def tversky_loss(y, p, alpha=0.3, beta=0.7, eps=EPS):
    y, p = _as_float(y, p)
    y, p = _per_sample(y), _per_sample(p)
    tp = (y * p).sum(1)
    fp = (p * (1 - y)).sum(1)
    fn = (y * (1 - p)).sum(1)
    return (1 - (tp + eps) / (tp + alpha * fp + beta * fn + eps)).mean()


def _maps(a):
    """View an array as a stack of maps over its trailing (up to two) axes."""
    a = np.asarray(a)
    if a.ndim <= 2:
        return a[None]
    return a.reshape(-1, *a.shape[-2:])


def signed_distance(mask):
    """Euclidean distance to the mask boundary: negative inside, positive outside.

    Inside pixels get minus their distance to the nearest background pixel and
    outside pixels their distance to the nearest foreground pixel.  Maps that
    are empty or full get all zeros.
    """
    mask = np.asarray(mask)
    out = np.zeros(mask.shape, dtype=np.float64)
    flat = out.reshape(_maps(mask).shape)
    for i, m in enumerate(_maps(mask).astype(bool)):
        if m.any() and not m.all():
            flat[i] = distance_transform_edt(~m) - distance_transform_edt(m)
    return out


def distance_field(mask):
    """Distance from each foreground pixel to the background (0 on background)."""
    mask = np.asarray(mask)
    out = np.zeros(mask.shape, dtype=np.float64)
    flat = out.reshape(_maps(mask).shape)
    for i, m in enumerate(_maps(mask).astype(bool)):
        if m.any():
            flat[i] = distance_transform_edt(m)
    return out


def _np(t):
    return t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)


def boundary_loss(y, p):
    """Surface loss: mean of ``P * signed_distance(Y)``."""
    y, p = _as_float(y, p)
    sdf = torch.as_tensor(signed_distance(_np(y) > THRESHOLD), dtype=p.dtype, device=p.device)
    return _per_sample(p * sdf).mean(1).mean()


def hausdorff_loss(y, p, alpha=2.0):
    """Distance-transform Hausdorff surrogate: mean of ``(P-Y)^2 (dtY^a + dtP^a)``.

    ``dtP`` comes from ``P`` binarized at 0.5 and carries no gradient.
    """
    y, p = _as_float(y, p)
    dty = distance_field(_np(y) > THRESHOLD)
    dtp = distance_field(_np(p) > THRESHOLD)
    field = torch.as_tensor(dty ** alpha + dtp ** alpha, dtype=p.dtype, device=p.device)
    return _per_sample((p - y) ** 2 * field).mean(1).mean()


def combine_rv(dice, boundary, tversky, hausdorff, w: LossWeights = LossWeights()):
    return w.rv_dice * dice + w.rv_boundary * boundary + w.rv_tversky * tversky + w.rv_hausdorff * hausdorff


def combine_faz(dice, boundary, w: LossWeights = LossWeights()):
    return w.faz_dice * dice + w.faz_boundary * boundary


def combine_total(rv, faz, w: LossWeights = LossWeights()):
    return w.lambda_rv * rv + w.lambda_faz * faz


def rv_loss(y, p, w: LossWeights = LossWeights()):
    return combine_rv(dice_loss(y, p), boundary_loss(y, p),
                      tversky_loss(y, p, w.tversky_alpha, w.tversky_beta), hausdorff_loss(y, p), w)


def faz_loss(y, p, w: LossWeights = LossWeights()):
    return combine_faz(dice_loss(y, p), boundary_loss(y, p), w)


def total_loss(rv_pair, faz_pair, w: LossWeights = LossWeights()):
    """``rv_pair`` and ``faz_pair`` are ``(Y, P)`` tuples."""
    return combine_total(rv_loss(*rv_pair, w), faz_loss(*faz_pair, w), w)


# --------------------------------------------------------------------------- metrics

def _counts(y, p):
    y = _np(y).astype(bool)
    p = _np(p).astype(bool)
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {p.shape}")
    return int(np.count_nonzero(y & p)), int(np.count_nonzero(y)), int(np.count_nonzero(p))


def dice_metric(y, p_bin) -> float:
    inter, ny, np_ = _counts(y, p_bin)
    if ny + np_ == 0:
        return 1.0
    return 2 * inter / (ny + np_)


def jaccard_metric(y, p_bin) -> float:
    inter, ny, np_ = _counts(y, p_bin)
    union = ny + np_ - inter
    if union == 0:
        return 1.0
    return inter / union


def binarize(p, threshold=THRESHOLD):
    return _np(p) > threshold


def aggregate(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise EmptySet("cannot aggregate an empty set of metric values")
    return float(v.mean()), float(v.std())


METRIC_COLUMNS = ("rv_dice", "rv_jaccard", "faz_dice", "faz_jaccard")


def write_metrics_csv(path, rows) -> None:
    """Write per-sample metric rows followed by a ``mean±std`` summary row."""
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id",) + METRIC_COLUMNS)
        for r in rows:
            writer.writerow([r["id"]] + [f"{r[c]:.6f}" for c in METRIC_COLUMNS])
        if rows:
            summary = []
            for c in METRIC_COLUMNS:
                mean, std = aggregate(r[c] for r in rows)
                summary.append(f"{mean:.6f}±{std:.6f}")
            writer.writerow(["mean±std"] + summary)

