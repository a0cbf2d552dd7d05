"""PNG artifacts: prediction overlays, probability maps and attention-gate dumps."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import binary_erosion

from .data.io import OCTASample, write_gray
from .errors import ShapeMismatch
from .networks import JointOutput

RED, GREEN, BLUE, YELLOW = (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0)
CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def contour(mask):
    """One-pixel inner boundary: the mask minus its 4-connected erosion."""
    m = np.asarray(mask).astype(bool)
    return m & ~binary_erosion(m, structure=CROSS, border_value=0)


def _map(t):
    return t.detach().cpu().numpy()[0, 0] if isinstance(t, torch.Tensor) else np.asarray(t)


def overlay_array(sample: OCTASample, out: JointOutput) -> np.ndarray:
    base = np.clip(np.rint(sample.image[0] * 255), 0, 255).astype(np.uint8)
    rv = _map(out.rv.prob_map) > 0.5
    faz = _map(out.faz_full) > 0.5
    if rv.shape != base.shape or faz.shape != base.shape:
        raise ShapeMismatch(f"prediction {rv.shape}/{faz.shape} vs image {base.shape}")
    rgb = np.repeat(base[..., None], 3, axis=2)
    rgb[rv] = RED
    rgb[faz] = BLUE
    rgb[contour(sample.rv_mask)] = GREEN
    rgb[contour(sample.faz_mask)] = YELLOW
    return rgb


def render_overlay(sample: OCTASample, out: JointOutput, out_dir) -> Path:
    """Write ``<id>_overlay.png``, ``<id>_rv.png`` and ``<id>_faz.png``; return the overlay path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{sample.id}_overlay.png"
    Image.fromarray(overlay_array(sample, out), mode="RGB").save(path)
    write_gray(out_dir / f"{sample.id}_rv.png", _map(out.rv.prob_map))
    write_gray(out_dir / f"{sample.id}_faz.png", _map(out.faz_full))
    return path


@torch.no_grad()
def dump_gates(vmaf, x, out_dir, prefix="vmaf") -> list[Path]:
    """Save the spatial and structural gate maps of a VMAF module for the first batch item."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, spatial, structural = vmaf.gates(x)
    paths = []
    for name, g in (("spatial", spatial), ("structural", structural)):
        p = out_dir / f"{prefix}_{name}.png"
        write_gray(p, _map(g))
        paths.append(p)
    return paths
