"""Joint image/mask augmentation.

Geometric transforms are composed into one inverse coordinate map which is
then sampled bilinearly for the image and with nearest neighbour for the
masks, so all three see exactly the same geometry.  Photometric transforms
touch the image only.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.ndimage import map_coordinates
from skimage.transform import PiecewiseAffineTransform

from .io import OCTASample

PHOTOMETRIC = ("brightness_contrast", "clahe")
GEOMETRIC = ("rotate", "hflip", "vflip", "piecewise_affine")
TRANSFORMS = PHOTOMETRIC + GEOMETRIC


@dataclass(frozen=True)
class AugmentationPolicy:
    p: float = 0.2
    rotate_limit: float = 15.0
    brightness_limit: float = 0.2
    contrast_limit: float = 0.2
    clahe_clip: float = 2.0
    clahe_tiles: int = 8
    pa_grid: int = 4
    pa_scale: float = 0.03
    overrides: dict = field(default_factory=dict)

    def prob(self, name):
        return self.overrides.get(name, self.p)

    @classmethod
    def only(cls, *names, **kw):
        """A policy that always applies ``names`` and nothing else."""
        return cls(overrides={t: float(t in names) for t in TRANSFORMS}, **kw)


def sample_rng(global_seed, sample_id, epoch=0) -> np.random.Generator:
    """RNG keyed on (seed, id, epoch) so parallel loading order cannot change results."""
    digest = hashlib.sha256(f"{global_seed}/{sample_id}/{epoch}".encode()).digest()
    return np.random.default_rng(np.frombuffer(digest[:16], dtype=np.uint32))


def identity_coords(h, w):
    return np.mgrid[0:h, 0:w].astype(np.float64)


def _inv_rotate(coords, h, w, degrees):
    cy, cx = (h - 1) / 2, (w - 1) / 2
    t = np.deg2rad(-degrees)
    r, c = coords[0] - cy, coords[1] - cx
    return np.stack([cy + np.cos(t) * r - np.sin(t) * c, cx + np.sin(t) * r + np.cos(t) * c])


def _inv_piecewise(coords, h, w, rng, grid, scale):
    rows, cols = np.meshgrid(np.linspace(0, h - 1, grid), np.linspace(0, w - 1, grid), indexing="ij")
    dst = np.stack([cols.ravel(), rows.ravel()], axis=1)  # output-side control points (x, y)
    src = dst + rng.normal(0, scale * min(h, w), dst.shape)
    tform = PiecewiseAffineTransform()
    tform.estimate(dst, src)
    xy = np.stack([coords[1].ravel(), coords[0].ravel()], axis=1)
    mapped = tform(xy)
    return np.stack([mapped[:, 1].reshape(h, w), mapped[:, 0].reshape(h, w)])


def draw(policy: AugmentationPolicy, rng):
    """Choose which transforms fire and their parameters."""
    ops = []
    for name in TRANSFORMS:
        fire = rng.random() < policy.prob(name)
        if not fire:
            continue
        if name == "brightness_contrast":
            params = (1 + rng.uniform(-policy.contrast_limit, policy.contrast_limit),
                      rng.uniform(-policy.brightness_limit, policy.brightness_limit))
        elif name == "rotate":
            params = rng.uniform(-policy.rotate_limit, policy.rotate_limit)
        elif name == "piecewise_affine":
            params = np.random.default_rng(rng.integers(2**63))
        else:
            params = None
        ops.append((name, params))
    return ops


def geometry(ops, policy, hw):
    """Inverse coordinate map (2, H, W) of the geometric ops, or None if there are none."""
    geo = [(n, p) for n, p in ops if n in GEOMETRIC]
    if not geo:
        return None
    h, w = hw
    coords = identity_coords(h, w)
    # output -> source: undo the last transform first
    for name, p in reversed(geo):
        if name == "hflip":
            coords = np.stack([coords[0], (w - 1) - coords[1]])
        elif name == "vflip":
            coords = np.stack([(h - 1) - coords[0], coords[1]])
        elif name == "rotate":
            coords = _inv_rotate(coords, h, w, p)
        elif name == "piecewise_affine":
            coords = _inv_piecewise(coords, h, w, p, policy.pa_grid, policy.pa_scale)
    return coords


def nearest_index(coords, hw):
    """Flat source index used by nearest-neighbour sampling (mirror boundary)."""
    idx = np.arange(hw[0] * hw[1], dtype=np.float64).reshape(hw)
    return map_coordinates(idx, coords, order=0, mode="mirror").astype(np.int64)


def warp_image(img, coords):
    return np.stack([map_coordinates(ch, coords, order=1, mode="mirror") for ch in img]).astype(img.dtype)


def warp_mask(mask, coords):
    return mask.ravel()[nearest_index(coords, mask.shape)].astype(mask.dtype)


def _clahe(img, clip, tiles):
    op = cv2.createCLAHE(clipLimit=clip, tileGridSize=(tiles, tiles))
    out = [op.apply(np.clip(np.rint(ch * 255), 0, 255).astype(np.uint8)) for ch in img]
    return (np.stack(out).astype(np.float32) / 255.0).astype(img.dtype)


def augment(sample: OCTASample, rng, policy: AugmentationPolicy = AugmentationPolicy()) -> OCTASample:
    ops = draw(policy, rng)
    image, rv, faz = sample.image, sample.rv_mask, sample.faz_mask
    for name, p in ops:
        if name == "brightness_contrast":
            alpha, beta = p
            image = np.clip(alpha * image + beta, 0.0, 1.0).astype(sample.image.dtype)
        elif name == "clahe":
            image = _clahe(image, policy.clahe_clip, policy.clahe_tiles)
    coords = geometry(ops, policy, sample.hw)
    if coords is not None:
        image = np.clip(warp_image(image, coords), 0.0, 1.0)
        rv, faz = warp_mask(rv, coords), warp_mask(faz, coords)
    return OCTASample(sample.id, image, rv, faz)
