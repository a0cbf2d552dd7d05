"""Deterministic synthetic OCTA-like samples for desk-scale experiments."""
from __future__ import annotations

import math

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter

from .io import OCTASample

# FAZ semi-axes as a fraction of the image side; keeps the FAZ area within
# 0.5%..8% of the image for every seed.
FAZ_AXIS_RANGE = (0.10, 0.15)
FAZ_JITTER = 1 / 32
FAZ_MARGIN = 2
VESSEL_LEVEL = 0.85
NOISE_STD = 0.03
BLUR_SIGMA = 0.5


def _grow(canvas, rng, y, x, angle, width, budget, depth=0):
    h, w = canvas.shape
    step = 2.0
    while budget > 0:
        ny = y + step * math.sin(angle)
        nx = x + step * math.cos(angle)
        if not (0 <= ny < h and 0 <= nx < w):
            return
        cv2.line(canvas, (int(round(x)), int(round(y))), (int(round(nx)), int(round(ny))), 1,
                 thickness=max(1, int(round(width))))
        y, x = ny, nx
        angle += rng.normal(0, 0.12)
        budget -= step
        if depth < 3 and rng.random() < 0.04:
            side = rng.choice((-1.0, 1.0))
            _grow(canvas, rng, y, x, angle + side * rng.uniform(0.5, 1.1),
                  max(1.0, width * 0.7), budget * rng.uniform(0.4, 0.8), depth + 1)
            width = max(1.0, width * 0.85)


def vessel_tree(hw, rng, roots=5):
    h, w = hw
    canvas = np.zeros(hw, dtype=np.uint8)
    for _ in range(roots):
        edge = rng.integers(4)
        t = rng.uniform(0.1, 0.9)
        y, x = [(0.0, t * w), (h - 1.0, t * w), (t * h, 0.0), (t * h, w - 1.0)][edge]
        aim = math.atan2(h / 2 - y, w / 2 - x) + rng.normal(0, 0.5)
        _grow(canvas, rng, y, x, aim, rng.uniform(2.5, 4.0), budget=rng.uniform(0.8, 1.4) * (h + w))
    return canvas


def faz_ellipse(hw, rng):
    h, w = hw
    cy = h / 2 + rng.uniform(-1, 1) * FAZ_JITTER * h
    cx = w / 2 + rng.uniform(-1, 1) * FAZ_JITTER * w
    a = rng.uniform(*FAZ_AXIS_RANGE) * h
    b = rng.uniform(*FAZ_AXIS_RANGE) * w
    theta = rng.uniform(0, math.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return ((u / b) ** 2 + (v / a) ** 2 <= 1.0).astype(np.uint8)


def synth_sample(sid, hw, rng) -> OCTASample:
    faz = faz_ellipse(hw, rng)
    keepout = cv2.dilate(faz, np.ones((2 * FAZ_MARGIN + 1,) * 2, np.uint8))
    rv = vessel_tree(hw, rng) * (1 - keepout)
    texture = gaussian_filter(rng.normal(0, 1, hw), 2.0)
    texture = 0.15 + 0.04 * texture / (texture.std() + 1e-8)
    background = np.where(keepout > 0, 0.04, texture)
    render = gaussian_filter(rv.astype(np.float64) * VESSEL_LEVEL, BLUR_SIGMA)
    image = np.clip(np.maximum(background, render) + rng.normal(0, NOISE_STD, hw), 0, 1)
    return OCTASample(sid, image[None].astype(np.float32), rv.astype(np.uint8), faz)


def synth_generate(n: int, hw=(128, 128), seed: int = 0) -> list[OCTASample]:
    """``n`` samples with vessel trees, a central elliptical FAZ and noise; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [synth_sample(f"synth{seed:03d}_{i:04d}", tuple(hw), np.random.default_rng([seed, i]))
            for i in range(n)]
