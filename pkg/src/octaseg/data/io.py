"""On-disk dataset layout and loading.

Layout under ``root``::

    <field>/images/<id>.png     8-bit grayscale en-face image
    <field>/rv/<id>.png         vessel mask (values > 127.5 are foreground)
    <field>/faz/<id>.png        FAZ mask
    <field>/splits/<split>.txt  one sample id per line

``field`` is ``3M`` or ``6M``; ``split`` is ``train``, ``val`` or ``test``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import MissingMask, ShapeMismatch, UnknownSplit

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MASK_THRESHOLD = 127.5


@dataclass
class OCTASample:
    """One en-face image with its vessel and FAZ masks.

    ``image`` is float32 (C, H, W) in [0, 1]; masks are uint8 (H, W) in {0, 1}.
    """

    id: str
    image: np.ndarray
    rv_mask: np.ndarray
    faz_mask: np.ndarray

    @property
    def hw(self):
        return self.image.shape[-2:]

    def validate(self, roi_size=None):
        if self.image.ndim != 3:
            raise ShapeMismatch(f"{self.id}: image must be (C, H, W), got {self.image.shape}")
        for name in ("rv_mask", "faz_mask"):
            m = getattr(self, name)
            if m.shape != self.hw:
                raise ShapeMismatch(f"{self.id}: {name} is {m.shape}, image is {self.hw}")
            if not np.isin(m, (0, 1)).all():
                raise ValueError(f"{self.id}: {name} is not binary")
        if roi_size is not None and self.faz_mask.any():
            h, w = self.hw
            top, left = (h - roi_size) // 2, (w - roi_size) // 2
            if not self.faz_mask[top:top + roi_size, left:left + roi_size].any():
                log.warning("%s: FAZ lies entirely outside the %d px ROI", self.id, roi_size)
        return self


def read_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.float32) / 255.0


def read_mask(path) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("L"), dtype=np.float32) > MASK_THRESHOLD).astype(np.uint8)


def write_gray(path, arr) -> None:
    """Write a [0, 1] float map (or a {0, 1} mask) as an 8-bit PNG."""
    arr = np.asarray(arr, dtype=np.float64)
    Image.fromarray(np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8), mode="L").save(path)


def read_manifest(root, field, split) -> list[str]:
    if split not in SPLITS:
        raise UnknownSplit(f"unknown split {split!r}; expected one of {SPLITS}")
    path = Path(root) / field / "splits" / f"{split}.txt"
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def load_dataset(root, split, field="3M", roi_size=None) -> list[OCTASample]:
    base = Path(root) / field
    samples = []
    for sid in sorted(read_manifest(root, field, split)):
        image = read_image(base / "images" / f"{sid}.png")[None]
        masks = []
        for kind in ("rv", "faz"):
            p = base / kind / f"{sid}.png"
            if not p.exists():
                raise MissingMask(f"{sid}: missing {kind} mask at {p}")
            masks.append(read_mask(p))
        samples.append(OCTASample(sid, image, *masks).validate(roi_size))
    return samples


def save_dataset(root, field, splits: dict[str, list[OCTASample]]) -> None:
    base = Path(root) / field
    for sub in ("images", "rv", "faz", "splits"):
        (base / sub).mkdir(parents=True, exist_ok=True)
    for split, samples in splits.items():
        if split not in SPLITS:
            raise UnknownSplit(split)
        for s in samples:
            write_gray(base / "images" / f"{s.id}.png", s.image[0])
            write_gray(base / "rv" / f"{s.id}.png", s.rv_mask)
            write_gray(base / "faz" / f"{s.id}.png", s.faz_mask)
        (base / "splits" / f"{split}.txt").write_text("".join(f"{s.id}\n" for s in samples))
