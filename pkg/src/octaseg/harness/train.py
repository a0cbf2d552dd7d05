"""Training loop and evaluation for the joint model."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..config import LossWeights, TrainConfig
from ..data.augment import AugmentationPolicy, augment, sample_rng
from ..errors import NonFiniteLoss
from ..networks import JointModel, center_crop
from ..objective import (binarize, boundary_loss, combine_faz, combine_rv, combine_total,
                         dice_loss, dice_metric, hausdorff_loss, jaccard_metric, tversky_loss)
from .checkpoint import CheckpointPolicy, save_checkpoint
from .schedule import lr_at
from .tta import tta_joint

log = logging.getLogger(__name__)


def collate(samples):
    image = torch.from_numpy(np.stack([s.image for s in samples]))
    rv = torch.from_numpy(np.stack([s.rv_mask for s in samples])[:, None].astype(np.float32))
    faz = torch.from_numpy(np.stack([s.faz_mask for s in samples])[:, None].astype(np.float32))
    return image, rv, faz


def joint_loss(out, rv_y, faz_y, model: JointModel, lw: LossWeights):
    """Total loss and its parts.  The FAZ loss is taken on the ROI crop when ROI is on."""
    if model.cfg.toggles.roi:
        faz_y = center_crop(faz_y, model.cfg.roi_size)
    p, q = out.rv.prob_map, out.faz_roi.prob_map
    parts = {
        "rv_dice": dice_loss(rv_y, p),
        "rv_boundary": boundary_loss(rv_y, p),
        "rv_tversky": tversky_loss(rv_y, p, lw.tversky_alpha, lw.tversky_beta),
        "rv_hausdorff": hausdorff_loss(rv_y, p),
        "faz_dice": dice_loss(faz_y, q),
        "faz_boundary": boundary_loss(faz_y, q),
    }
    rv = combine_rv(parts["rv_dice"], parts["rv_boundary"], parts["rv_tversky"], parts["rv_hausdorff"], lw)
    faz = combine_faz(parts["faz_dice"], parts["faz_boundary"], lw)
    parts["rv"], parts["faz"] = rv, faz
    return combine_total(rv, faz, lw), parts


@torch.no_grad()
def predict(model, samples, tta=False):
    """Yield ``(sample, JointOutput)`` one sample at a time in eval mode."""
    was_training = model.training
    model.eval()
    try:
        for s in samples:
            image = torch.from_numpy(s.image[None])
            yield s, (tta_joint(model, image) if tta else model(image))
    finally:
        model.train(was_training)


def evaluate(model, samples, tta=False) -> list[dict]:
    rows = []
    for s, out in predict(model, samples, tta):
        rv = binarize(out.rv.prob_map[0, 0])
        faz = binarize(out.faz_full[0, 0])
        rows.append({
            "id": s.id,
            "rv_dice": dice_metric(s.rv_mask, rv),
            "rv_jaccard": jaccard_metric(s.rv_mask, rv),
            "faz_dice": dice_metric(s.faz_mask, faz),
            "faz_jaccard": jaccard_metric(s.faz_mask, faz),
        })
    return rows


def mean_of(rows, key):
    return float(np.mean([r[key] for r in rows]))


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    history: list = field(default_factory=list)
    steps: int = 0


def train(model: JointModel, train_set, tc: TrainConfig, lw: LossWeights, val_set=None,
          out_dir=None, policy: AugmentationPolicy | None = None, on_step=None) -> TrainResult:
    """Train ``model`` with AdamW and the warmup-cosine schedule.

    Validation (TTA-free) starts at ``ceil(eval_start_fraction * epochs)``; the
    best-RV, best-FAZ and best-average checkpoints plus periodic ones are
    written to ``out_dir`` when it is given.  ``on_step(step, model, loss)`` is
    called after every optimizer step.
    """
    torch.set_num_threads(tc.num_threads)
    torch.manual_seed(tc.seed)
    policy = policy or AugmentationPolicy()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        run_log = open(out_dir / "train_log.txt", "w")
    else:
        run_log = None

    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr_init, weight_decay=tc.weight_decay)
    ckpt = CheckpointPolicy(tc.epochs, tc.eval_start_fraction, tc.periodic_ckpt_every)
    result = TrainResult()
    n = len(train_set)
    per_epoch = math.ceil(n / tc.batch_size)
    model.train()
    try:
        for epoch in range(tc.epochs):
            order = np.random.default_rng([tc.seed, epoch]).permutation(n)
            losses = []
            for i in range(per_epoch):
                batch = [train_set[j] for j in order[i * tc.batch_size:(i + 1) * tc.batch_size]]
                if tc.augment:
                    batch = [augment(s, sample_rng(tc.seed, s.id, epoch), policy) for s in batch]
                image, rv_y, faz_y = collate(batch)
                lr = lr_at(epoch + i / per_epoch, tc)
                for group in opt.param_groups:
                    group["lr"] = lr
                out = model(image)
                loss, parts = joint_loss(out, rv_y, faz_y, model, lw)
                if not torch.isfinite(loss):
                    ids = [s.id for s in batch]
                    if out_dir is not None:
                        dump = {k: v.item() for k, v in parts.items()}
                        (out_dir / "nonfinite_batch.txt").write_text(f"epoch {epoch} step {i}\nids {ids}\n{dump}\n")
                    raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {ids}", ids)
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                result.steps += 1
                losses.append(loss.item())
                if on_step is not None:
                    on_step(result.steps, model, losses[-1])
            entry = {"epoch": epoch, "loss": float(np.mean(losses)), "lr": lr}
            if val_set is not None and ckpt.should_evaluate(epoch):
                rows = evaluate(model, val_set)
                rv_d, faz_d = mean_of(rows, "rv_dice"), mean_of(rows, "faz_dice")
                entry.update(rv_dice=rv_d, faz_dice=faz_d)
                for kind in ckpt.update(epoch, rv_d, faz_d):
                    if out_dir is None:
                        continue
                    name = f"periodic_epoch{epoch:03d}.pt" if kind == "periodic" else f"{kind}.pt"
                    rec = ckpt.best[kind] if kind != "periodic" else ckpt.periodic[-1]
                    rec.path = str(out_dir / name)
                    save_checkpoint(rec.path, model, rec, model.cfg, tc)
            result.history.append(entry)
            line = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in entry.items())
            log.info(line)
            if run_log is not None:
                run_log.write(line + "\n")
                run_log.flush()
    finally:
        if run_log is not None:
            run_log.close()
    result.records = ckpt.records()
    return result
