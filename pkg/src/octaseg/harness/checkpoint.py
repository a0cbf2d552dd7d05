"""Deferred-evaluation checkpoint policy and the checkpoint file format.

A checkpoint is a ``torch.save`` dictionary::

    {"format_version": 1, "kind": str, "epoch": int,
     "metrics": {"rv_dice": float, "faz_dice": float},
     "model_config": dict, "train_config": dict | None,
     "state_dict": {module_path: tensor}}
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import torch

from ..config import ModelConfig, Toggles

FORMAT_VERSION = 1
BEST_KINDS = ("best_rv", "best_faz", "best_avg")


@dataclass
class CheckpointRecord:
    kind: str
    epoch: int
    rv_dice: float
    faz_dice: float
    path: str | None = None

    @property
    def avg(self):
        return (self.rv_dice + self.faz_dice) / 2


class CheckpointPolicy:
    """Decides when to evaluate and which checkpoints to keep.

    Epochs are 0-based.  Nothing is evaluated before ``ceil(eval_start_fraction
    * epochs)``; from then on every epoch is evaluated, each best-kind record is
    replaced only on strict improvement (ties keep the earlier epoch) and a
    periodic record is written after every ``every``-th evaluated epoch.
    """

    def __init__(self, epochs, eval_start_fraction=0.7, every=5):
        self.epochs = epochs
        self.eval_start = math.ceil(eval_start_fraction * epochs)
        self.every = every
        self.best: dict[str, CheckpointRecord] = {}
        self.periodic: list[CheckpointRecord] = []
        self.evaluated: list[int] = []

    def should_evaluate(self, epoch) -> bool:
        return epoch >= self.eval_start

    def update(self, epoch, rv_dice, faz_dice) -> list[str]:
        """Register metrics for ``epoch``; return the record kinds to write."""
        if not self.should_evaluate(epoch):
            raise ValueError(f"epoch {epoch} precedes the evaluation phase ({self.eval_start})")
        self.evaluated.append(epoch)
        score = {"best_rv": rv_dice, "best_faz": faz_dice, "best_avg": (rv_dice + faz_dice) / 2}
        kinds = []
        for kind in BEST_KINDS:
            cur = self.best.get(kind)
            prev = None if cur is None else {"best_rv": cur.rv_dice, "best_faz": cur.faz_dice,
                                             "best_avg": cur.avg}[kind]
            if prev is None or score[kind] > prev:
                self.best[kind] = CheckpointRecord(kind, epoch, rv_dice, faz_dice)
                kinds.append(kind)
        if (epoch - self.eval_start + 1) % self.every == 0:
            self.periodic.append(CheckpointRecord("periodic", epoch, rv_dice, faz_dice))
            kinds.append("periodic")
        return kinds

    def records(self) -> list[CheckpointRecord]:
        return [self.best[k] for k in BEST_KINDS if k in self.best] + list(self.periodic)


def save_checkpoint(path, model, record: CheckpointRecord, model_config: ModelConfig,
                    train_config=None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format_version": FORMAT_VERSION,
        "kind": record.kind,
        "epoch": record.epoch,
        "metrics": {"rv_dice": record.rv_dice, "faz_dice": record.faz_dice},
        "model_config": dataclasses.asdict(model_config),
        "train_config": dataclasses.asdict(train_config) if train_config is not None else None,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path):
    """Return ``(model, payload)`` with the model rebuilt from the stored config."""
    from ..networks import JointModel

    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
    cfg = dict(payload["model_config"])
    cfg["toggles"] = Toggles(**cfg["toggles"])
    model = JointModel(ModelConfig(**cfg))
    model.load_state_dict(payload["state_dict"])
    return model, payload
