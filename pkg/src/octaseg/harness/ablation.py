"""Ablation grids mirroring the RV-module and FAZ-strategy studies."""
from __future__ import annotations

import csv

from ..config import LossWeights, ModelConfig, TrainConfig
from ..networks import JointModel, params
from .train import evaluate, mean_of, train

# (toggle names, 8 rows of booleans) in table order
STUDIES = {
    "rv": (("hdfe", "vmaf", "cmbf"), [
        (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1),
    ]),
    "faz": (("cfeb", "roi", "rv_prior"), [
        (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1),
    ]),
}
HEADERS = {"hdfe": "HDFE", "vmaf": "VMAF", "cmbf": "CMBF",
           "cfeb": "CFEB", "roi": "ROI", "rv_prior": "RV-knowledge"}
# The RV study runs without the FAZ-side strategies.  The FAZ study starts from the
# RV-study row with the best FAZ score (HDFE + CMBF); its row 1 repeats that run.
STUDY_BASE = {
    "rv": dict(cfeb=False, roi=False, rv_prior=False),
    "faz": dict(hdfe=True, vmaf=False, cmbf=True),
}


def study_configs(study: str, base: ModelConfig) -> list[tuple[int, ModelConfig]]:
    names, rows = STUDIES[study]
    base = base.with_toggles(**STUDY_BASE[study])
    return [(i + 1, base.with_toggles(**dict(zip(names, map(bool, row))))) for i, row in enumerate(rows)]


def ablate(study: str, base: ModelConfig, train_set, val_set, tc: TrainConfig, lw: LossWeights,
           out_dir=None) -> list[dict]:
    """Train and evaluate each configuration of ``study`` ('rv' or 'faz')."""
    names, _ = STUDIES[study]
    results = []
    for row_id, cfg in study_configs(study, base):
        model = JointModel(cfg)
        sub = None if out_dir is None else f"{out_dir}/{study}_row{row_id}"
        train(model, train_set, tc, lw, out_dir=sub)
        rows = evaluate(model, val_set)
        entry = {"ID": row_id}
        entry.update({HEADERS[n]: getattr(cfg.toggles, n) for n in names})
        entry.update({
            "RV-Dice": mean_of(rows, "rv_dice"), "RV-Jaccard": mean_of(rows, "rv_jaccard"),
            "FAZ-Dice": mean_of(rows, "faz_dice"), "FAZ-Jaccard": mean_of(rows, "faz_jaccard"),
            "params": params(model),
        })
        results.append(entry)
    return results


def write_ablation_csv(path, results) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(results[0]))
        writer.writeheader()
        for r in results:
            writer.writerow({k: ("✓" if v is True else "-" if v is False else
                                 f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})
