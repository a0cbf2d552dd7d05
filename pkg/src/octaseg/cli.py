"""Command-line entry point: ``octaseg {synth,train,eval,predict,ablate,params}``.

Exit codes: 0 success, 2 configuration error, 3 non-finite training loss.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import (LAMBDA_FAZ, LossWeights, ModelConfig, Toggles, TrainConfig, dump_config,
                     load_config, validate_config)
from .errors import ConfigError, NonFiniteLoss, RoiTooLarge

log = logging.getLogger("octaseg")

EXIT_CONFIG = 2
EXIT_NONFINITE = 3


def _add_dataclass_flags(parser, cls, prefix, skip=()):
    for f in dataclasses.fields(cls):
        if f.name in skip or f.name == "toggles":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if isinstance(default, bool):
            parser.add_argument(flag, dest=f"{prefix}{f.name}", action=argparse.BooleanOptionalAction,
                                default=None)
        else:
            parser.add_argument(flag, dest=f"{prefix}{f.name}", type=type(default), default=None,
                                metavar=f.name.upper(), help=f"default {default}")


def _common(parser, data=True):
    parser.add_argument("--config", type=Path, help="YAML config file")
    if data:
        parser.add_argument("--data", type=Path, required=True, help="dataset root")
    _add_dataclass_flags(parser, ModelConfig, "m_", skip=("seed",))
    _add_dataclass_flags(parser, Toggles, "t_")
    _add_dataclass_flags(parser, TrainConfig, "tr_", skip=("field", "seed"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--field", choices=sorted(LAMBDA_FAZ), default=None)


def resolve(args) -> tuple[ModelConfig, TrainConfig, LossWeights]:
    if args.config is not None:
        model, train, loss = load_config(args.config)
        loss_from_file = True
    else:
        model, train, loss = ModelConfig(), TrainConfig(), LossWeights()
        loss_from_file = False
    ns = vars(args)

    def pick(prefix):
        return {k[len(prefix):]: v for k, v in ns.items() if k.startswith(prefix) and v is not None}

    toggles = dataclasses.replace(model.toggles, **pick("t_"))
    model = dataclasses.replace(model, toggles=toggles, **pick("m_"))
    train = dataclasses.replace(train, **pick("tr_"))
    if args.seed is not None:
        model = dataclasses.replace(model, seed=args.seed)
        train = dataclasses.replace(train, seed=args.seed)
    if args.field is not None:
        train = dataclasses.replace(train, field=args.field)
    if args.field is not None or not loss_from_file:
        loss = dataclasses.replace(loss, lambda_faz=LAMBDA_FAZ[train.field])
    return model, train, loss


def cmd_synth(args):
    from .data import save_dataset, synth_generate

    counts = {"train": args.n_train, "val": args.n_val, "test": args.n_test}
    samples = synth_generate(sum(counts.values()), (args.size, args.size), args.seed)
    splits, i = {}, 0
    for split, k in counts.items():
        splits[split] = samples[i:i + k]
        i += k
    save_dataset(args.out, args.field, splits)
    print(f"wrote {len(samples)} samples to {Path(args.out) / args.field}")


def _load(args, split, model_cfg=None):
    from .data import load_dataset

    field = args.field or "3M"
    samples = load_dataset(args.data, split, field)
    if model_cfg is not None and samples:
        validate_config(model_cfg, samples[0].hw)
    return samples


def cmd_train(args):
    from .harness import evaluate, train
    from .networks import JointModel
    from .objective import write_metrics_csv

    model_cfg, tc, lw = resolve(args)
    train_set = _load(args, "train", model_cfg)
    val_set = _load(args, "val", model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(out / "config.yaml", model_cfg, tc, lw)
    model = JointModel(model_cfg)
    result = train(model, train_set, tc, lw, val_set=val_set or None, out_dir=out)
    for r in result.records:
        print(f"{r.kind:9s} epoch={r.epoch} rv_dice={r.rv_dice:.4f} faz_dice={r.faz_dice:.4f} {r.path}")
    if val_set:
        write_metrics_csv(out / "val_metrics.csv", evaluate(model, val_set))


def cmd_eval(args):
    from .harness import evaluate, load_checkpoint
    from .objective import aggregate, write_metrics_csv

    model, _ = load_checkpoint(args.checkpoint)
    samples = _load(args, args.split, model.cfg)
    rows = evaluate(model, samples, tta=args.tta)
    write_metrics_csv(args.out, rows)
    for key in ("rv_dice", "rv_jaccard", "faz_dice", "faz_jaccard"):
        mean, std = aggregate(r[key] for r in rows)
        print(f"{key:12s} {mean:.4f}±{std:.4f}")


def cmd_predict(args):
    from .harness import load_checkpoint, predict
    from .reporting import render_overlay

    model, _ = load_checkpoint(args.checkpoint)
    samples = _load(args, args.split, model.cfg)
    for s, out in predict(model, samples, tta=args.tta):
        print(render_overlay(s, out, args.out_dir))


def cmd_ablate(args):
    from .harness import ablate, write_ablation_csv

    model_cfg, tc, lw = resolve(args)
    train_set = _load(args, "train", model_cfg)
    val_set = _load(args, "val") or train_set
    results = ablate(args.study, model_cfg, train_set, val_set, tc, lw)
    write_ablation_csv(args.out, results)
    print(Path(args.out).read_text())


def cmd_params(args):
    from .networks import JointModel, param_report, params

    model_cfg, _, _ = resolve(args)
    validate_config(model_cfg, (args.size, args.size))
    model = JointModel(model_cfg)
    for name, n in param_report(model, args.depth).items():
        print(f"{name:40s} {n:>12,d}")
    print(f"{'total':40s} {params(model):>12,d}")


def build_parser():
    p = argparse.ArgumentParser(prog="octaseg")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--field", choices=sorted(LAMBDA_FAZ), default="3M")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--n-train", type=int, default=8)
    s.add_argument("--n-val", type=int, default=2)
    s.add_argument("--n-test", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train the joint model")
    _common(s)
    s.add_argument("--out", type=Path, required=True, help="run directory")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "metrics CSV for a checkpoint"),
                                 ("predict", cmd_predict, "probability maps and overlays")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--data", type=Path, required=True)
        s.add_argument("--field", choices=sorted(LAMBDA_FAZ), default=None)
        s.add_argument("--checkpoint", type=Path, required=True)
        s.add_argument("--split", default="test")
        s.add_argument("--tta", action=argparse.BooleanOptionalAction, default=True)
        if name == "eval":
            s.add_argument("--out", type=Path, required=True, help="metrics CSV path")
        else:
            s.add_argument("--out-dir", type=Path, required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("ablate", help="run an 8-row ablation study")
    _common(s)
    s.add_argument("--study", choices=("rv", "faz"), required=True)
    s.add_argument("--out", type=Path, required=True, help="results CSV path")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("params", help="trainable parameter report")
    _common(s, data=False)
    s.add_argument("--size", type=int, default=304, help="image side used for config validation")
    s.add_argument("--depth", type=int, default=1)
    s.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, RoiTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteLoss as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    return 0


if __name__ == "__main__":
    sys.exit(main())
