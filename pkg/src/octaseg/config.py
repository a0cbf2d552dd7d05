"""Configuration objects and the YAML config-file schema.

A config file has up to three top-level sections, all optional::

    model:
      in_channels: 1
      base_channels: 32
      ssm_state_dim: 16
      roi_size: 224
      toggles: {hdfe: true, vmaf: true, cmbf: true, cfeb: true, roi: true, rv_prior: true}
    train:
      epochs: 100
      batch_size: 2
      field: 3M
    loss:
      lambda_faz: 6.1

Unknown keys are rejected so typos surface as config errors.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import BadChannels, ConfigError, RoiTooLarge

LAMBDA_FAZ = {"3M": 6.1, "6M": 4.0}


@dataclass(frozen=True)
class Toggles:
    hdfe: bool = True
    vmaf: bool = True
    cmbf: bool = True
    cfeb: bool = True
    roi: bool = True
    rv_prior: bool = True


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    base_channels: int = 32
    encoder_depth: int = 3
    ssm_state_dim: int = 16
    ssm_expand: int = 1
    dropout_rate: float = 0.1
    roi_size: int = 224
    residual_scale_cfeb: float = 0.3
    toggles: Toggles = field(default_factory=Toggles)
    dsconv_mode: str = "plain"
    scan_mode: str = "fused"
    cfeb_mask: bool = True
    detach_rv_prior: bool = False
    seed: int = 0

    def with_toggles(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, toggles=dataclasses.replace(self.toggles, **kw))

    @property
    def widths(self) -> list[int]:
        """Channel width at each resolution level, stem first, bottleneck last."""
        return [self.base_channels * 2**i for i in range(self.encoder_depth + 1)]


@dataclass(frozen=True)
class LossWeights:
    rv_dice: float = 0.6
    rv_boundary: float = 0.2
    rv_tversky: float = 0.1
    rv_hausdorff: float = 0.1
    faz_dice: float = 0.8
    faz_boundary: float = 0.2
    lambda_rv: float = 1.0
    lambda_faz: float = LAMBDA_FAZ["3M"]
    tversky_alpha: float = 0.3
    tversky_beta: float = 0.7

    @classmethod
    def for_field(cls, name: str, **kw) -> "LossWeights":
        try:
            lam = LAMBDA_FAZ[name]
        except KeyError:
            raise ConfigError(f"unknown field {name!r}; expected one of {sorted(LAMBDA_FAZ)}") from None
        return cls(lambda_faz=lam, **kw)

    def __post_init__(self):
        parts = (self.rv_dice, self.rv_boundary, self.rv_tversky, self.rv_hausdorff,
                 self.faz_dice, self.faz_boundary, self.lambda_rv, self.lambda_faz)
        if any(p < 0 for p in parts):
            raise ConfigError("loss weights must be nonnegative")
        rv = self.rv_dice + self.rv_boundary + self.rv_tversky + self.rv_hausdorff
        faz = self.faz_dice + self.faz_boundary
        if not (math.isclose(rv, 1.0) and math.isclose(faz, 1.0)):
            raise ConfigError(f"branch loss weights must sum to 1 (rv={rv}, faz={faz})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 2
    weight_decay: float = 1e-2
    lr_max: float = 1e-3
    lr_init: float = 5e-4
    warmup_epochs: float = 10
    lr_min: float = 1e-6
    eval_start_fraction: float = 0.7
    periodic_ckpt_every: int = 5
    seed: int = 0
    field: str = "3M"
    augment: bool = True
    num_threads: int = 1

    def __post_init__(self):
        if not 0 < self.lr_init <= self.lr_max:
            raise ConfigError("need 0 < lr_init <= lr_max")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("need 0 <= warmup_epochs < epochs")
        if not 0 < self.eval_start_fraction < 1:
            raise ConfigError("eval_start_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def validate_config(cfg: ModelConfig, dataset_hw: tuple[int, int]) -> ModelConfig:
    """Return ``cfg`` unchanged if it is consistent with images of size ``dataset_hw``."""
    if cfg.base_channels % 4:
        raise BadChannels(f"base_channels={cfg.base_channels} is not divisible by 4")
    if cfg.roi_size > min(dataset_hw):
        raise RoiTooLarge(f"roi_size={cfg.roi_size} exceeds min{tuple(dataset_hw)}")
    if cfg.dsconv_mode not in ("plain", "offset"):
        raise ConfigError(f"dsconv_mode must be 'plain' or 'offset', got {cfg.dsconv_mode!r}")
    if cfg.scan_mode not in ("fused", "loop", "assoc"):
        raise ConfigError(f"unknown scan_mode {cfg.scan_mode!r}")
    if cfg.encoder_depth != 3:
        raise ConfigError("encoder_depth is fixed at 3")
    if cfg.residual_scale_cfeb != 0.3:
        raise ConfigError("residual_scale_cfeb is fixed at 0.3")
    if cfg.roi_size % 8:
        raise ConfigError("roi_size must be a multiple of 8")
    return cfg


def _build(cls, data: dict, section: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    if cls is ModelConfig and "toggles" in data:
        data["toggles"] = _build(Toggles, data["toggles"], "model.toggles")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> tuple[ModelConfig, TrainConfig, LossWeights]:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    extra = set(raw) - {"model", "train", "loss"}
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    model = _build(ModelConfig, raw.get("model"), "model")
    train = _build(TrainConfig, raw.get("train"), "train")
    loss_raw = dict(raw.get("loss") or {})
    loss_raw.setdefault("lambda_faz", LAMBDA_FAZ.get(train.field, LAMBDA_FAZ["3M"]))
    loss = _build(LossWeights, loss_raw, "loss")
    return model, train, loss


def config_to_dict(model: ModelConfig, train: TrainConfig | None = None,
                   loss: LossWeights | None = None) -> dict:
    out = {"model": dataclasses.asdict(model)}
    if train is not None:
        out["train"] = dataclasses.asdict(train)
    if loss is not None:
        out["loss"] = dataclasses.asdict(loss)
    return out


def dump_config(path, model: ModelConfig, train: TrainConfig | None = None,
                loss: LossWeights | None = None) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(model, train, loss), sort_keys=False))
