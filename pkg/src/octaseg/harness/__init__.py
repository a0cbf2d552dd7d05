from .ablation import ablate, study_configs, write_ablation_csv
from .checkpoint import CheckpointPolicy, CheckpointRecord, load_checkpoint, save_checkpoint
from .schedule import lr_at
from .train import evaluate, joint_loss, predict, train
from .tta import tta_joint, tta_predict

__all__ = ["ablate", "study_configs", "write_ablation_csv", "CheckpointPolicy", "CheckpointRecord",
           "load_checkpoint", "save_checkpoint", "lr_at", "evaluate", "joint_loss", "predict",
           "train", "tta_joint", "tta_predict"]
