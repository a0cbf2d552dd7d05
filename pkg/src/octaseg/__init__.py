"""Two-stage retinal vessel and FAZ segmentation with selective state-space blocks."""
from .config import LossWeights, ModelConfig, Toggles, TrainConfig, validate_config
from .networks import FAZMamba, JointModel, JointOutput, RVMamba, SegmentationOutput, params

__version__ = "0.1.0"

__all__ = ["LossWeights", "ModelConfig", "Toggles", "TrainConfig", "validate_config", "FAZMamba",
           "JointModel", "JointOutput", "RVMamba", "SegmentationOutput", "params"]
