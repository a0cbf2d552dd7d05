from .augment import AugmentationPolicy, augment, sample_rng
from .io import OCTASample, load_dataset, save_dataset
from .synth import synth_generate

__all__ = ["AugmentationPolicy", "augment", "sample_rng", "OCTASample", "load_dataset",
           "save_dataset", "synth_generate"]
