"""Semi-supervised classification with a clustering-module regulariser."""
from .trainer import ModelConfig, SuperCMModel, TrainConfig, train

__version__ = "0.1.0"
__all__ = ["ModelConfig", "SuperCMModel", "TrainConfig", "train", "__version__"]
