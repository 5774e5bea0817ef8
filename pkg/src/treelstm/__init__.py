"""Tree-structured LSTM regression for irregularly sampled sequences."""

from .baselines import BaselineModel
from .data import MaskedSequence
from .model import TreeLstmConfig, TreeLstmModel
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["BaselineModel", "MaskedSequence", "TreeLstmConfig", "TreeLstmModel",
           "TrainConfig", "train", "__version__"]
