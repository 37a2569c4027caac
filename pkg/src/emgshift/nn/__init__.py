"""NumPy CNN-LSTM with focal loss, gradient reversal and Adam."""
from .loss import FocalConfig, focal_loss, softmax_focal
from .model import CnnLstm, ModelConfig, init_params
from .optim import Adam, DivergenceError

__all__ = ["Adam", "CnnLstm", "DivergenceError", "FocalConfig", "ModelConfig",
           "focal_loss", "init_params", "softmax_focal"]
