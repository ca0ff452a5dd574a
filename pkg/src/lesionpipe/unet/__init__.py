from .model import UNetConfig, UNetParams, backward, forward, init_params, loss_xent, parameter_shapes
from .optim import TrainConfig, adam_step
from .train import History, predict, predict_many, train
from . import layers
from .weights import dumps, load_weights, loads, save_weights

__all__ = [
    "UNetConfig", "UNetParams", "TrainConfig", "History",
    "init_params", "parameter_shapes", "forward", "backward", "loss_xent",
    "adam_step", "train", "predict", "predict_many", "load_weights", "save_weights",
    "dumps", "loads", "layers",
]
