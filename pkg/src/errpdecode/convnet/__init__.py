from .model import (
    Architecture, ConvNetModel, InputTooShortError, build_deep_convnet, convnet_predict,
    forward, layer_shapes, load_convnet, penultimate_output, save_convnet, softmax,
)
from .train import TrainConfig, train, loss_and_grads
from .gradcheck import gradient_check

__all__ = [
    "Architecture", "ConvNetModel", "InputTooShortError", "build_deep_convnet",
    "convnet_predict", "forward", "layer_shapes", "load_convnet", "penultimate_output",
    "save_convnet", "softmax", "TrainConfig", "train", "loss_and_grads", "gradient_check",
]
