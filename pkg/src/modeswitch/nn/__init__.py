"""Small numpy neural-network substrate: layers, losses, optimizers, checkpoints."""
from . import activations, checkpoint, losses
from .activations import leaky_relu, relu, softmax, tanh
from .layers import LSTM, Conv1D, Dense, GlobalAvgPool, LastStepPool, Layer
from .losses import cross_entropy, mse, mse_grad, softmax_cross_entropy
from .network import Network
from .optim import SGD, Adam, EarlyStopping, TrainingDiverged, make_optimizer

__all__ = [
    "activations", "checkpoint", "losses",
    "leaky_relu", "relu", "softmax", "tanh",
    "LSTM", "Conv1D", "Dense", "GlobalAvgPool", "LastStepPool", "Layer", "Network",
    "cross_entropy", "mse", "mse_grad", "softmax_cross_entropy",
    "SGD", "Adam", "EarlyStopping", "TrainingDiverged", "make_optimizer",
]
