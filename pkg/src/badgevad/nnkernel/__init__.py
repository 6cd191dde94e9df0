"""Small float64 neural-network kernel: layers, loss, optimizer, gradient checks."""
from .functional import conv1d_same, dense, global_avg_pool, lstm_layer, maxpool1d, relu, sigmoid
from .gradcheck import grad_check
from .layers import (LSTM, BatchNorm1D, Conv1DSame, Dense, GlobalAvgPool, Layer, MaxPool1D,
                     Parameter, ReLU, Sequential, ShapeError, Sigmoid)
from .optim import PROB_CLIP, Adam, adam_step, weighted_bce, weighted_bce_grad
from .rng import make_rng

__all__ = [
    "Adam", "BatchNorm1D", "Conv1DSame", "Dense", "GlobalAvgPool", "LSTM", "Layer",
    "MaxPool1D", "PROB_CLIP", "Parameter", "ReLU", "Sequential", "ShapeError", "Sigmoid",
    "adam_step", "conv1d_same", "dense", "global_avg_pool", "grad_check", "lstm_layer",
    "make_rng", "maxpool1d", "relu", "sigmoid", "weighted_bce", "weighted_bce_grad",
]
