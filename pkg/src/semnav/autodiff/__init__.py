from .tensor import Array, Tape, NonFiniteError, as_array, set_check_finite
from .ops import (
    add, sub, mul, neg, scale, matmul, reshape, concat, sum_, mean_,
    relu, sigmoid, tanh, conv2d, maxpool_2x2, softmax, cross_entropy, l1_loss,
    correlate_dense, correlate_stack, place_weighted, rotate_stack,
    dropout, batchnorm_spatial, BatchNormState,
    RecurrentCellParams, lstm_step, CROSS_ENTROPY_CLIP,
)
from .optim import SGD, Adam
from .gradcheck import grad_check
from .checkpoint import save_arrays, load_arrays, CheckpointError

__all__ = [
    "Array", "Tape", "NonFiniteError", "as_array", "set_check_finite",
    "add", "sub", "mul", "neg", "scale", "matmul", "reshape", "concat",
    "sum_", "mean_", "relu", "sigmoid", "tanh", "conv2d", "maxpool_2x2",
    "softmax", "cross_entropy", "l1_loss", "correlate_dense",
    "correlate_stack", "place_weighted", "rotate_stack", "dropout",
    "batchnorm_spatial", "BatchNormState", "RecurrentCellParams",
    "lstm_step", "CROSS_ENTROPY_CLIP", "SGD", "Adam", "grad_check",
    "save_arrays", "load_arrays", "CheckpointError",
]
