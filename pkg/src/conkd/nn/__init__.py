from .tensor import (
    Tape,
    Tensor,
    backward,
    concat,
    cross_entropy,
    dropout,
    edge_aggregate,
    gather_rows,
    log_softmax,
    matmul,
    no_grad,
    precision,
    record,
    relu,
    sigmoid,
    softmax,
    take_along_last,
    tanh,
)
from .layers import ParamStore, TransformerConfig, decoder_forward, encoder_forward
from .optim import Adam, clip_gradients, global_norm

__all__ = [
    "Adam",
    "ParamStore",
    "Tape",
    "Tensor",
    "TransformerConfig",
    "backward",
    "clip_gradients",
    "concat",
    "cross_entropy",
    "decoder_forward",
    "dropout",
    "edge_aggregate",
    "encoder_forward",
    "gather_rows",
    "global_norm",
    "log_softmax",
    "matmul",
    "no_grad",
    "precision",
    "record",
    "relu",
    "sigmoid",
    "softmax",
    "take_along_last",
    "tanh",
]
