"""Neural-network primitives with manual backward passes."""
from .layers import (
    AveragePool,
    DepthwiseSeparableConv,
    Layer,
    Linear,
    MultiHeadSelfAttention,
    PoolNormalize,
    ReLU,
    Sequential,
    Tanh,
    average_pool,
    depthwise_separable,
    linear,
    mlp,
    multi_head_attention,
    pool_normalize,
    softmax,
)
from .optim import Adam, AdamState, adam_step
from .params import (
    CKPT_TAG,
    assign,
    hard_update,
    load_checkpoint,
    param_count,
    save_checkpoint,
    soft_update,
    unique_arrays,
)

__all__ = [
    "Adam", "AdamState", "AveragePool", "CKPT_TAG", "DepthwiseSeparableConv", "Layer",
    "Linear", "MultiHeadSelfAttention", "PoolNormalize", "ReLU", "Sequential", "Tanh",
    "adam_step", "assign", "average_pool", "depthwise_separable", "hard_update", "linear",
    "load_checkpoint", "mlp", "multi_head_attention", "param_count", "pool_normalize",
    "save_checkpoint", "soft_update", "softmax", "unique_arrays",
]
