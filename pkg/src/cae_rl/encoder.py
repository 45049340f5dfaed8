"""History encoder: depthwise separable conv -> projection -> self-attention -> mean pool.

Input is a window of ``L`` rows (newest first) by ``D`` features, with any
leading batch axes. The conv output ``[C, L, D]`` is regrouped into one
token per time step (``C * D`` features), lifted to ``d_model`` by a linear
projection, attended over the ``L`` tokens and averaged into a single
``d_model`` vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nn.layers import (
    AveragePool,
    DepthwiseSeparableConv,
    Layer,
    Linear,
    MultiHeadSelfAttention,
    PoolNormalize,
    pool_normalize,
)

__all__ = ["EncoderConfig", "HistoryEncoder", "pool_normalize", "PoolNormalize", "CurrentStepNorm"]


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    num_heads: int = 4
    channels: int = 8
    k_time: int = 3
    k_obs: int = 3


def _tokens(u: np.ndarray) -> np.ndarray:
    # [..., C, L, D] -> [..., L, C*D]
    C, L, D = u.shape[-3:]
    return np.swapaxes(u, -3, -2).reshape(u.shape[:-3] + (L, C * D))


def _untokens(g: np.ndarray, C: int, D: int) -> np.ndarray:
    L = g.shape[-2]
    return np.swapaxes(g.reshape(g.shape[:-2] + (L, C, D)), -3, -2)


class HistoryEncoder(Layer):
    """Maps ``[..., window_len, in_features]`` to ``[..., d_model]``."""

    def __init__(self, in_features: int, window_len: int, config: EncoderConfig = EncoderConfig(),
                 rng=None, name="encoder"):
        super().__init__()
        self.name = name
        self.in_features = in_features
        self.window_len = window_len
        self.config = config
        C = config.channels
        self.conv = DepthwiseSeparableConv(C, C, config.k_time, config.k_obs, rng, name=f"{name}.conv")
        self.proj = Linear(C * in_features, config.d_model, rng, name=f"{name}.proj")
        self.attn = MultiHeadSelfAttention(config.d_model, config.num_heads, rng, name=f"{name}.attn")
        self.pool = AveragePool()
        self._collect()

    def _parts(self):
        return (("conv", self.conv), ("proj", self.proj), ("attn", self.attn))

    def _collect(self):
        self.params = {
            f"{pre}.{k}": v for pre, layer in self._parts() for k, v in layer.params.items()
        }

    @property
    def d_model(self) -> int:
        return self.config.d_model

    def shared_copy(self, name=None) -> "HistoryEncoder":
        """A second encoder instance whose parameters alias this one's."""
        twin = HistoryEncoder(self.in_features, self.window_len, self.config, None,
                              name=name or self.name)
        for (_, mine), (_, theirs) in zip(self._parts(), twin._parts()):
            theirs.params = mine.params
        twin._collect()
        return twin

    def forward(self, window):
        window = np.asarray(window, dtype=np.float64)
        if window.shape[-2:] != (self.window_len, self.in_features):
            raise DimensionError(
                f"{self.name}: expected window [..., {self.window_len}, {self.in_features}], "
                f"got {window.shape}"
            )
        u = self.conv.forward(window)
        h = self.proj.forward(_tokens(u))
        a = self.attn.forward(h)
        self._cache = True
        return self.pool.forward(a)

    def backward(self, dy):
        self._cached()
        C = self.config.channels
        _, da = self.pool.backward(dy)
        g_attn, dh = self.attn.backward(da)
        g_proj, dtok = self.proj.backward(dh)
        g_conv, dwin = self.conv.backward(_untokens(dtok, C, self.in_features))
        grads = {}
        for pre, g in (("conv", g_conv), ("proj", g_proj), ("attn", g_attn)):
            for k, v in g.items():
                grads[f"{pre}.{k}"] = v
        return grads, dwin


class CurrentStepNorm(PoolNormalize):
    """Normalization of the current observation/action before concatenation.

    RMS-normalizes vectors with two or more features. A single feature is
    passed through unchanged: its RMS normalization is just ``sign(x)``,
    which would erase the magnitude the policy and critic depend on.
    """

    name = "current_norm"

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] == 1:
            self._cache = None
            self._identity = True
            return x.copy()
        self._identity = False
        return super().forward(x)

    def backward(self, dy):
        if getattr(self, "_identity", False):
            return {}, dy
        return super().backward(dy)
