"""Fixed-architecture layers with hand-written backward passes.

Every layer keeps its parameters in ``self.params`` (name -> float64 array),
caches what it needs during :meth:`forward`, and returns
``(param_grads, input_grad)`` from :meth:`backward`. All layers accept any
number of leading batch axes.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError, DimensionError, StateError
from . import _kernels


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base class: parameter dict plus a forward cache."""

    name = "layer"

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self._cache = None

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``y = W x + b`` applied over the last axis."""
    if x.ndim > 2:
        # a 2-D matmul is far cheaper than numpy's batched path
        y = x.reshape(-1, x.shape[-1]) @ weight.T + bias
        return y.reshape(x.shape[:-1] + (weight.shape[0],))
    return x @ weight.T + bias


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng=None, name="linear"):
        super().__init__()
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            w = np.zeros((out_features, in_features))
        else:
            w = uniform_init(rng, (out_features, in_features), in_features)
        self.params = {"weight": w, "bias": np.zeros(out_features)}

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"{self.name}: expected last dim {self.in_features}, got {x.shape[-1]}"
            )
        self._cache = x
        return linear(x, self.params["weight"], self.params["bias"])

    def backward(self, dy):
        x = self._cached()
        x2 = x.reshape(-1, self.in_features)
        dy2 = dy.reshape(-1, self.out_features)
        grads = {"weight": dy2.T @ x2, "bias": dy2.sum(axis=0)}
        return grads, (dy2 @ self.params["weight"]).reshape(x.shape)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, dy):
        return {}, np.where(self._cached(), dy, 0.0)


class Tanh(Layer):
    name = "tanh"

    def forward(self, x):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, dy):
        y = self._cached()
        return {}, dy * (1.0 - y * y)


# ---------------------------------------------------------------------------
# depthwise separable convolution over a (time x feature) matrix
# ---------------------------------------------------------------------------

def _as4d(x: np.ndarray):
    """[..., T, D] -> ([B, 1, T, D], leading shape)."""
    lead = x.shape[:-2]
    return x.reshape((-1, 1) + x.shape[-2:]), lead


def _conv_obs_forward(z, k):
    # correlate along the feature axis by swapping it into axis 2
    zt = np.ascontiguousarray(z.transpose(0, 1, 3, 2))
    return _kernels.conv_axis2_forward(zt, k).transpose(0, 1, 3, 2)


def _conv_obs_backward(z, k, dy):
    zt = np.ascontiguousarray(z.transpose(0, 1, 3, 2))
    dyt = np.ascontiguousarray(dy.transpose(0, 1, 3, 2))
    dzt, dk = _kernels.conv_axis2_backward(zt, k, dyt)
    return dzt.transpose(0, 1, 3, 2), dk


def _depthwise_forward(x4, time_kernel, obs_kernel, pw_weight, pw_bias):
    z = _kernels.conv_axis2_forward(x4, time_kernel)   # [B, C, T, D]
    u = np.ascontiguousarray(_conv_obs_forward(z, obs_kernel))
    B, C, T, D = u.shape
    y = (pw_weight @ u.reshape(B, C, T * D)).reshape(B, -1, T, D)
    y += pw_bias[None, :, None, None]
    return y, (x4, z, u)


def depthwise_separable(x, time_kernel, obs_kernel, pw_weight, pw_bias):
    """Depthwise filtering of a ``[..., T, D]`` matrix, then a 1x1 mix.

    Each channel ``c`` correlates the input along time with
    ``time_kernel[c]`` and then along the feature axis with
    ``obs_kernel[c]`` (zero same-padding on both axes). The pointwise
    weight mixes the ``C`` channels into ``out_ch``. Output is
    ``[..., out_ch, T, D]``.
    """
    x = np.asarray(x, dtype=np.float64)
    x4, lead = _as4d(x)
    y, _ = _depthwise_forward(x4, time_kernel, obs_kernel, pw_weight, pw_bias)
    return y.reshape(lead + y.shape[1:])


class DepthwiseSeparableConv(Layer):
    def __init__(self, channels: int, out_channels: int, k_time: int = 3, k_obs: int = 3,
                 rng=None, name="conv"):
        super().__init__()
        if k_time % 2 == 0 or k_obs % 2 == 0:
            raise ConfigurationError(f"{name}: kernel lengths must be odd, got {k_time}, {k_obs}")
        if channels < 1 or out_channels < 1:
            raise ConfigurationError(f"{name}: channel counts must be positive")
        self.name = name
        self.channels = channels
        self.out_channels = out_channels
        if rng is None:
            tk = np.zeros((channels, k_time))
            tk[:, k_time // 2] = 1.0
            ok = np.zeros((channels, k_obs))
            ok[:, k_obs // 2] = 1.0
            pw = np.eye(out_channels, channels)
        else:
            tk = uniform_init(rng, (channels, k_time), k_time)
            ok = uniform_init(rng, (channels, k_obs), k_obs)
            pw = uniform_init(rng, (out_channels, channels), channels)
        self.params = {
            "time_kernel": tk,
            "obs_kernel": ok,
            "pointwise_weight": pw,
            "pointwise_bias": np.zeros(out_channels),
        }

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[-2] < 1 or x.shape[-1] < 1:
            raise ConfigurationError(
                f"{self.name}: kernel longer than padded axis for input shape {x.shape}"
            )
        x4, lead = _as4d(x)
        p = self.params
        y, inner = _depthwise_forward(
            x4, p["time_kernel"], p["obs_kernel"], p["pointwise_weight"], p["pointwise_bias"]
        )
        self._cache = (inner, lead)
        return y.reshape(lead + y.shape[1:])

    def backward(self, dy):
        (x4, z, u), lead = self._cached()
        p = self.params
        B, C, T, D = u.shape
        dy3 = dy.reshape(B, self.out_channels, T * D)
        u3 = u.reshape(B, C, T * D)
        d_pw = np.einsum("bot,bct->oc", dy3, u3)
        d_pb = dy3.sum(axis=(0, 2))
        du = (p["pointwise_weight"].T @ dy3).reshape(B, C, T, D)
        dz, d_ok = _conv_obs_backward(z, p["obs_kernel"], du)
        dx4, d_tk = _kernels.conv_axis2_backward(x4, p["time_kernel"], np.ascontiguousarray(dz))
        grads = {
            "time_kernel": d_tk,
            "obs_kernel": d_ok,
            "pointwise_weight": d_pw,
            "pointwise_bias": d_pb,
        }
        return grads, dx4.reshape(lead + (T, D))


# ---------------------------------------------------------------------------
# multi-head self-attention
# ---------------------------------------------------------------------------

def softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _attention_forward(x3, W_q, W_k, W_v, W_o, num_heads):
    B, L, d = x3.shape
    d_k = d // num_heads
    qkv = x3.reshape(-1, d) @ np.concatenate((W_q, W_k, W_v)).T
    q, k, v = (np.ascontiguousarray(qkv[:, i * d:(i + 1) * d]).reshape(B, L, num_heads, d_k)
               for i in range(3))
    scale = 1.0 / math.sqrt(d_k)
    attn, heads = _kernels.attention_forward(q, k, v, scale)
    heads = heads.reshape(B, L, d)
    y = (heads.reshape(-1, d) @ W_o.T).reshape(B, L, d)
    return y, (x3, q, k, v, attn, heads, scale)


def multi_head_attention(x, W_q, W_k, W_v, W_o, num_heads: int, return_weights=False):
    """Self-attention ``softmax(Q K^T / sqrt(d_k)) V`` per head, concat, project.

    ``x`` is ``[..., L, d_model]``; projections follow ``y = W x``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    if d % num_heads:
        raise ConfigurationError(f"d_model={d} not divisible by num_heads={num_heads}")
    lead = x.shape[:-2]
    y, cache = _attention_forward(x.reshape((-1,) + x.shape[-2:]), W_q, W_k, W_v, W_o, num_heads)
    y = y.reshape(lead + y.shape[1:])
    if return_weights:
        attn = cache[4]
        return y, attn.reshape(lead + attn.shape[1:])
    return y


class MultiHeadSelfAttention(Layer):
    def __init__(self, d_model: int, num_heads: int, rng=None, name="attn"):
        super().__init__()
        if num_heads < 1 or d_model % num_heads:
            raise ConfigurationError(
                f"{name}: d_model={d_model} not divisible by num_heads={num_heads}"
            )
        self.name = name
        self.d_model = d_model
        self.num_heads = num_heads
        self.d_k = d_model // num_heads
        shape = (d_model, d_model)
        if rng is None:
            mats = [np.zeros(shape), np.zeros(shape), np.eye(d_model), np.eye(d_model)]
        else:
            mats = [uniform_init(rng, shape, d_model) for _ in range(4)]
        self.params = dict(zip(("W_q", "W_k", "W_v", "W_o"), mats))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[-1] != self.d_model or x.shape[-2] < 1:
            raise DimensionError(f"{self.name}: expected [..., L>=1, {self.d_model}], got {x.shape}")
        lead = x.shape[:-2]
        p = self.params
        y, inner = _attention_forward(
            x.reshape((-1,) + x.shape[-2:]), p["W_q"], p["W_k"], p["W_v"], p["W_o"], self.num_heads
        )
        self._cache = (inner, lead)
        return y.reshape(lead + y.shape[1:])

    def backward(self, dy):
        (x3, q, k, v, attn, heads, scale), lead = self._cached()
        p = self.params
        B, L, d = x3.shape
        dy3 = dy.reshape(B, L, d)
        x2 = x3.reshape(-1, d)
        d_Wo = dy3.reshape(-1, d).T @ heads.reshape(-1, d)
        d_heads = (dy3.reshape(-1, d) @ p["W_o"]).reshape(q.shape)
        dq, dk, dv = _kernels.attention_backward(q, k, v, attn, d_heads, scale)
        dq2 = dq.reshape(-1, d)
        dk2 = dk.reshape(-1, d)
        dv2 = dv.reshape(-1, d)
        grads = {
            "W_q": dq2.T @ x2,
            "W_k": dk2.T @ x2,
            "W_v": dv2.T @ x2,
            "W_o": d_Wo,
        }
        dx = dq2 @ p["W_q"] + dk2 @ p["W_k"] + dv2 @ p["W_v"]
        return grads, dx.reshape(lead + (L, d))


# ---------------------------------------------------------------------------
# pooling and normalization
# ---------------------------------------------------------------------------

def average_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the time axis (second to last)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-2] == 0:
        raise DimensionError(f"average_pool: empty time axis in shape {x.shape}")
    return x.mean(axis=-2)


class AveragePool(Layer):
    name = "pool"

    def forward(self, x):
        y = average_pool(x)
        self._cache = x.shape
        return y

    def backward(self, dy):
        shape = self._cached()
        L = shape[-2]
        dx = np.broadcast_to(dy[..., None, :] / L, shape).copy()
        return {}, dx


NORM_EPS = 1e-5


def pool_normalize(x: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Root-mean-square normalization over the feature axis.

    ``y = x / sqrt(mean(x**2) + eps)``; the zero vector maps to zero.
    """
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)


class PoolNormalize(Layer):
    name = "norm"

    def __init__(self, eps: float = NORM_EPS):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        r = np.sqrt((x * x).mean(axis=-1, keepdims=True) + self.eps)
        self._cache = (x, r)
        return x / r

    def backward(self, dy):
        x, r = self._cached()
        D = x.shape[-1]
        dot = (dy * x).sum(axis=-1, keepdims=True)
        return {}, dy / r - x * dot / (D * r ** 3)


# ---------------------------------------------------------------------------
# sequential container
# ---------------------------------------------------------------------------

class Sequential(Layer):
    """Chain of named layers; parameter names are ``"<layer>.<param>"``."""

    def __init__(self, layers: list[tuple[str, Layer]], name="seq"):
        super().__init__()
        self.name = name
        self.layers = layers
        self.params = {
            f"{lname}.{pname}": arr
            for lname, layer in layers
            for pname, arr in layer.params.items()
        }

    def forward(self, x):
        for _, layer in self.layers:
            x = layer.forward(x)
        self._cache = True
        return x

    def backward(self, dy):
        self._cached()
        grads = {}
        for lname, layer in reversed(self.layers):
            g, dy = layer.backward(dy)
            for pname, arr in g.items():
                grads[f"{lname}.{pname}"] = arr
        return grads, dy


def mlp(in_features: int, widths, out_features: int, rng=None, name="mlp") -> Sequential:
    """Linear/ReLU stack ending in a bare linear layer."""
    layers: list[tuple[str, Layer]] = []
    prev = in_features
    for i, w in enumerate(widths):
        layers.append((f"{i}", Linear(prev, w, rng, name=f"{name}.{i}")))
        layers.append((f"relu{i}", ReLU()))
        prev = w
    layers.append((f"{len(widths)}", Linear(prev, out_features, rng, name=f"{name}.{len(widths)}")))
    return Sequential(layers, name=name)
