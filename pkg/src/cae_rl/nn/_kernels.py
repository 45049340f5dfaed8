"""Hot loops: depthwise convolution, per-head attention core, Adam update.

Each kernel has two interchangeable backends:

* numba ``@njit`` loops (default when numba imports),
* a pure-numpy path (shifted slices, batched matmul, ufuncs).

The convolution computes a per-channel 1-D correlation along axis 2 of a
``[B, C_in, T, D]`` array (``C_in`` is 1 or ``C``). The attention core
works on ``[B, L, H, d_k]`` query/key/value arrays.

Set ``CAE_RL_NUMBA=0`` in the environment to force the numpy path. The
choice is made once at import; tests can call both backends explicitly
through :data:`BACKENDS`.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CAE_RL_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _pad_axis2(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (0, 0)))


def conv_axis2_forward_np(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    B, cin, T, D = x.shape
    C, K = k.shape
    pad = K // 2
    xp = _pad_axis2(x, pad)
    y = np.zeros((B, C, T, D))
    for j in range(K):
        y += k[None, :, j, None, None] * xp[:, :, j:j + T, :]
    return y


def conv_axis2_backward_np(x: np.ndarray, k: np.ndarray, dy: np.ndarray):
    B, cin, T, D = x.shape
    C, K = k.shape
    pad = K // 2
    xp = _pad_axis2(x, pad)
    dk = np.empty((C, K))
    dxp = np.zeros((B, C, T + 2 * pad, D))
    for j in range(K):
        window = xp[:, :, j:j + T, :]
        dk[:, j] = (dy * window).sum(axis=(0, 2, 3))
        dxp[:, :, j:j + T, :] += k[None, :, j, None, None] * dy
    dx = dxp[:, :, pad:pad + T, :]
    if cin == 1:
        dx = dx.sum(axis=1, keepdims=True)
    return np.ascontiguousarray(dx), dk


def attention_forward_np(q, k, v, scale):
    qh = q.transpose(0, 2, 1, 3)
    kh = k.transpose(0, 2, 1, 3)
    vh = v.transpose(0, 2, 1, 3)
    s = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    attn = e / e.sum(axis=-1, keepdims=True)
    out = (attn @ vh).transpose(0, 2, 1, 3)
    return attn, np.ascontiguousarray(out)


def attention_backward_np(q, k, v, attn, dout, scale):
    qh = q.transpose(0, 2, 1, 3)
    kh = k.transpose(0, 2, 1, 3)
    vh = v.transpose(0, 2, 1, 3)
    dh = dout.transpose(0, 2, 1, 3)
    d_attn = dh @ vh.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dh
    ds = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ kh
    dk = ds.transpose(0, 1, 3, 2) @ qh
    back = (0, 2, 1, 3)
    return (np.ascontiguousarray(dq.transpose(back)), np.ascontiguousarray(dk.transpose(back)),
            np.ascontiguousarray(dv.transpose(back)))


def adam_update_np(p, g, m, v, lr, b1, b2, c1, c2, eps):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _conv_fwd_nb(x, k):
        B, cin, T, D = x.shape
        C, K = k.shape
        pad = K // 2
        y = np.zeros((B, C, T, D))
        for b in range(B):
            for c in range(C):
                ci = 0 if cin == 1 else c
                for t in range(T):
                    for j in range(K):
                        s = t + j - pad
                        if s < 0 or s >= T:
                            continue
                        w = k[c, j]
                        for d in range(D):
                            y[b, c, t, d] += w * x[b, ci, s, d]
        return y

    @njit(cache=True)
    def _conv_bwd_nb(x, k, dy):
        B, cin, T, D = x.shape
        C, K = k.shape
        pad = K // 2
        dx = np.zeros((B, cin, T, D))
        dk = np.zeros((C, K))
        for b in range(B):
            for c in range(C):
                ci = 0 if cin == 1 else c
                for t in range(T):
                    for j in range(K):
                        s = t + j - pad
                        if s < 0 or s >= T:
                            continue
                        w = k[c, j]
                        acc = 0.0
                        for d in range(D):
                            g = dy[b, c, t, d]
                            acc += g * x[b, ci, s, d]
                            dx[b, ci, s, d] += w * g
                        dk[c, j] += acc
        return dx, dk

    @njit(cache=True)
    def _attn_fwd_nb(q, k, v, scale):
        B, L, H, dk = q.shape
        attn = np.empty((B, H, L, L))
        out = np.zeros((B, L, H, dk))
        for b in range(B):
            for h in range(H):
                for i in range(L):
                    mx = -np.inf
                    for j in range(L):
                        acc = 0.0
                        for c in range(dk):
                            acc += q[b, i, h, c] * k[b, j, h, c]
                        acc *= scale
                        attn[b, h, i, j] = acc
                        if acc > mx:
                            mx = acc
                    tot = 0.0
                    for j in range(L):
                        e = np.exp(attn[b, h, i, j] - mx)
                        attn[b, h, i, j] = e
                        tot += e
                    for j in range(L):
                        a = attn[b, h, i, j] / tot
                        attn[b, h, i, j] = a
                        for c in range(dk):
                            out[b, i, h, c] += a * v[b, j, h, c]
        return attn, out

    @njit(cache=True)
    def _attn_bwd_nb(q, k, v, attn, dout, scale):
        B, L, H, dk = q.shape
        dq = np.zeros((B, L, H, dk))
        dkk = np.zeros((B, L, H, dk))
        dv = np.zeros((B, L, H, dk))
        da = np.empty(L)
        for b in range(B):
            for h in range(H):
                for i in range(L):
                    dot = 0.0
                    for j in range(L):
                        acc = 0.0
                        a = attn[b, h, i, j]
                        for c in range(dk):
                            g = dout[b, i, h, c]
                            acc += g * v[b, j, h, c]
                            dv[b, j, h, c] += a * g
                        da[j] = acc
                        dot += acc * a
                    for j in range(L):
                        ds = attn[b, h, i, j] * (da[j] - dot) * scale
                        for c in range(dk):
                            dq[b, i, h, c] += ds * k[b, j, h, c]
                            dkk[b, j, h, c] += ds * q[b, i, h, c]
        return dq, dkk, dv

    @njit(cache=True)
    def _adam_nb(p, g, m, v, lr, b1, b2, c1, c2, eps):
        pf = p.reshape(-1)
        gf = g.reshape(-1)
        mf = m.reshape(-1)
        vf = v.reshape(-1)
        for i in range(pf.size):
            gi = gf[i]
            mi = b1 * mf[i] + (1.0 - b1) * gi
            vi = b2 * vf[i] + (1.0 - b2) * (gi * gi)
            mf[i] = mi
            vf[i] = vi
            pf[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)

    def attention_forward_nb(q, k, v, scale):
        return _attn_fwd_nb(np.ascontiguousarray(q), np.ascontiguousarray(k),
                            np.ascontiguousarray(v), scale)

    def attention_backward_nb(q, k, v, attn, dout, scale):
        return _attn_bwd_nb(np.ascontiguousarray(q), np.ascontiguousarray(k),
                            np.ascontiguousarray(v), attn, np.ascontiguousarray(dout), scale)

    def adam_update_nb(p, g, m, v, lr, b1, b2, c1, c2, eps):
        if not (p.flags.c_contiguous and m.flags.c_contiguous and v.flags.c_contiguous):
            adam_update_np(p, g, m, v, lr, b1, b2, c1, c2, eps)
            return
        g = np.ascontiguousarray(np.broadcast_to(g, p.shape), dtype=np.float64)
        _adam_nb(p, g, m, v, lr, b1, b2, c1, c2, eps)

    def conv_axis2_forward_nb(x: np.ndarray, k: np.ndarray) -> np.ndarray:
        return _conv_fwd_nb(np.ascontiguousarray(x), np.ascontiguousarray(k))

    def conv_axis2_backward_nb(x: np.ndarray, k: np.ndarray, dy: np.ndarray):
        return _conv_bwd_nb(
            np.ascontiguousarray(x), np.ascontiguousarray(k), np.ascontiguousarray(dy)
        )

NUMPY_KERNELS = {
    "conv_forward": conv_axis2_forward_np,
    "conv_backward": conv_axis2_backward_np,
    "attention_forward": attention_forward_np,
    "attention_backward": attention_backward_np,
    "adam_update": adam_update_np,
}
BACKENDS = {"numpy": NUMPY_KERNELS}
if HAVE_NUMBA:
    BACKENDS["numba"] = {
        "conv_forward": conv_axis2_forward_nb,
        "conv_backward": conv_axis2_backward_nb,
        "attention_forward": attention_forward_nb,
        "attention_backward": attention_backward_nb,
        "adam_update": adam_update_nb,
    }

_active = "numba" if USE_NUMBA else "numpy"


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Switch kernels at runtime (benchmarks and equivalence tests)."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _active = name


def conv_axis2_forward(x, k):
    return BACKENDS[_active]["conv_forward"](x, k)


def conv_axis2_backward(x, k, dy):
    return BACKENDS[_active]["conv_backward"](x, k, dy)


def attention_forward(q, k, v, scale):
    """Per-head softmax attention. Returns ``(weights [B,H,L,L], out [B,L,H,dk])``."""
    return BACKENDS[_active]["attention_forward"](q, k, v, scale)


def attention_backward(q, k, v, attn, dout, scale):
    return BACKENDS[_active]["attention_backward"](q, k, v, attn, dout, scale)


def adam_update(p, g, m, v, lr, b1, b2, c1, c2, eps):
    """In-place Adam step on one array given bias-correction factors ``c1, c2``."""
    BACKENDS[_active]["adam_update"](p, g, m, v, lr, b1, b2, c1, c2, eps)
