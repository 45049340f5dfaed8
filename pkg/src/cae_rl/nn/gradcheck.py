"""Central finite differences for checking hand-written backward passes."""
from __future__ import annotations

import numpy as np


def numerical_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar ``f()`` w.r.t. array ``x``, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max abs difference scaled by the larger of the two gradients' max magnitude."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def check_layer(layer, x: np.ndarray, rng: np.random.Generator, h: float = 1e-5):
    """Compare analytic and numeric gradients of ``sum(w * layer(x))``.

    ``w`` is a fixed random projection so every output contributes. Returns
    a dict of relative errors keyed by ``"input"`` and each parameter name.
    """
    x = np.array(x, dtype=np.float64)
    w = rng.uniform(-1.0, 1.0, size=layer.forward(x).shape)

    def loss():
        return float((w * layer.forward(x)).sum())

    loss()
    grads, dx = layer.backward(w)
    errors = {"input": rel_error(dx, numerical_grad(loss, x, h))}
    for name, p in layer.params.items():
        errors[name] = rel_error(grads[name], numerical_grad(loss, p, h))
    return errors
