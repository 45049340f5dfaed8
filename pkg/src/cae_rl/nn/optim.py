"""Adam with bias correction, updating parameter arrays in place."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from . import _kernels


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One Adam update of ``params`` (in place). Returns ``(params, state)``.

    Names missing from ``grads`` are treated as zero gradient.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        v = state.second_moment[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif np.shape(g) != p.shape:
            raise DimensionError(f"adam: gradient for {name} has shape {np.shape(g)}, expected {p.shape}")
        _kernels.adam_update(p, np.asarray(g, dtype=np.float64), m, v, state.learning_rate,
                             b1, b2, c1, c2, state.eps)
    return params, state


class Adam:
    """Adam over a named parameter collection that may contain aliases.

    Several names can point at the same array (shared modules). Those are
    stepped once, with their gradients summed.
    """

    def __init__(self, named_params: dict[str, np.ndarray], lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8):
        self.aliases: dict[str, list[str]] = {}
        self.params: dict[str, np.ndarray] = {}
        seen: dict[int, str] = {}
        for name, arr in named_params.items():
            canon = seen.get(id(arr))
            if canon is None:
                seen[id(arr)] = name
                self.params[name] = arr
                self.aliases[name] = [name]
            else:
                self.aliases[canon].append(name)
        self.state = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        merged = {}
        for canon, names in self.aliases.items():
            parts = [grads[n] for n in names if n in grads]
            if parts:
                merged[canon] = parts[0] if len(parts) == 1 else sum(parts)
        adam_step(self.params, merged, self.state)
