"""Time the numba and numpy kernel backends on the hot paths.

    python benchmarks/bench_kernels.py [--repeats 30] [--batch 64]

Reports median milliseconds per call for the raw kernels, one encoder
forward/backward pass and one full agent update at default sizes.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from cae_rl.agent import Agent, AgentConfig, Batch
from cae_rl.encoder import EncoderConfig, HistoryEncoder
from cae_rl.nn import _kernels


def timed(fn, repeats: int) -> float:
    fn()  # warm-up, triggers compilation on the numba path
    samples = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t) * 1e3)
    return statistics.median(samples)


def cases(batch: int, rng):
    cfg = EncoderConfig()
    N = 3
    x = rng.normal(size=(batch, cfg.channels, N, 2))
    k = rng.normal(size=(cfg.channels, 3))
    dy = rng.normal(size=x.shape)
    dk = cfg.d_model // cfg.num_heads
    q, kk, v, dout = (rng.normal(size=(batch, N, cfg.num_heads, dk)) for _ in range(4))
    scale = 1.0 / np.sqrt(dk)
    attn, _ = _kernels.BACKENDS["numpy"]["attention_forward"](q, kk, v, scale)
    p, g = rng.normal(size=(256, 256)), rng.normal(size=(256, 256))
    m, s = np.zeros_like(p), np.zeros_like(p)

    enc = HistoryEncoder(2, N, cfg, rng)
    window = rng.normal(size=(batch, N, 2))
    grad_out = rng.normal(size=(batch, cfg.d_model))

    def encoder_pass():
        enc.forward(window)
        enc.backward(grad_out)

    agent = Agent(AgentConfig(variant="cae"), seed=0)
    W = agent.N + 1
    b = Batch(rng.normal(size=(batch, W, 1)), rng.uniform(-1, 1, size=(batch, W, 1)),
              rng.normal(size=batch), rng.normal(size=(batch, W, 1)), np.zeros(batch))

    return {
        "conv forward": lambda: _kernels.conv_axis2_forward(x, k),
        "conv backward": lambda: _kernels.conv_axis2_backward(x, k, dy),
        "attention forward": lambda: _kernels.attention_forward(q, kk, v, scale),
        "attention backward": lambda: _kernels.attention_backward(q, kk, v, attn, dout, scale),
        "adam 256x256": lambda: _kernels.adam_update(p, g, m, s, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8),
        "encoder fwd+bwd": encoder_pass,
        "agent update (cae)": lambda: agent.update(b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--batch", type=int, default=64)
    args = ap.parse_args(argv)

    backends = sorted(_kernels.BACKENDS)
    before = _kernels.active_backend()
    results: dict[str, dict[str, float]] = {}
    try:
        for name in backends:
            _kernels.set_backend(name)
            for label, fn in cases(args.batch, np.random.default_rng(0)).items():
                results.setdefault(label, {})[name] = timed(fn, args.repeats)
    finally:
        _kernels.set_backend(before)

    head = f"{'case':<22s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10s}"
    print(f"median ms per call, batch {args.batch}, {args.repeats} repeats")
    print(head)
    for label, row in results.items():
        line = f"{label:<22s}" + "".join(f"{row[b]:12.4f}" for b in backends)
        if len(backends) == 2:
            line += f"{row['numpy'] / row['numba']:10.2f}x"
        print(line)


if __name__ == "__main__":
    main()
