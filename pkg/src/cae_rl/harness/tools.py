"""Oracle verification, history-length ablation and parameter accounting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agent import build_networks
from ..nn.params import param_count, unique_arrays
from ..pomdp import (
    belief_chain,
    brute_force_window_transition,
    compare_chains,
    exact_window_posterior,
    load_policy,
    load_pomdp,
)
from .config import RunConfig
from .loop import read_metrics, train

VERIFY_TOL = 1e-10


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@dataclass
class VerifyReport:
    deviations: dict[str, float]
    identity_collapse: float | None = None
    collapse_checked: bool = False
    exact_filter_gap: float = 0.0
    tolerance: float = VERIFY_TOL

    @property
    def ok(self) -> bool:
        devs = list(self.deviations.values())
        if self.collapse_checked:
            devs.append(self.identity_collapse)
        return all(d <= self.tolerance for d in devs)

    def lines(self) -> list[str]:
        out = [f"{k:>8s}  max |dev| = {v:.3e}" for k, v in self.deviations.items()]
        if self.identity_collapse is not None:
            tag = "" if self.collapse_checked else " (N > 0: belief is propagated, not checked)"
            out.append(f"identity observation: max |P_bar - P| = {self.identity_collapse:.3e}{tag}")
        out.append(f"note: window belief vs exact path filter differs by up to "
                   f"{self.exact_filter_gap:.3e} (informational, not checked)")
        out.append("PASS" if self.ok else f"FAIL: deviation above {self.tolerance:g}")
        return out


def verify(pomdp_file, N: int, policy_file=None) -> VerifyReport:
    """Compare the closed-form window model against path enumeration.

    Without a policy file the uniform policy over actions is used.
    """
    pomdp, prior = load_pomdp(pomdp_file)
    if policy_file is None:
        pi = np.full((pomdp.n_states, pomdp.n_actions), 1.0 / pomdp.n_actions)
    else:
        pi = load_policy(policy_file, pomdp)
    oracle = brute_force_window_transition(pomdp, pi, N, prior)  # size guard fires first
    chain = belief_chain(pomdp, pi, N, prior)
    report = VerifyReport(compare_chains(chain, oracle))

    if pomdp.n_obs == pomdp.n_states and np.array_equal(pomdp.O, np.eye(pomdp.n_states)):
        # with o = s and N = 0 the single observation pins the state
        gap = 0.0
        for w, window in enumerate(chain.windows):
            if chain.feasible[w]:
                gap = max(gap, float(np.abs(chain.P_bar[w] - pomdp.P[window[0]]).max()))
        report.identity_collapse = gap
        report.collapse_checked = N == 0

    gap = 0.0
    for w, window in enumerate(chain.windows):
        if chain.feasible[w]:
            exact = exact_window_posterior(pomdp, pi, window, prior)
            gap = max(gap, float(np.abs(chain.Q_k[-1][w] - exact).max()))
    report.exact_filter_gap = gap
    return report


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def moving_average(x, window: int = 5) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    x = np.asarray(x, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def final_window(values, fraction: float = 0.2) -> np.ndarray:
    """Trailing ``fraction`` of a series (at least one point)."""
    values = np.asarray(values, dtype=np.float64)
    k = max(1, math.ceil(fraction * len(values)))
    return values[-k:]


@dataclass
class AblationResult:
    summary: list[dict]
    curves: dict[int, np.ndarray] = field(default_factory=dict)
    steps: list[int] = field(default_factory=list)


def ablate(cfg: RunConfig, lens, log=None) -> AblationResult:
    """One seeded run per history length under ``cfg.out/N<len>``.

    Writes ``summary.csv`` and ``curves.csv`` (eval return smoothed with a
    window-5 moving average) into ``cfg.out``.
    """
    lens = [int(n) for n in lens]
    base = Path(cfg.out)
    runs = [cfg.with_(history_len=n, out=str(base / f"N{n}")) for n in lens]  # validate all first
    summary, curves, steps = [], {}, []
    for n, rc in zip(lens, runs):
        if log:
            log(f"history_len={n}")
        train(rc, log=log)
        rows = read_metrics(Path(rc.out) / "metrics.csv")
        ev = [r["eval_return"] for r in rows]
        tail = final_window(ev)
        train_ret = [r["episodic_return"] for r in rows if r["episodic_return"] is not None]
        summary.append({
            "history_len": n,
            "final_eval_mean": float(tail.mean()),
            "final_eval_std": float(tail.std()),
            "final_train_mean": float(final_window(train_ret).mean()) if train_ret else None,
            "steps": rc.total_steps,
            "seed": rc.seed,
        })
        curves[n] = moving_average(ev, 5)
        steps = [r["step"] for r in rows]

    with open(base / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        for row in summary:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    with open(base / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"N{n}" for n in lens])
        for i, s in enumerate(steps):
            w.writerow([s] + [repr(float(curves[n][i])) for n in lens])
    return AblationResult(summary, curves, steps)


# ---------------------------------------------------------------------------
# params
# ---------------------------------------------------------------------------

def params_table(cfg: RunConfig) -> list[tuple[str, int]]:
    """Parameter counts per subnetwork branch, then the distinct-array total.

    A shared encoder is counted where it first appears and listed as
    shared afterwards.
    """
    actor, c1, c2 = build_networks(cfg.agent, np.random.default_rng(0))
    rows = []
    seen: set[int] = set()
    everything = {}
    for net_name, net in (("actor", actor), ("critic1", c1), ("critic2", c2)):
        groups: dict[str, dict] = {}
        for k, v in net.params.items():
            groups.setdefault(k.split(".", 1)[0], {})[k] = v
            everything[f"{net_name}.{k}"] = v
        for g, params in groups.items():
            fresh = {k: v for k, v in unique_arrays(params).items() if id(v) not in seen}
            label = f"{net_name}.{g}"
            if params and not fresh:
                label += " (shared)"
            rows.append((label, param_count(fresh) if fresh else 0))
            seen.update(id(v) for v in params.values())
    rows.append(("total", param_count(everything)))
    return rows


def encoder_params(rows: list[tuple[str, int]]) -> int:
    return sum(n for name, n in rows if ".enc_" in name)
