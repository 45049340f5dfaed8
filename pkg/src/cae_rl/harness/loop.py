"""Training loop over fixed-length history queues, evaluation rollouts, metrics."""
from __future__ import annotations

import csv
import math
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agent import Agent, ReplayBuffer, Transition
from ..envs import make_env
from ..errors import ConfigurationError, DimensionError
from .config import RunConfig, write_run_config

METRIC_FIELDS = ("step", "episode", "episodic_return", "eval_return", "eval_std",
                 "actor_loss", "critic_loss", "mean_q", "seed")


def harness_streams(seed: int):
    """Env-reset, action-fill, replay-sampling and eval streams for one run.

    The extra entropy word keeps these apart from the agent's own streams.
    """
    ss = np.random.SeedSequence([seed, 0x5EED])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def episode_seeds(seed: int, episodes: int) -> list[int]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    return [int(s) for s in rng.integers(0, 2**32, size=episodes)]


class HistoryQueues:
    """Newest-first observation queue (N+1) and past-action queue (N)."""

    def __init__(self, N: int, act_dim: int):
        self.N = N
        self.act_dim = act_dim
        self.obs: deque = deque(maxlen=N + 1)
        self.act: deque = deque(maxlen=N)

    def reset(self, obs) -> None:
        self.obs.clear()
        self.act.clear()
        self.obs.appendleft(np.array(obs, dtype=np.float64))

    @property
    def full(self) -> bool:
        return len(self.obs) == self.N + 1 and len(self.act) == self.N

    def s_bar(self) -> np.ndarray:
        return np.array(self.obs)

    def past_actions(self) -> np.ndarray:
        return np.array(self.act).reshape(self.N, self.act_dim)

    def a_bar(self, current) -> np.ndarray:
        return np.concatenate([np.asarray(current, dtype=np.float64)[None], self.past_actions()])

    def push(self, action, obs) -> None:
        self.act.appendleft(np.array(action, dtype=np.float64))
        self.obs.appendleft(np.array(obs, dtype=np.float64))


def rollout(env, policy, N: int, act_dim: int, seed: int) -> float:
    """One episode. ``policy(s_bar, a_bar)`` acts once the window is full.

    Before that the queues are filled with zero actions. ``policy=None``
    gives the uniform-random baseline for the whole episode.
    """
    q = HistoryQueues(N, act_dim)
    q.reset(env.reset(seed=seed))
    b = env.spec.action_bound
    rng = np.random.default_rng(seed)
    total = 0.0
    while True:
        if policy is None:
            a = rng.uniform(-b, b, size=act_dim)
        elif not q.full:
            a = np.zeros(act_dim)
        else:
            a = policy(q.s_bar(), q.a_bar(np.zeros(act_dim)))
        res = env.step(a)
        total += res.reward
        if res.terminated or res.truncated:
            return total
        q.push(a, res.observation)


def evaluate_agent(agent: Agent, env, episodes: int, seed: int) -> list[float]:
    if env.obs_dim != agent.config.obs_dim or env.spec.action_dim != agent.config.act_dim:
        raise DimensionError(
            f"agent expects obs/act dims {agent.config.obs_dim}/{agent.config.act_dim}, "
            f"env {env.spec.name} has {env.obs_dim}/{env.spec.action_dim}"
        )

    def policy(s_bar, a_bar):
        return agent.select_action(s_bar, a_bar, explore=False)

    return [rollout(env, policy, agent.N, agent.config.act_dim, s) for s in episode_seeds(seed, episodes)]


def random_baseline(env_name: str, episodes: int, seed: int, observed=None) -> list[float]:
    env = make_env(env_name, observed=observed)
    return [rollout(env, None, 0, env.spec.action_dim, s) for s in episode_seeds(seed, episodes)]


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: list[float]


def evaluate(checkpoint, env: str | None = None, episodes: int = 5, seed: int = 0,
             observed=None) -> EvalResult:
    """Deterministic rollouts of a saved agent. The env defaults to the one it trained on."""
    agent, meta = Agent.load(checkpoint)
    run = meta.get("run", {}).get("run", {})
    name = env or run.get("env")
    if name is None:
        raise ConfigurationError("checkpoint does not record an environment; pass one")
    if observed is None and name == run.get("env"):
        observed = run.get("observed")
    e = make_env(name, observed=observed, action_bound=agent.config.action_bound)
    returns = evaluate_agent(agent, e, episodes, seed)
    return EvalResult(float(np.mean(returns)), float(np.std(returns)), returns)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise FloatingPointError(f"non-finite metric value {x}")
    return repr(x)


def _mean_or_none(xs):
    return float(np.mean(xs)) if xs else None


@dataclass
class TrainResult:
    out: Path
    rows: list[dict]
    agent: Agent
    buffer: ReplayBuffer


def train(cfg: RunConfig, log=None) -> TrainResult:
    """Run one seeded training job and write its artifacts into ``cfg.out``.

    Files: ``metrics.csv`` (deterministic), ``timing.csv`` (wall clock),
    ``config.toml`` (effective config) and ``checkpoint.ckpt``.
    """
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_run_config(cfg, out / "config.toml")
    except OSError as exc:
        raise ConfigurationError(f"cannot write to output directory {out}: {exc}") from exc

    acfg = cfg.agent
    N, act_dim = acfg.N, acfg.act_dim
    env = cfg.make_env()
    eval_env = cfg.make_env()
    agent = Agent(acfg, cfg.seed)
    buffer = ReplayBuffer(acfg.buffer_capacity, N + 1, acfg.obs_dim, act_dim)
    env_rng, fill_rng, sample_rng, eval_rng = harness_streams(cfg.seed)
    eval_seed = int(eval_rng.integers(0, 2**32))
    b = acfg.action_bound

    rows: list[dict] = []
    ep_returns: list[float] = []
    losses = {"actor_loss": [], "critic_loss": [], "mean_q": []}
    q = HistoryQueues(N, act_dim)
    step = episode = 0
    t0 = time.perf_counter()

    mf = open(out / "metrics.csv", "w", newline="")
    tf = open(out / "timing.csv", "w", newline="")
    with mf, tf:
        mw = csv.writer(mf)
        mw.writerow(METRIC_FIELDS)
        tw = csv.writer(tf)
        tw.writerow(("step", "wall_ms"))
        while step < cfg.total_steps:
            q.reset(env.reset(seed=int(env_rng.integers(0, 2**32))))
            ep_ret = 0.0
            done = False
            while not done and step < cfg.total_steps:
                if not q.full:
                    # queue fill with random actions; nothing is stored yet
                    a = fill_rng.uniform(-b, b, size=act_dim)
                    res = env.step(a)
                    q.push(a, res.observation)
                else:
                    s_bar = q.s_bar()
                    if step < cfg.warmup_steps:
                        a = fill_rng.uniform(-b, b, size=act_dim)
                    else:
                        a = agent.select_action(s_bar, q.a_bar(np.zeros(act_dim)), explore=True)
                    a_bar = q.a_bar(a)
                    res = env.step(a)
                    q.push(a, res.observation)
                    buffer.push(Transition(s_bar, a_bar, res.reward, q.s_bar(), res.terminated))
                    if step >= cfg.warmup_steps and len(buffer) >= acfg.batch_size:
                        info = agent.update(buffer.sample(acfg.batch_size, sample_rng))
                        for k in losses:
                            if info[k] is not None:
                                losses[k].append(info[k])
                step += 1
                ep_ret += res.reward
                done = res.terminated or res.truncated
                if done:
                    episode += 1
                    ep_returns.append(ep_ret)
                if step % cfg.eval_every == 0 or step == cfg.total_steps:
                    evals = evaluate_agent(agent, eval_env, cfg.eval_episodes, eval_seed)
                    row = {
                        "step": step, "episode": episode,
                        "episodic_return": _mean_or_none(ep_returns),
                        "eval_return": float(np.mean(evals)), "eval_std": float(np.std(evals)),
                        **{k: _mean_or_none(v) for k, v in losses.items()},
                        "seed": cfg.seed,
                    }
                    mw.writerow([_fmt(row[k]) for k in METRIC_FIELDS])
                    mf.flush()
                    tw.writerow((step, f"{(time.perf_counter() - t0) * 1e3:.1f}"))
                    rows.append(row)
                    ep_returns = []
                    losses = {k: [] for k in losses}
                    if log:
                        log(f"step {step:>7d}  eval {row['eval_return']:10.3f}  "
                            f"critic {_fmt(row['critic_loss']) or '-'}")

    agent.save(out / "checkpoint.ckpt", extra_meta={"run": cfg.to_dict()})
    return TrainResult(out, rows, agent, buffer)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            r[k] = None if v == "" else (int(v) if k in ("step", "episode", "seed") else float(v))
    return rows
