"""Run configuration: TOML file with ``[run]`` and ``[agent]`` tables, flags win."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli_w

from ..agent.config import AgentConfig
from ..envs import CONTINUOUS, make_env
from ..errors import ConfigurationError
from ..pomdp import _read_toml

# Desk-scale budget. Long published runs use 1e6 steps; this default is a
# deliberate scale-down and is written into every echoed config.
DEFAULT_STEPS = 30_000
SCALE_NOTE = "desk-scale run: 3e4 default steps instead of 1e6"


@dataclass
class RunConfig:
    env: str = "po-integrator"
    agent: AgentConfig = field(default_factory=AgentConfig)
    observed: tuple[int, ...] | None = None
    total_steps: int = DEFAULT_STEPS
    warmup_steps: int = 1000
    eval_every: int = 1000
    eval_episodes: int = 5
    seed: int = 0
    out: str = "runs/run"

    def __post_init__(self):
        if self.env not in CONTINUOUS:
            raise ConfigurationError(
                f"training needs a continuous environment, one of {sorted(CONTINUOUS)}; got {self.env!r}"
            )
        if self.observed is not None:
            self.observed = tuple(int(i) for i in self.observed)
        N = self.agent.N
        if not self.total_steps > self.warmup_steps >= N + 1:
            raise ConfigurationError(
                f"need total_steps > warmup_steps >= N+1, got {self.total_steps}, "
                f"{self.warmup_steps}, N={N}"
            )
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigurationError("eval_every and eval_episodes must be positive")

    @property
    def variant(self) -> str:
        return self.agent.variant

    @property
    def N(self) -> int:
        return self.agent.N

    def make_env(self):
        return make_env(self.env, observed=self.observed,
                        action_bound=self.agent.action_bound)

    def with_(self, **kw) -> "RunConfig":
        """Copy with run fields or agent fields replaced (agent keys are routed)."""
        agent_keys = {f.name for f in fields(AgentConfig)}
        agent_kw = {k: kw.pop(k) for k in list(kw) if k in agent_keys}
        agent = self.agent
        if agent_kw:
            d = agent.to_dict()
            if "variant" in agent_kw and "history_len" not in agent_kw:
                d["history_len"] = None  # re-resolve the variant default
            d.update(agent_kw)
            agent = AgentConfig.from_dict(d)
        return replace(self, agent=agent, **kw)

    def to_dict(self) -> dict:
        run = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "agent"}
        if run["observed"] is None:
            del run["observed"]
        else:
            run["observed"] = list(run["observed"])
        return {"run": run, "agent": self.agent.to_dict(), "note": {"scale": SCALE_NOTE}}


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"agent"}


def build_run_config(doc: dict, overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig from a parsed document and CLI overrides.

    ``overrides`` may hold run keys or agent keys; ``None`` values are ignored.
    ``obs_dim``/``act_dim`` always come from the environment.
    """
    unknown = set(doc) - {"run", "agent", "note"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    run = dict(doc.get("run", {}))
    agent = dict(doc.get("agent", {}))
    bad = set(run) - _RUN_KEYS
    if bad:
        raise ConfigurationError(f"unknown [run] options: {sorted(bad)}")
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in _RUN_KEYS:
            run[k] = v
        else:
            if k == "variant" and (overrides or {}).get("history_len") is None:
                agent.pop("history_len", None)
            agent[k] = v
    env_name = run.get("env", RunConfig.env)
    env = make_env(env_name, observed=run.get("observed"))
    if env_name in CONTINUOUS:
        agent["obs_dim"] = env.obs_dim
        agent["act_dim"] = env.spec.action_dim
    return RunConfig(agent=AgentConfig.from_dict(agent), **run)


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    if not Path(path).is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return build_run_config(_read_toml(path), overrides)


def write_run_config(cfg: RunConfig, path) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.to_dict(), fh)
