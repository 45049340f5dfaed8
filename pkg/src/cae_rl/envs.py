"""Desk-scale control tasks with a binary observation mask.

``po-integrator``  double integrator, state (x, v), x'' = u,
                   reward -(x^2 + 0.1 v^2)
``po-pendulum``    state (theta, omega), theta'' = -10 sin(theta) + u,
                   reward -(theta^2 + 0.1 omega^2 + 0.001 u^2)
``chain-pomdp``    the bundled two-state tabular chain (discrete actions)

Both continuous tasks integrate with explicit Euler at ``dt = 0.05``,
truncate at 200 steps, and by default observe only the position
coordinate. Rewards are evaluated at the pre-step state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError

DT = 0.05
HORIZON = 200


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    obs_dim: int
    mask: np.ndarray  # [obs_dim, state_dim], one-hot rows
    dt: float = DT
    horizon: int = HORIZON
    action_bound: float = 1.0


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


def selection_mask(observed, state_dim: int) -> np.ndarray:
    """Binary matrix keeping the listed state indices, in order."""
    observed = list(observed)
    if not observed or len(observed) > state_dim:
        raise ConfigurationError(f"mask must keep between 1 and {state_dim} states")
    M = np.zeros((len(observed), state_dim))
    for row, idx in enumerate(observed):
        if not 0 <= idx < state_dim:
            raise ConfigurationError(f"mask index {idx} outside state of size {state_dim}")
        M[row, idx] = 1.0
    return M


def mask_observe(state: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return mask @ state


class ControlEnv:
    """Base class for the continuous tasks. Subclasses define dynamics and reward."""

    name = "env"
    state_dim = 2
    action_dim = 1
    default_observed = (0,)

    def __init__(self, observed=None, action_bound: float = 1.0, dt: float = DT,
                 horizon: int = HORIZON):
        observed = self.default_observed if observed is None else tuple(observed)
        mask = selection_mask(observed, self.state_dim)
        self.spec = EnvSpec(self.name, self.state_dim, self.action_dim, len(observed), mask,
                            dt, horizon, action_bound)
        self.state = np.zeros(self.state_dim)
        self.t = 0
        self._done = True

    @property
    def obs_dim(self) -> int:
        return self.spec.obs_dim

    def observe(self) -> np.ndarray:
        return mask_observe(self.state, self.spec.mask)

    def reset(self, seed=None, state=None) -> np.ndarray:
        """Start an episode. ``state`` overrides the random initial draw."""
        if state is not None:
            self.state = np.array(state, dtype=np.float64)
        else:
            rng = np.random.default_rng(seed)
            self.state = rng.uniform(-0.5, 0.5, size=self.state_dim)
        self.t = 0
        self._done = False
        return self.observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise UsageError(f"{self.name}: step() called after the episode ended; call reset()")
        b = self.spec.action_bound
        u = np.clip(np.asarray(action, dtype=np.float64).reshape(self.action_dim), -b, b)
        reward = self.reward(self.state, u)
        self.state = self.state + self.spec.dt * self.derivative(self.state, u)
        self.t += 1
        truncated = self.t >= self.spec.horizon
        self._done = truncated
        return StepResult(self.observe(), float(reward), False, truncated)

    def derivative(self, state, u):
        raise NotImplementedError

    def reward(self, state, u) -> float:
        raise NotImplementedError


class POIntegrator(ControlEnv):
    name = "po-integrator"

    def derivative(self, state, u):
        return np.array([state[1], u[0]])

    def reward(self, state, u):
        x, v = state
        return -(x * x + 0.1 * v * v)


class POPendulum(ControlEnv):
    name = "po-pendulum"
    g_over_l = 10.0

    def derivative(self, state, u):
        theta, omega = state
        return np.array([omega, -self.g_over_l * np.sin(theta) + u[0]])

    def reward(self, state, u):
        theta, omega = state
        return -(theta * theta + 0.1 * omega * omega + 0.001 * u[0] * u[0])


class ChainPOMDPEnv:
    """Samples the bundled tabular chain; actions are integer indices."""

    name = "chain-pomdp"

    def __init__(self, pomdp=None, horizon: int = HORIZON):
        from .pomdp import bundled_path, load_pomdp

        self.pomdp = pomdp if pomdp is not None else load_pomdp(bundled_path("chain"))[0]
        self.horizon = horizon
        self._rng = np.random.default_rng()
        self.state = 0
        self.t = 0
        self._done = True

    def reset(self, seed=None, state=None) -> np.ndarray:
        self._rng = np.random.default_rng(seed)
        S = self.pomdp.n_states
        self.state = int(self._rng.integers(S)) if state is None else int(state)
        self.t = 0
        self._done = False
        return np.array([self._emit()])

    def _emit(self) -> int:
        return int(self._rng.choice(self.pomdp.n_obs, p=self.pomdp.O[self.state]))

    def step(self, action: int) -> StepResult:
        if self._done:
            raise UsageError(f"{self.name}: step() called after the episode ended; call reset()")
        reward = float(self.pomdp.R[self.state, action])
        self.state = int(self._rng.choice(self.pomdp.n_states, p=self.pomdp.P[self.state, action]))
        self.t += 1
        truncated = self.t >= self.horizon
        self._done = truncated
        return StepResult(np.array([self._emit()]), reward, False, truncated)


CONTINUOUS = {"po-integrator": POIntegrator, "po-pendulum": POPendulum}


def make_env(name: str, observed=None, **kwargs):
    if name in CONTINUOUS:
        return CONTINUOUS[name](observed=observed, **kwargs)
    if name == "chain-pomdp":
        return ChainPOMDPEnv(**kwargs)
    raise ConfigurationError(f"unknown environment {name!r}; choose from "
                             f"{sorted(CONTINUOUS) + ['chain-pomdp']}")
