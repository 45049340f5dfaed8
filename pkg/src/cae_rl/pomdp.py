"""Tabular POMDP -> window-MDP reformulation.

Given a finite POMDP ``(S, A, P, R, S_o, O)`` with action-independent
observations and a state policy ``pi(a|s)``, the window state
``[o_t, ..., o_{t-N}]`` (newest first) induces:

* ``P_pi[s, s']``           state transitions under ``pi``
* ``O_k[s, o]``             probability of seeing ``o`` k steps after ``s``
* ``joint(window | s)``     product of the ``O_k`` over the window
* ``Q_0 ... Q_N``           belief over the window's oldest state, pushed forward
* ``P_bar[o' | window, a]`` next-observation law of the window MDP
* ``varpi[a | window]``     action law induced by ``pi`` under belief ``Q_N``

Tables are indexed with states on the leading axis (``O[s, o]``,
``P[s, a, s']``). The ``brute_force_*`` functions recompute the same
quantities by enumerating hidden state paths and are used as oracles.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ImpossibleEvidenceError, OracleSizeError, ValidationError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

TABLE_TOL = 1e-12
ORACLE_BUDGET = 10_000_000


def _check_stochastic(table: np.ndarray, label: str, tol: float = TABLE_TOL) -> None:
    if np.any(table < 0):
        idx = tuple(int(i) for i in np.argwhere(table < 0)[0])
        raise ValidationError(f"{label}{list(idx)} is negative")
    sums = table.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > tol)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        row = "".join(f"[{i}]" for i in idx)
        raise ValidationError(f"{label}{row} sums to {sums[idx]:.12g}, expected 1")


@dataclass
class TabularPOMDP:
    P: np.ndarray  # [S, A, S]
    R: np.ndarray  # [S, A]
    O: np.ndarray  # [S, S_o]

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.O = np.asarray(self.O, dtype=np.float64)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValidationError(f"P must be [S, A, S], got {self.P.shape}")
        S, A, _ = self.P.shape
        if self.R.shape != (S, A):
            raise ValidationError(f"R must be [{S}, {A}], got {self.R.shape}")
        if self.O.ndim != 2 or self.O.shape[0] != S:
            raise ValidationError(f"O must be [{S}, S_o], got {self.O.shape}")
        _check_stochastic(self.P, "P")
        _check_stochastic(self.O, "O")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def n_obs(self) -> int:
        return self.O.shape[1]


def validate_policy(pi: np.ndarray, pomdp: TabularPOMDP) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (pomdp.n_states, pomdp.n_actions):
        raise ValidationError(f"pi must be [{pomdp.n_states}, {pomdp.n_actions}], got {pi.shape}")
    _check_stochastic(pi, "pi")
    return pi


def uniform_prior(n_states: int) -> np.ndarray:
    return np.full(n_states, 1.0 / n_states)


def _prior(pomdp: TabularPOMDP, prior) -> np.ndarray:
    if prior is None:
        return uniform_prior(pomdp.n_states)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (pomdp.n_states,):
        raise ValidationError(f"prior must have {pomdp.n_states} entries")
    _check_stochastic(prior[None, :], "prior")
    return prior


# ---------------------------------------------------------------------------
# recursion / matrix form
# ---------------------------------------------------------------------------

def induced_transition(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``P_pi[s, s'] = sum_a P[s, a, s'] pi[s, a]``."""
    return np.einsum("sat,sa->st", P, pi)


def multi_step_observation(O: np.ndarray, P_pi: np.ndarray, N: int) -> list[np.ndarray]:
    """``[O_0, ..., O_N]`` with ``O_k = P_pi^k @ O``."""
    out = [np.array(O, dtype=np.float64)]
    for _ in range(N):
        out.append(P_pi @ out[-1])
    return out


def joint_observation(O_list: list[np.ndarray], window) -> np.ndarray:
    """Likelihood of a newest-first window given the oldest state, per state."""
    window = list(window)
    N = len(O_list) - 1
    if len(window) != N + 1:
        raise ValidationError(f"window has {len(window)} entries, expected {N + 1}")
    lik = np.ones(O_list[0].shape[0])
    for k in range(N + 1):
        lik = lik * O_list[k][:, window[N - k]]
    return lik


def posterior_chain(pomdp: TabularPOMDP, pi, window, prior=None) -> list[np.ndarray]:
    """Beliefs ``[Q_0, ..., Q_N]``; ``Q_0`` is Bayes' rule on the joint likelihood."""
    pi = validate_policy(pi, pomdp)
    prior = _prior(pomdp, prior)
    N = len(window) - 1
    P_pi = induced_transition(pomdp.P, pi)
    lik = joint_observation(multi_step_observation(pomdp.O, P_pi, N), window)
    unnorm = lik * prior
    z = unnorm.sum()
    if z <= 0.0:
        raise ImpossibleEvidenceError(f"window {list(window)} has zero likelihood under the prior")
    chain = [unnorm / z]
    for _ in range(N):
        chain.append(chain[-1] @ P_pi)
    return chain


def window_transition(pomdp: TabularPOMDP, pi, window, action: int, prior=None) -> np.ndarray:
    """Distribution over the next observation given a window and an action."""
    q_n = posterior_chain(pomdp, pi, window, prior)[-1]
    next_state = q_n @ pomdp.P[:, action, :]
    return next_state @ pomdp.O


def induced_policy(pi, q_n) -> np.ndarray:
    """``varpi[a] = sum_s pi[s, a] Q_N[s]``."""
    return np.asarray(q_n) @ np.asarray(pi)


def sliding_window_update(window, new_obs):
    """Queue form: prepend ``new_obs`` and drop the oldest entry."""
    if isinstance(window, np.ndarray):
        out = np.empty_like(window)
        out[0] = new_obs
        out[1:] = window[:-1]
        return out
    window = list(window)
    return [new_obs] + window[:-1]


def shift_matrix(N: int) -> np.ndarray:
    """``[[0_{Nx1}, I_N], [0, 0_{1xN}]]`` of size ``(N+1) x (N+1)``."""
    M = np.zeros((N + 1, N + 1))
    M[np.arange(N), np.arange(1, N + 1)] = 1.0
    return M


def sliding_window_matrix(window: np.ndarray, new_obs) -> np.ndarray:
    """Matrix form ``o' [1, 0_{1xN}] + window @ shift``.

    ``window`` is a length-(N+1) row, or ``[N+1, D]`` with one row per time step.
    """
    window = np.asarray(window, dtype=np.float64)
    N = window.shape[0] - 1
    e0 = np.zeros(N + 1)
    e0[0] = 1.0
    if window.ndim == 1:
        return new_obs * e0 + window @ shift_matrix(N)
    return np.outer(e0, np.asarray(new_obs, dtype=np.float64)) + shift_matrix(N).T @ window


# ---------------------------------------------------------------------------
# full tables over every window
# ---------------------------------------------------------------------------

def all_windows(n_obs: int, N: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(n_obs), repeat=N + 1))


@dataclass
class BeliefChain:
    """Every quantity of the reformulation, tabulated over all windows.

    Rows for windows with zero likelihood are NaN and ``feasible`` is False.
    """

    windows: list[tuple[int, ...]]
    O_k: list[np.ndarray]            # N+1 arrays [S, S_o]
    Q_k: list[np.ndarray]            # N+1 arrays [W, S]
    P_bar: np.ndarray                # [W, A, S_o]
    varpi: np.ndarray                # [W, A]
    feasible: np.ndarray = field(default=None)


def belief_chain(pomdp: TabularPOMDP, pi, N: int, prior=None) -> BeliefChain:
    pi = validate_policy(pi, pomdp)
    prior = _prior(pomdp, prior)
    P_pi = induced_transition(pomdp.P, pi)
    O_k = multi_step_observation(pomdp.O, P_pi, N)
    windows = all_windows(pomdp.n_obs, N)
    W, S, A = len(windows), pomdp.n_states, pomdp.n_actions
    Q = [np.full((W, S), np.nan) for _ in range(N + 1)]
    P_bar = np.full((W, A, pomdp.n_obs), np.nan)
    varpi = np.full((W, A), np.nan)
    feasible = np.zeros(W, dtype=bool)
    for w, window in enumerate(windows):
        try:
            chain = posterior_chain(pomdp, pi, window, prior)
        except ImpossibleEvidenceError:
            continue
        feasible[w] = True
        for k in range(N + 1):
            Q[k][w] = chain[k]
        for a in range(A):
            P_bar[w, a] = (chain[-1] @ pomdp.P[:, a, :]) @ pomdp.O
        varpi[w] = induced_policy(pi, chain[-1])
    return BeliefChain(windows, O_k, Q, P_bar, varpi, feasible)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def oracle_terms(n_states: int, n_actions: int, n_obs: int, N: int) -> int:
    return n_states ** (N + 2) * n_obs ** (N + 2) * n_actions


def _guard(pomdp: TabularPOMDP, N: int, budget: int) -> None:
    terms = oracle_terms(pomdp.n_states, pomdp.n_actions, pomdp.n_obs, N)
    if terms > budget:
        raise OracleSizeError(
            f"enumeration needs |S|^(N+2)*|S_o|^(N+2)*|A| = {terms} terms, limit is {budget}"
        )


def brute_force_window_transition(pomdp: TabularPOMDP, pi, N: int, prior=None,
                                  budget: int = ORACLE_BUDGET) -> BeliefChain:
    """Recompute :func:`belief_chain` by summing over explicit state paths.

    Every quantity is a scalar sum over enumerated paths
    ``s_{t-N}, ..., s_t, s_{t+1}``; no matrix powers or recursion are used.
    """
    _guard(pomdp, N, budget)
    pi = validate_policy(pi, pomdp)
    prior = _prior(pomdp, prior)
    P, O = pomdp.P, pomdp.O
    S, A, So = pomdp.n_states, pomdp.n_actions, pomdp.n_obs

    P_pi = [[0.0] * S for _ in range(S)]
    for s in range(S):
        for s2 in range(S):
            for a in range(A):
                P_pi[s][s2] += P[s, a, s2] * pi[s, a]

    # weight of each path s_0..s_k under P_pi, for every k <= N
    paths = {}
    for k in range(N + 1):
        for path in itertools.product(range(S), repeat=k + 1):
            w = 1.0
            for i in range(k):
                w *= P_pi[path[i]][path[i + 1]]
            paths[path] = w

    O_k = []
    for k in range(N + 1):
        table = np.zeros((S, So))
        for path in itertools.product(range(S), repeat=k + 1):
            for o in range(So):
                table[path[0], o] += paths[path] * O[path[-1], o]
        O_k.append(table)

    windows = all_windows(So, N)
    W = len(windows)
    Q = [np.full((W, S), np.nan) for _ in range(N + 1)]
    P_bar = np.full((W, A, So), np.nan)
    varpi = np.full((W, A), np.nan)
    feasible = np.zeros(W, dtype=bool)
    full_paths = list(itertools.product(range(S), repeat=N + 1))
    for w, window in enumerate(windows):
        post = np.array([
            prior[s] * np.prod([O_k[k][s, window[N - k]] for k in range(N + 1)])
            for s in range(S)
        ])
        z = post.sum()
        if z <= 0.0:
            continue
        feasible[w] = True
        post = post / z
        for k in range(N + 1):
            Q[k][w] = 0.0
        varpi[w] = 0.0
        P_bar[w] = 0.0
        for path in full_paths:
            wt = post[path[0]] * paths[path]
            for k in range(N + 1):
                Q[k][w, path[k]] += wt
            last = path[-1]
            for a in range(A):
                varpi[w, a] += wt * pi[last, a]
                for s_next in range(S):
                    step = wt * P[last, a, s_next]
                    for o in range(So):
                        P_bar[w, a, o] += step * O[s_next, o]
    return BeliefChain(windows, O_k, Q, P_bar, varpi, feasible)


def exact_window_posterior(pomdp: TabularPOMDP, pi, window, prior=None) -> np.ndarray:
    """True filtering belief ``p(s_t | window)`` from the joint path likelihood.

    Unlike :func:`posterior_chain`, this conditions on every observation along
    the same hidden path. The two differ whenever observations are
    correlated through the hidden chain.
    """
    pi = validate_policy(pi, pomdp)
    prior = _prior(pomdp, prior)
    window = list(window)
    N = len(window) - 1
    P_pi = induced_transition(pomdp.P, pi)
    S = pomdp.n_states
    belief = np.zeros(S)
    for path in itertools.product(range(S), repeat=N + 1):
        w = prior[path[0]]
        for k in range(N + 1):
            w *= pomdp.O[path[k], window[N - k]]
            if k:
                w *= P_pi[path[k - 1], path[k]]
        belief[path[-1]] += w
    z = belief.sum()
    if z <= 0.0:
        raise ImpossibleEvidenceError(f"window {window} has zero likelihood under the prior")
    return belief / z


def compare_chains(a: BeliefChain, b: BeliefChain) -> dict[str, float]:
    """Max absolute deviation per quantity over feasible windows."""
    if not np.array_equal(a.feasible, b.feasible):
        return {"feasible": float("inf")}
    f = a.feasible
    dev = {
        "O_k": max(float(np.abs(x - y).max()) for x, y in zip(a.O_k, b.O_k)),
        "Q_k": max(float(np.abs(x[f] - y[f]).max(initial=0.0)) for x, y in zip(a.Q_k, b.Q_k)),
        "P_bar": float(np.abs(a.P_bar[f] - b.P_bar[f]).max(initial=0.0)),
        "varpi": float(np.abs(a.varpi[f] - b.varpi[f]).max(initial=0.0)),
    }
    return dev


# ---------------------------------------------------------------------------
# files and generators
# ---------------------------------------------------------------------------

def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def load_pomdp(path) -> tuple[TabularPOMDP, np.ndarray | None]:
    """Read a POMDP TOML file; returns the model and its optional ``prior``."""
    doc = _read_toml(path)
    for key in ("P", "R", "O"):
        if key not in doc:
            raise ValidationError(f"{path}: missing key {key!r}")
    try:
        pomdp = TabularPOMDP(doc["P"], doc["R"], doc["O"])
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: ragged or non-numeric table ({exc})") from exc
    for key, actual in (("n_states", pomdp.n_states), ("n_actions", pomdp.n_actions),
                        ("n_obs", pomdp.n_obs)):
        if key in doc and int(doc[key]) != actual:
            raise ValidationError(f"{path}: {key} = {doc[key]} but tables imply {actual}")
    prior = doc.get("prior")
    if prior is not None:
        prior = _prior(pomdp, prior)
    return pomdp, prior


def load_policy(path, pomdp: TabularPOMDP) -> np.ndarray:
    doc = _read_toml(path)
    if "pi" not in doc:
        raise ValidationError(f"{path}: missing key 'pi'")
    return validate_policy(doc["pi"], pomdp)


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}.toml"


def random_pomdp(rng: np.random.Generator, n_states: int, n_actions: int, n_obs: int) -> TabularPOMDP:
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    O = rng.dirichlet(np.ones(n_obs), size=n_states)
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return TabularPOMDP(P, R, O)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)
