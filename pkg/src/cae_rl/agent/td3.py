"""TD3 over history windows: targets, critic/actor objectives, delayed updates."""
from __future__ import annotations

import copy

import numpy as np

from ..nn.optim import Adam
from ..nn.params import assign, hard_update, load_checkpoint, save_checkpoint, soft_update
from .config import AgentConfig
from .networks import BranchNet, build_networks
from .replay import Batch


def _prefixed(prefix: str, d: dict) -> dict:
    return {f"{prefix}.{k}": v for k, v in d.items()}


class Agent:
    """Online networks, their targets and optimizers for one variant.

    Random streams (exploration, target smoothing) are derived from
    ``seed`` so that a run is reproducible bit for bit.
    """

    def __init__(self, config: AgentConfig, seed: int = 0):
        self.config = config
        ss = np.random.SeedSequence(seed)
        init_ss, explore_ss, noise_ss = ss.spawn(3)
        self.actor, self.critic1, self.critic2 = build_networks(config, np.random.default_rng(init_ss))
        # deepcopy of the triple keeps shared-encoder aliasing intact in the targets
        self.actor_target, self.critic1_target, self.critic2_target = copy.deepcopy(
            (self.actor, self.critic1, self.critic2)
        )
        hard_update(self.target_params(), self.online_params())
        self.actor_opt = Adam(self.actor.params, lr=config.actor_lr)
        self.critic_opt = Adam(self.critic_params(), lr=config.critic_lr)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.updates = 0

    # -- parameter views ---------------------------------------------------

    def critic_params(self) -> dict:
        return {**_prefixed("critic1", self.critic1.params), **_prefixed("critic2", self.critic2.params)}

    def online_params(self) -> dict:
        return {**_prefixed("actor", self.actor.params), **self.critic_params()}

    def target_params(self) -> dict:
        return {
            **_prefixed("actor", self.actor_target.params),
            **_prefixed("critic1", self.critic1_target.params),
            **_prefixed("critic2", self.critic2_target.params),
        }

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def emits_window(self) -> bool:
        return self.config.variant == "v2"

    # -- acting ------------------------------------------------------------

    def actor_forward(self, s_bar, a_bar=None, net: BranchNet | None = None) -> np.ndarray:
        """Deterministic policy output for a batch; ``[B, act]`` (``[B, N+1, act]`` for v2)."""
        net = net or self.actor
        return net.forward(s_bar, a_bar)

    def executed(self, out: np.ndarray) -> np.ndarray:
        """The action actually applied: row 0 of a v2 action window."""
        return out[:, 0] if self.emits_window else out

    def select_action(self, s_bar: np.ndarray, a_bar: np.ndarray | None = None,
                      explore: bool = False) -> np.ndarray:
        """Action for a single window (no batch axis). ``a_bar`` row 0 is ignored."""
        a_in = None if a_bar is None else a_bar[None]
        a = self.executed(self.actor_forward(s_bar[None], a_in))[0]
        if explore and self.config.exploration_sigma > 0:
            b = self.config.action_bound
            a = a + self.explore_rng.normal(0.0, self.config.exploration_sigma * b, size=a.shape)
            a = np.clip(a, -b, b)
        return a

    # -- TD3 target --------------------------------------------------------

    def target_actions(self, batch: Batch, noise: np.ndarray | None = None) -> np.ndarray:
        """Next action window ``[B, N+1, act]`` fed to the target critics."""
        cfg = self.config
        b, c = cfg.action_bound, cfg.target_noise_clip * cfg.action_bound
        prev = batch.a_bar[:, :-1]  # a_t .. a_{t-N+1}: the past of the next window
        placeholder = np.concatenate([np.zeros_like(batch.a_bar[:, :1]), prev], axis=1)
        out = self.actor_forward(batch.s_bar_next, placeholder, net=self.actor_target)
        if noise is None:
            noise = self.noise_rng.normal(0.0, cfg.target_noise_sigma * b, size=out.shape)
        out = np.clip(out + np.clip(noise, -c, c), -b, b)
        if self.emits_window:
            return out
        return np.concatenate([out[:, None, :], prev], axis=1)

    def td3_target(self, batch: Batch, noise=None) -> np.ndarray:
        """``y = r + gamma (1 - terminated) min_i Q_i'(s', a')``."""
        a_next = self.target_actions(batch, noise)
        q1 = self.critic1_target.forward(batch.s_bar_next, a_next)
        q2 = self.critic2_target.forward(batch.s_bar_next, a_next)
        return batch.reward + self.config.gamma * (1.0 - batch.terminated) * np.minimum(q1, q2)

    # -- objectives --------------------------------------------------------

    def critic_inputs(self, batch: Batch) -> np.ndarray:
        if not self.emits_window:
            return batch.a_bar
        # v2: the historical part of the window is regenerated by the actor
        gen = self.actor_forward(batch.s_bar, batch.a_bar)
        a_in = gen.copy()
        a_in[:, 0] = batch.a_bar[:, 0]
        return a_in

    def critic_loss_and_grads(self, batch: Batch, y: np.ndarray):
        """Sum over both critics of the mean squared TD error, with gradients."""
        a_in = self.critic_inputs(batch)
        B = len(batch)
        loss = 0.0
        grads = {}
        qs = []
        for name, critic in (("critic1", self.critic1), ("critic2", self.critic2)):
            q = critic.forward(batch.s_bar, a_in)
            err = q - y
            loss += float(np.mean(err * err))
            g, _, _ = critic.backward(2.0 * err / B)
            grads.update(_prefixed(name, g))
            qs.append(q)
        return loss, grads, float(np.mean(qs[0]))

    def actor_loss_and_grads(self, batch: Batch):
        """``-mean Q1(s_bar, [pi(s_bar), stored past actions])`` and actor gradients.

        With ``preact_penalty`` lam > 0 the loss gains ``lam * mean_b ||z_b||^2``
        on the pre-tanh output z, which keeps a saturated actor recoverable.
        """
        B = len(batch)
        out = self.actor_forward(batch.s_bar, batch.a_bar)
        if self.emits_window:
            a_in = out
        else:
            a_in = batch.a_bar.copy()
            a_in[:, 0] = out
        q = self.critic1.forward(batch.s_bar, a_in)
        _, _, da = self.critic1.backward(np.full(B, -1.0 / B))
        d_out = da if self.emits_window else da[:, 0]
        loss = float(-np.mean(q))
        lam = self.config.preact_penalty
        d_pre = None
        if lam > 0:
            z = self.actor.preactivation
            loss += lam * float(np.sum(z * z)) / B
            d_pre = 2.0 * lam * z / B
        grads, _, _ = self.actor.backward(d_out, d_pre)
        return loss, grads

    # -- updates -----------------------------------------------------------

    def critic_update(self, batch: Batch, noise=None) -> tuple[float, float]:
        y = self.td3_target(batch, noise)
        loss, grads, mean_q = self.critic_loss_and_grads(batch, y)
        self.critic_opt.step(grads)
        return loss, mean_q

    def actor_update(self, batch: Batch) -> float:
        loss, grads = self.actor_loss_and_grads(batch)
        self.actor_opt.step(grads)
        return loss

    def target_update(self) -> None:
        soft_update(self.target_params(), self.online_params(), self.config.tau)

    def update(self, batch: Batch) -> dict:
        """Critic step every call; actor and target step every ``policy_delay`` calls."""
        self.updates += 1
        critic_loss, mean_q = self.critic_update(batch)
        info = {"critic_loss": critic_loss, "mean_q": mean_q, "actor_loss": None}
        if self.updates % self.config.policy_delay == 0:
            info["actor_loss"] = self.actor_update(batch)
            self.target_update()
        return info

    # -- persistence -------------------------------------------------------

    def _tensors(self) -> dict:
        t = {**_prefixed("online", self.online_params()), **_prefixed("target", self.target_params())}
        for oname, opt in (("actor", self.actor_opt), ("critic", self.critic_opt)):
            for k in opt.params:
                st = opt.state
                if k in st.first_moment:
                    t[f"adam.{oname}.m.{k}"] = st.first_moment[k]
                    t[f"adam.{oname}.v.{k}"] = st.second_moment[k]
        return t

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "agent_config": self.config.to_dict(),
            "updates": self.updates,
            "adam_steps": {"actor": self.actor_opt.state.step_count,
                           "critic": self.critic_opt.state.step_count},
            "rng": {"explore": self.explore_rng.bit_generator.state,
                    "noise": self.noise_rng.bit_generator.state},
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, self._tensors(), meta)

    @classmethod
    def load(cls, path) -> tuple["Agent", dict]:
        tensors, meta = load_checkpoint(path)
        agent = cls(AgentConfig.from_dict(meta["agent_config"]))
        assign(_prefixed("online", agent.online_params()), tensors)
        assign(_prefixed("target", agent.target_params()), tensors)
        for oname, opt in (("actor", agent.actor_opt), ("critic", agent.critic_opt)):
            opt.state.step_count = meta["adam_steps"][oname]
            for k in opt.params:
                key = f"adam.{oname}.m.{k}"
                if key in tensors:
                    opt.state.first_moment[k] = tensors[key].copy()
                    opt.state.second_moment[k] = tensors[f"adam.{oname}.v.{k}"].copy()
        agent.updates = meta["updates"]
        agent.explore_rng.bit_generator.state = meta["rng"]["explore"]
        agent.noise_rng.bit_generator.state = meta["rng"]["noise"]
        return agent, meta


def build_agent(config: AgentConfig, seed: int = 0) -> Agent:
    return Agent(config, seed)
