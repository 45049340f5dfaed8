"""Actor and critic networks for every variant.

Both networks read a newest-first observation window ``s_bar`` of shape
``[B, N+1, obs_dim]`` and action window ``a_bar`` of shape
``[B, N+1, act_dim]`` (row 0 is the current step). A network is a list of
*branches*, each selecting part of the windows and mapping it to a feature
block; the blocks are concatenated and fed to an MLP.

Wiring per variant (``cur`` = current-step normalization, ``enc`` =
history encoder over the N past rows)::

    cae     actor  cur(o_t) | enc(o past)
            critic cur(o_t) | cur(a_t) | enc(o past) | enc(a past)
    cae-fo  actor  as cae;  critic cur(o_t) | cur(a_t) | enc(o past)
    v1      one encoder over past (o, a) pairs shared by actor and both critics
            actor  cur(o_t) | enc(pairs);  critic cur(o_t) | cur(a_t) | enc(pairs)
    v2      actor  cur(o_t) | enc(o past) -> N+1 actions (row 0 is executed)
            critic cur(o_t) | enc(o past) | flat(a_bar)
    v3      actor as cae; critic as v2
    fwtd3   actor  flat(s_bar);  critic flat(s_bar) | a_t
    td3     actor  o_t;          critic o_t | a_t
"""
from __future__ import annotations

import numpy as np

from ..encoder import CurrentStepNorm, HistoryEncoder
from ..nn.layers import Layer, mlp
from .config import AgentConfig


class Branch:
    """Feature block computed from one slice of the input windows.

    ``source`` is ``"obs"``, ``"act"`` or ``"pair"`` (obs and act rows
    concatenated feature-wise); ``rows`` is ``"current"`` (row 0),
    ``"past"`` (rows 1..N) or ``"all"``.
    """

    def __init__(self, source: str, rows: str, layer: Layer | None = None, flatten=False):
        self.source = source
        self.rows = rows
        self.layer = layer
        self.flatten = flatten

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.layer.params if self.layer is not None else {}

    def _rows(self, w):
        if self.rows == "current":
            return w[:, 0]
        if self.rows == "past":
            return w[:, 1:]
        return w

    def forward(self, s_bar, a_bar):
        if self.source == "obs":
            x = self._rows(s_bar)
        elif self.source == "act":
            x = self._rows(a_bar)
        else:
            x = np.concatenate([self._rows(s_bar), self._rows(a_bar)], axis=-1)
        self._in_shape = x.shape
        y = self.layer.forward(x) if self.layer is not None else x
        self._out_shape = y.shape
        return y.reshape(y.shape[0], -1) if self.flatten else y

    def backward(self, dy, s_shape, a_shape):
        dy = dy.reshape(self._out_shape)
        if self.layer is not None:
            grads, dx = self.layer.backward(dy)
        else:
            grads, dx = {}, dy
        ds = da = None
        if self.source in ("obs", "pair"):
            ds = np.zeros(s_shape)
        if self.source in ("act", "pair"):
            da = np.zeros(a_shape)
        sel = {"current": 0, "past": slice(1, None), "all": slice(None)}[self.rows]
        if self.source == "obs":
            ds[:, sel] = dx
        elif self.source == "act":
            da[:, sel] = dx
        else:
            d_obs = s_shape[-1]
            ds[:, sel] = dx[..., :d_obs]
            da[:, sel] = dx[..., d_obs:]
        return grads, ds, da


class BranchNet:
    """Concatenated branch features -> MLP -> optional ``bound * tanh``."""

    def __init__(self, branches: list[tuple[str, Branch]], in_features: int, widths,
                 out_features: int, rng, bound: float | None = None, out_shape=None):
        self.branches = branches
        self.mlp = mlp(in_features, widths, out_features, rng, name="mlp")
        self.bound = bound
        self.out_shape = out_shape
        self.params: dict[str, np.ndarray] = {}
        for bname, br in branches:
            for k, v in br.params.items():
                self.params[f"{bname}.{k}"] = v
        for k, v in self.mlp.params.items():
            self.params[f"mlp.{k}"] = v

    @property
    def final_layer(self):
        return self.mlp.layers[-1][1]

    def forward(self, s_bar, a_bar=None):
        s_bar = np.asarray(s_bar, dtype=np.float64)
        if a_bar is not None:
            a_bar = np.asarray(a_bar, dtype=np.float64)
        feats = [br.forward(s_bar, a_bar) for _, br in self.branches]
        self._widths = [f.shape[-1] for f in feats]
        self._shapes = (s_bar.shape, None if a_bar is None else a_bar.shape)
        out = self.mlp.forward(np.concatenate(feats, axis=-1))
        self._pre = out
        if self.bound is not None:
            self._tanh = np.tanh(out)
            out = self.bound * self._tanh
        if self.out_shape is not None:
            out = out.reshape((out.shape[0],) + self.out_shape)
        return out

    @property
    def preactivation(self) -> np.ndarray:
        """MLP output of the last forward pass, before ``bound * tanh``; ``[B, out]``."""
        return self._pre

    def backward(self, dout, d_pre=None):
        """Returns ``(param_grads, d_s_bar, d_a_bar)``.

        ``d_pre`` is an extra gradient on the pre-tanh output, added after the
        tanh derivative so it survives saturation.
        """
        B = dout.shape[0]
        dout = dout.reshape(B, -1)
        if self.bound is not None:
            dout = dout * self.bound * (1.0 - self._tanh ** 2)
        if d_pre is not None:
            dout = dout + d_pre
        g_mlp, dfeat = self.mlp.backward(dout)
        grads = {f"mlp.{k}": v for k, v in g_mlp.items()}
        s_shape, a_shape = self._shapes
        ds = np.zeros(s_shape)
        da = np.zeros(a_shape) if a_shape is not None else None
        start = 0
        for (bname, br), w in zip(self.branches, self._widths):
            g, ds_b, da_b = br.backward(dfeat[:, start:start + w], s_shape, a_shape)
            start += w
            for k, v in g.items():
                grads[f"{bname}.{k}"] = v
            if ds_b is not None:
                ds += ds_b
            if da_b is not None:
                da += da_b
        return grads, ds, da


def _enc(cfg: AgentConfig, in_features: int, rng, name: str) -> HistoryEncoder:
    return HistoryEncoder(in_features, cfg.N, cfg.encoder, rng, name=name)


def build_networks(cfg: AgentConfig, rng: np.random.Generator):
    """Returns ``(actor, critic1, critic2)`` for ``cfg.variant``."""
    v, N = cfg.variant, cfg.N
    od, ad, dm = cfg.obs_dim, cfg.act_dim, cfg.d_model
    widths, bound = cfg.mlp_widths, cfg.action_bound

    shared = _enc(cfg, od + ad, rng, "enc_shared") if v == "v1" else None

    def actor():
        if v == "td3":
            branches = [("obs", Branch("obs", "current"))]
            feat = od
        elif v == "fwtd3":
            branches = [("obs_window", Branch("obs", "all", flatten=True))]
            feat = (N + 1) * od
        elif v == "v1":
            branches = [("cur_obs", Branch("obs", "current", CurrentStepNorm())),
                        ("enc_shared", Branch("pair", "past", shared.shared_copy()))]
            feat = od + dm
        else:
            branches = [("cur_obs", Branch("obs", "current", CurrentStepNorm())),
                        ("enc_obs", Branch("obs", "past", _enc(cfg, od, rng, "enc_obs")))]
            feat = od + dm
        if v == "v2":
            return BranchNet(branches, feat, widths, (N + 1) * ad, rng, bound, out_shape=(N + 1, ad))
        return BranchNet(branches, feat, widths, ad, rng, bound)

    def critic():
        if v == "td3":
            branches = [("obs", Branch("obs", "current")), ("act", Branch("act", "current"))]
            feat = od + ad
        elif v == "fwtd3":
            branches = [("obs_window", Branch("obs", "all", flatten=True)),
                        ("act", Branch("act", "current"))]
            feat = (N + 1) * od + ad
        elif v == "v1":
            branches = [("cur_obs", Branch("obs", "current", CurrentStepNorm())),
                        ("cur_act", Branch("act", "current", CurrentStepNorm())),
                        ("enc_shared", Branch("pair", "past", shared.shared_copy()))]
            feat = od + ad + dm
        elif v in ("v2", "v3"):
            branches = [("cur_obs", Branch("obs", "current", CurrentStepNorm())),
                        ("enc_obs", Branch("obs", "past", _enc(cfg, od, rng, "enc_obs"))),
                        ("act_window", Branch("act", "all", flatten=True))]
            feat = od + dm + (N + 1) * ad
        else:
            branches = [("cur_obs", Branch("obs", "current", CurrentStepNorm())),
                        ("cur_act", Branch("act", "current", CurrentStepNorm())),
                        ("enc_obs", Branch("obs", "past", _enc(cfg, od, rng, "enc_obs")))]
            feat = od + ad + dm
            if v == "cae":
                branches.append(("enc_act", Branch("act", "past", _enc(cfg, ad, rng, "enc_act"))))
                feat += dm
        return BranchNet(branches, feat, widths, 1, rng, None, out_shape=())

    return actor(), critic(), critic()
