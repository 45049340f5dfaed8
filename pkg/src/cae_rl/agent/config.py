from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..encoder import EncoderConfig
from ..errors import ConfigurationError

VARIANTS = ("cae", "cae-fo", "fwtd3", "td3", "v1", "v2", "v3")
ENCODER_VARIANTS = ("cae", "cae-fo", "v1", "v2", "v3")

DEFAULT_HISTORY = {"fwtd3": 2, "td3": 0}  # fwtd3 window of three rows
DEFAULT_HISTORY_ENCODER = 3


@dataclass
class AgentConfig:
    obs_dim: int = 1
    act_dim: int = 1
    action_bound: float = 1.0
    variant: str = "cae"
    history_len: int | None = None
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    exploration_sigma: float = 0.1
    batch_size: int = 64
    buffer_capacity: int = 100_000
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    d_model: int = 64
    num_heads: int = 4
    channels: int = 8
    k_time: int = 3
    k_obs: int = 3
    mlp_widths: tuple[int, ...] = field(default=(64, 64))
    # weight of mean ||z||^2 on the actor's pre-tanh output; 0 keeps J = -mean Q1
    preact_penalty: float = 0.0

    def __post_init__(self):
        self.mlp_widths = tuple(int(w) for w in self.mlp_widths)
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.history_len is None:
            self.history_len = DEFAULT_HISTORY.get(self.variant, DEFAULT_HISTORY_ENCODER)
        if self.variant == "td3" and self.history_len != 0:
            raise ConfigurationError("td3 is memoryless: history_len must be 0")
        if self.history_len < 0:
            raise ConfigurationError("history_len must be >= 0")
        if self.variant in ENCODER_VARIANTS and self.history_len < 1:
            raise ConfigurationError(f"variant {self.variant} encodes past steps: history_len must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.target_noise_clip < 0:
            raise ConfigurationError("target_noise_clip must be >= 0")
        if self.preact_penalty < 0:
            raise ConfigurationError("preact_penalty must be >= 0")
        if self.policy_delay < 1 or self.batch_size < 1:
            raise ConfigurationError("policy_delay and batch_size must be positive")
        if self.d_model % self.num_heads:
            raise ConfigurationError("d_model must be divisible by num_heads")

    @property
    def N(self) -> int:
        return self.history_len

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.d_model, self.num_heads, self.channels, self.k_time, self.k_obs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_widths"] = list(self.mlp_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown agent options: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "AgentConfig":
        return replace(self, **kw)
