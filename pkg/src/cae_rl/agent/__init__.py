"""CAE-TD3 agent and its variants."""
from .config import VARIANTS, AgentConfig
from .networks import Branch, BranchNet, build_networks
from .replay import Batch, ReplayBuffer, Transition
from .td3 import Agent, build_agent

__all__ = [
    "VARIANTS", "Agent", "AgentConfig", "Batch", "Branch", "BranchNet", "ReplayBuffer",
    "Transition", "build_agent", "build_networks",
]
