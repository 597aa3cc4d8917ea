"""Model-free and self-predictive agents for discrete and continuous control."""

from .config import VARIANTS, AgentConfig
from .core import (AgentState, build_agent, double_q_target, exploration_action, greedy_action,
                   latent_rank, rl_loss_minimalist, td_loss_discrete, update_discrete,
                   update_minimalist)
from .record import RECORD_COLUMNS, RunRecord
from .replay import ReplayBuffer, ReplaySample
from .schedules import Schedule, parse_schedule
from .train import evaluate, train

__all__ = [
    "RECORD_COLUMNS", "VARIANTS", "AgentConfig", "AgentState", "ReplayBuffer", "ReplaySample",
    "RunRecord", "Schedule", "build_agent", "double_q_target", "evaluate", "exploration_action",
    "greedy_action", "latent_rank", "parse_schedule", "rl_loss_minimalist", "td_loss_discrete",
    "train", "update_discrete", "update_minimalist",
]
