"""Exact analysis of finite POMDPs: history trees, values and abstraction conditions."""

from .conditions import CONDITIONS, ConditionReport, check_all, check_condition, check_multistep
from .encoders import (TabularEncoder, belief_partition, constant_encoder, identity_encoder,
                       last_observation_encoder, random_partition, recurrent_encoder, refine,
                       state_encoder)
from .report import dumps_encoder, dumps_reports, loads_encoder, loads_reports
from .theory import (BoundReport, PreconditionError, check_approx_bound, check_implications,
                     construct_latent_reward, latent_q, latent_transition,
                     reward_reconstruction_error, run_implication_suite, verify_granularity)
from .tree import HistoryTree, QTable, bellman_residual, enumerate_histories, value_iteration

__all__ = [
    "BoundReport", "CONDITIONS", "ConditionReport", "HistoryTree", "PreconditionError", "QTable",
    "TabularEncoder", "belief_partition", "bellman_residual", "check_all", "check_approx_bound",
    "check_condition", "check_implications", "check_multistep", "constant_encoder",
    "construct_latent_reward", "dumps_encoder", "dumps_reports", "enumerate_histories",
    "identity_encoder", "last_observation_encoder", "latent_q", "latent_transition",
    "loads_encoder", "loads_reports", "random_partition", "recurrent_encoder", "refine",
    "reward_reconstruction_error", "run_implication_suite", "state_encoder", "value_iteration",
    "verify_granularity",
]
