"""Learning core: actor-critic policy, PPO with GAE, adaptive bin sampling,
and early termination."""

from .gae import compute_gae
from .nets import AdamState, adam_step, mlp_backward, mlp_forward, mlp_init
from .policy import PolicyError, PolicyParams, RunningNorm, act, init_policy
from .ppo import PPOHyper, PPOStats, loss_and_grads, ppo_update
from .sampler import BinDraw, SamplerState, build_bins, sample_start, update_sampler
from .termination import TERMINATION_THRESHOLDS, check_termination

__all__ = [
    "AdamState", "BinDraw", "PolicyError", "PolicyParams", "PPOHyper", "PPOStats",
    "RunningNorm", "SamplerState", "TERMINATION_THRESHOLDS", "act", "adam_step",
    "build_bins", "check_termination", "compute_gae", "init_policy",
    "loss_and_grads", "mlp_backward", "mlp_forward", "mlp_init", "ppo_update",
    "sample_start", "update_sampler",
]
