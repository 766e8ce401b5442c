"""PPO training loop over the vectorized tracking environment.

One iteration = a fixed-horizon rollout from every env, generalized
advantage estimation, one clipped policy update, and a sampler refresh from
the episodes that finished. Episodes cut by the rollout horizon are
bootstrapped through the value function; episodes cut by the reference
running out (truncation) get the bootstrap folded into their final reward so
the advantage estimate does not treat clip ends as failures.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .gae import compute_gae
from .policy import PolicyParams, act, init_policy, value_of
from .ppo import AdamState, PPOHyper, ppo_update


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    iterations: int = 500
    horizon: int | None = None    # steps per env per iteration; None uses
                                  # hyper.rollout_steps
    hyper: PPOHyper = field(default_factory=PPOHyper)
    seed: int = 0
    init_log_std: float = -0.5
    max_consecutive_aborts: int = 2   # non-finite updates before giving up
    checkpoint_every: int = 50        # iterations; 0 disables periodic saves

    def __post_init__(self):
        if self.iterations < 1:
            raise TrainError("iterations must be >= 1")
        if self.horizon is not None and self.horizon < 2:
            raise TrainError("horizon must be >= 2")

    @property
    def rollout_steps(self) -> int:
        return self.horizon if self.horizon is not None \
            else self.hyper.rollout_steps


@dataclass
class TrainResult:
    params: PolicyParams
    opt: AdamState
    iterations_run: int
    aborted: bool                 # stopped by the divergence watchdog
    history: list[dict]

    @property
    def last(self) -> dict:
        return self.history[-1]


def rollout(env, params: PolicyParams, rng: np.random.Generator,
            horizon: int, gamma: float, lam: float, obs: np.ndarray):
    """Collect ``horizon`` steps from every env; returns (batch, next_obs,
    results-agnostic step stats). Truncated steps absorb their bootstrap."""
    B, D = env.n_envs, env.obs_dim
    A = env.action_dim
    obs_buf = np.empty((horizon, B, D))
    act_buf = np.empty((horizon, B, A))
    logp_buf = np.empty((horizon, B))
    val_buf = np.empty((horizon, B))
    rew_buf = np.empty((horizon, B))
    done_buf = np.empty((horizon, B))

    for t in range(horizon):
        a, logp, v = act(params, obs, rng)
        obs_buf[t], act_buf[t], logp_buf[t], val_buf[t] = obs, a, logp, v
        obs, r, term, trunc, info = env.step(a)
        if trunc.any():
            r = r + np.where(
                trunc, gamma * value_of(params, info["final_obs"]), 0.0)
        rew_buf[t] = r
        done_buf[t] = term | trunc

    adv, ret = compute_gae(rew_buf, val_buf, done_buf,
                           value_of(params, obs), gamma=gamma, lam=lam)
    batch = {
        "obs": obs_buf.reshape(horizon * B, D),
        "actions": act_buf.reshape(horizon * B, A),
        "logp": logp_buf.reshape(horizon * B),
        "advantages": adv.reshape(horizon * B),
        "returns": ret.reshape(horizon * B),
    }
    return batch, obs, float(rew_buf.mean())


def train(env, config: TrainConfig | None = None,
          params: PolicyParams | None = None,
          opt: AdamState | None = None,
          log_stream=None, checkpoint_fn=None) -> TrainResult:
    """Run PPO on ``env``.

    log_stream: file-like; one JSON record per iteration is appended.
    checkpoint_fn(params, opt, iteration): called every
    ``checkpoint_every`` iterations and once at the end.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_policy(env.obs_dim, env.action_dim, rng,
                             init_log_std=config.init_log_std)
    if params.obs_dim != env.obs_dim or params.action_dim != env.action_dim:
        raise TrainError(
            f"policy is shaped ({params.obs_dim}, {params.action_dim}), "
            f"env needs ({env.obs_dim}, {env.action_dim})")
    if opt is None:
        opt = AdamState.for_params(params.trainable())

    obs = env.reset()
    history: list[dict] = []
    consecutive_aborts = 0
    aborted = False
    iterations_run = 0

    for it in range(config.iterations):
        t0 = time.perf_counter()
        batch, obs, reward_mean = rollout(
            env, params, rng, config.rollout_steps, config.hyper.gamma,
            config.hyper.lam, obs)
        opt, stats = ppo_update(params, batch, config.hyper, opt, rng)
        results = env.update_sampling()

        episodes = len(results)
        failures = sum(r.failed for r in results)
        record = {
            "iteration": it,
            "reward_mean": reward_mean,
            "episodes": episodes,
            "failures": failures,
            "termination_rate": failures / episodes if episodes else None,
            "episode_return_mean":
                float(np.mean([r.episode_return for r in results]))
                if episodes else None,
            "episode_length_mean":
                float(np.mean([r.episode_length for r in results]))
                if episodes else None,
            "length_ratio_mean":
                float(np.mean([r.episode_length / r.max_steps
                               for r in results])) if episodes else None,
            "sampler_entropy": float(env.sampler.entropy()),
            "policy_loss": stats.policy_loss,
            "value_loss": stats.value_loss,
            "entropy": stats.entropy,
            "kl": stats.kl,
            "clip_fraction": stats.clip_fraction,
            "grad_norm": stats.grad_norm,
            "aborted": stats.aborted,
            "time_s": time.perf_counter() - t0,
        }
        history.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record) + "\n")
            log_stream.flush()
        iterations_run = it + 1

        if stats.aborted:
            consecutive_aborts += 1
            if consecutive_aborts >= config.max_consecutive_aborts:
                aborted = True  # params/opt hold the last good update
                break
        else:
            consecutive_aborts = 0

        if (checkpoint_fn is not None and config.checkpoint_every
                and (it + 1) % config.checkpoint_every == 0):
            checkpoint_fn(params, opt, it + 1)

    if checkpoint_fn is not None:
        checkpoint_fn(params, opt, iterations_run)
    return TrainResult(params=params, opt=opt, iterations_run=iterations_run,
                       aborted=aborted, history=history)
