"""Clipped-surrogate policy optimization with hand-written gradients.

The loss is L = -E[min(rho*A, clip(rho, 1-eps, 1+eps)*A)]
            + value_coef * E[(V - returns)^2] - entropy_coef * H.
Gradients flow through the actor mean, the critic value, and the
state-independent log-std; observations are normalized with statistics
frozen for the duration of one update (the normalizer absorbs the batch
afterwards, so the ratio at the behavior policy is exactly 1 when the first
epoch starts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import AdamState, adam_step, clip_grad_norm, mlp_backward, mlp_forward
from .policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    PolicyParams,
    gaussian_entropy,
    gaussian_logp,
)


@dataclass(frozen=True)
class PPOHyper:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 5
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    max_grad_norm: float = 1.0
    n_envs: int = 16
    rollout_steps: int = 64

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.lam <= 1.0:
            raise ValueError("gamma and lam must be in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("epochs and minibatches must be >= 1")


@dataclass
class PPOStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    kl: float = 0.0
    clip_fraction: float = 0.0
    grad_norm: float = 0.0
    aborted: bool = False
    message: str = ""
    extra: dict = field(default_factory=dict)


def loss_and_grads(params: PolicyParams, obs, actions, old_logp, advantages,
                   returns, hyper: PPOHyper):
    """Total loss, gradients (aligned with params.trainable()), and stats."""
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    old_logp = np.asarray(old_logp, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    N = obs.shape[0]

    z = params.norm.normalize(obs)
    cache_a: list = []
    mu = mlp_forward(params.actor, z, cache_a)
    cache_c: list = []
    v = mlp_forward(params.critic, z, cache_c)[:, 0]

    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)
    logp = gaussian_logp(actions, mu, log_std)
    ratio = np.exp(logp - old_logp)

    t1 = ratio * advantages
    t2 = np.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * advantages
    surr = np.minimum(t1, t2)
    policy_loss = -float(surr.mean())
    value_err = v - returns
    value_loss = float(np.mean(value_err ** 2))
    entropy = gaussian_entropy(log_std)
    total = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy

    # d(policy_loss)/d(ratio): the min picks the unclipped branch, or the
    # clipped one whose derivative vanishes outside the trust region
    inside = (ratio > 1.0 - hyper.clip_eps) & (ratio < 1.0 + hyper.clip_eps)
    dsurr_dratio = np.where(t1 <= t2, advantages, advantages * inside)
    dlogp = -(1.0 / N) * dsurr_dratio * ratio      # chain: d(ratio)/d(logp) = ratio

    diff = actions - mu
    dmu = dlogp[:, None] * diff * inv_var           # d(logp)/d(mu) = diff * inv_var
    grads_actor = mlp_backward(params.actor, cache_a, dmu)

    dv = (hyper.value_coef * 2.0 / N) * value_err
    grads_critic = mlp_backward(params.critic, cache_c, dv[:, None])

    d_logstd = np.sum(dlogp[:, None] * (diff ** 2 * inv_var - 1.0), axis=0) \
        - hyper.entropy_coef * np.ones_like(log_std)

    grads = grads_actor + grads_critic + [d_logstd]
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "kl": float(np.mean(old_logp - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hyper.clip_eps)),
    }
    return total, grads, stats


def ppo_update(params: PolicyParams, batch: dict, hyper: PPOHyper,
               opt: AdamState | None = None, rng: np.random.Generator | None = None
               ) -> tuple[AdamState, PPOStats]:
    """Run epochs x minibatches of updates in place on ``params``.

    batch: {"obs", "actions", "logp", "advantages", "returns"} with aligned
    leading dimension. Advantages are normalized per batch. A non-finite
    loss aborts the whole update and restores the entry parameters.
    """
    if opt is None:
        opt = AdamState.for_params(params.trainable())
    if rng is None:
        rng = np.random.default_rng(0)

    obs = np.asarray(batch["obs"], dtype=np.float64)
    actions = np.asarray(batch["actions"], dtype=np.float64)
    old_logp = np.asarray(batch["logp"], dtype=np.float64)
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    N = obs.shape[0]
    with np.errstate(invalid="ignore", over="ignore"):
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    backup = [p.copy() for p in params.trainable()]
    opt_backup = ([m.copy() for m in opt.m], [v.copy() for v in opt.v], opt.step)

    agg: dict[str, list[float]] = {}
    mb_size = max(1, N // hyper.minibatches)
    for _ in range(hyper.epochs):
        order = rng.permutation(N)
        for k in range(hyper.minibatches):
            idx = order[k * mb_size:(k + 1) * mb_size] if k < hyper.minibatches - 1 \
                else order[(hyper.minibatches - 1) * mb_size:]
            if idx.size == 0:
                continue
            total, grads, stats = loss_and_grads(
                params, obs[idx], actions[idx], old_logp[idx], adv[idx],
                returns[idx], hyper)
            if not np.isfinite(total):
                for p, b in zip(params.trainable(), backup):
                    p[...] = b
                opt.m, opt.v, opt.step = opt_backup
                return opt, PPOStats(
                    aborted=True,
                    message=f"non-finite loss ({total}); update rolled back",
                    extra=stats)
            stats["grad_norm"] = clip_grad_norm(grads, hyper.max_grad_norm)
            adam_step(params.trainable(), grads, opt, hyper.learning_rate)
            np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX, out=params.log_std)
            for key, val in stats.items():
                agg.setdefault(key, []).append(val)

    params.norm.update(obs)   # after the update: ratios start at exactly 1
    means = {k: float(np.mean(v)) for k, v in agg.items()}
    return opt, PPOStats(
        policy_loss=means.get("policy_loss", 0.0),
        value_loss=means.get("value_loss", 0.0),
        entropy=means.get("entropy", 0.0),
        kl=means.get("kl", 0.0),
        clip_fraction=means.get("clip_fraction", 0.0),
        grad_norm=means.get("grad_norm", 0.0),
    )
