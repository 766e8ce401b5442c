"""Generalized advantage estimation."""

from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float,
                lam: float):
    """Advantages and returns over a (T,) or (T, B) rollout.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    returns = A + V.  V_{T} is ``bootstrap_value``; done_t cuts both the TD
    target and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}")
    if not 0.0 < gamma <= 1.0 or not 0.0 < lam <= 1.0:
        raise ValueError("gamma and lam must be in (0, 1]")

    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(
        np.asarray(bootstrap_value, dtype=np.float64), rewards.shape[1:]).copy() \
        if rewards.ndim > 1 else float(bootstrap_value)
    next_adv = np.zeros(rewards.shape[1:]) if rewards.ndim > 1 else 0.0
    for t in reversed(range(T)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values
