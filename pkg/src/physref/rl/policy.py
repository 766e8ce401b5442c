"""Gaussian actor-critic over a running-normalized observation vector.

Actor and critic are 2x128 tanh MLPs; the action distribution is a diagonal
Gaussian with a state-independent log-std clamped to [-4, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import mlp_forward, mlp_init

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
HIDDEN = (128, 128)
LOG_2PI = np.log(2.0 * np.pi)


class PolicyError(ValueError):
    pass


@dataclass
class RunningNorm:
    """Streaming per-dimension mean/variance (parallel Welford updates)."""

    mean: np.ndarray
    var: np.ndarray
    count: float = 1e-4
    clip: float = 10.0

    @classmethod
    def for_dim(cls, dim: int) -> "RunningNorm":
        return cls(mean=np.zeros(dim), var=np.ones(dim))

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.mean.shape[0])
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        delta = b_mean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * (n / tot)
        m_a = self.var * self.count
        m_b = b_var * n
        self.var = (m_a + m_b + delta ** 2 * (self.count * n / tot)) / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)


@dataclass
class PolicyParams:
    """Actor/critic weights, exploration log-std, and the obs normalizer."""

    obs_dim: int
    action_dim: int
    actor: list[np.ndarray] = field(default_factory=list)    # [W, b, ...]
    critic: list[np.ndarray] = field(default_factory=list)
    log_std: np.ndarray = None                                # (action_dim,)
    norm: RunningNorm = None

    def trainable(self) -> list[np.ndarray]:
        """Flat list of arrays touched by the optimizer (normalizer excluded)."""
        return self.actor + self.critic + [self.log_std]

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.trainable())


def init_policy(obs_dim: int, action_dim: int, rng: np.random.Generator,
                init_log_std: float = -0.5) -> PolicyParams:
    if obs_dim < 1 or action_dim < 1:
        raise PolicyError("obs_dim and action_dim must be >= 1")
    sizes = [obs_dim, *HIDDEN, action_dim]
    return PolicyParams(
        obs_dim=obs_dim,
        action_dim=action_dim,
        actor=mlp_init(rng, sizes, out_gain=0.01),
        critic=mlp_init(rng, [obs_dim, *HIDDEN, 1], out_gain=1.0),
        log_std=np.full(action_dim, float(np.clip(init_log_std,
                                                  LOG_STD_MIN, LOG_STD_MAX))),
        norm=RunningNorm.for_dim(obs_dim),
    )


def gaussian_logp(actions: np.ndarray, mu: np.ndarray, log_std: np.ndarray
                  ) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over action dims."""
    inv_var = np.exp(-2.0 * log_std)
    return -0.5 * np.sum((actions - mu) ** 2 * inv_var + 2.0 * log_std + LOG_2PI,
                         axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def act(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator | None = None,
        deterministic: bool = False):
    """(action, log_prob, value) for a batch (or single) observation."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.obs_dim:
        raise PolicyError(
            f"observation layout mismatch: got {obs.shape[-1]} dims, "
            f"policy expects {params.obs_dim}")
    z = params.norm.normalize(obs)
    mu = mlp_forward(params.actor, z)
    value = mlp_forward(params.critic, z)[..., 0]
    log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    if deterministic:
        action = mu
    else:
        if rng is None:
            raise PolicyError("stochastic action sampling needs an rng")
        action = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    logp = gaussian_logp(action, mu, log_std)
    return action, logp, value


def value_of(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.obs_dim:
        raise PolicyError(
            f"observation layout mismatch: got {obs.shape[-1]} dims, "
            f"policy expects {params.obs_dim}")
    return mlp_forward(params.critic, params.norm.normalize(obs))[..., 0]
