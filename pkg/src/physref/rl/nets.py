"""Small feed-forward networks with hand-written backprop and a first-order
adaptive-moment optimizer. Everything is float64 numpy: training runs are
CPU-scale and exact reproducibility beats raw speed here."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def orthogonal(rng: np.random.Generator, shape: tuple[int, int],
               gain: float = 1.0) -> np.ndarray:
    """Orthogonal weight init (rows or columns orthonormal, scaled by gain)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))   # deterministic sign convention
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def mlp_init(rng: np.random.Generator, sizes: list[int],
             out_gain: float = 0.01) -> list[np.ndarray]:
    """[W0, b0, W1, b1, ...] for tanh hidden layers and a linear output."""
    params = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        gain = out_gain if last else np.sqrt(2.0)
        params.append(orthogonal(rng, (n_in, n_out), gain))
        params.append(np.zeros(n_out))
    return params


def mlp_forward(params: list[np.ndarray], x: np.ndarray, cache: list | None = None):
    """Forward pass; tanh on all but the last layer.

    When ``cache`` is a list it is filled with per-layer activations for
    mlp_backward.
    """
    h = np.asarray(x, dtype=np.float64)
    if cache is not None:
        cache.append(h)
    n_layers = len(params) // 2
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        h = h @ w + b
        if i < n_layers - 1:
            h = np.tanh(h)
        if cache is not None:
            cache.append(h)
    return h


def mlp_backward(params: list[np.ndarray], cache: list, dout: np.ndarray
                 ) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. params given d(loss)/d(output).

    cache comes from mlp_forward(..., cache=[]); returns grads shaped like
    params.
    """
    n_layers = len(params) // 2
    grads = [None] * len(params)
    d = np.asarray(dout, dtype=np.float64)
    for i in reversed(range(n_layers)):
        w = params[2 * i]
        h_in = cache[i]
        if i < n_layers - 1:
            h_out = cache[i + 1]
            d = d * (1.0 - h_out ** 2)   # through tanh
        grads[2 * i] = h_in.reshape(-1, h_in.shape[-1]).T @ d.reshape(-1, d.shape[-1])
        grads[2 * i + 1] = d.reshape(-1, d.shape[-1]).sum(axis=0)
        if i > 0:
            d = d @ w.T
    return grads


@dataclass
class AdamState:
    """First and second moment accumulators, one pair per parameter array."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], step=0)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """In-place adaptive-moment update."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place to cap the global L2 norm; returns the raw norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total
