"""Built-in oracle suite.

Re-derives the learning-core and metric results from first principles
(Monte-Carlo sums, finite differences, hand arithmetic, per-frame scans)
and checks the shipped implementations against them. Runnable from the
command line so an installed copy can vouch for itself without the test
tree.
"""

from __future__ import annotations

import sys

import numpy as np

from .metrics import floating_duration, segment_failures, tracking_errors
from .model import link_kinematics, load_builtin_model
from .motion import GaitSpec, slice_clip, synthesize_gait
from .rl.gae import compute_gae
from .rl.nets import mlp_init
from .rl.policy import PolicyParams, RunningNorm, act, gaussian_logp
from .rl.ppo import PPOHyper, loss_and_grads
from .rl.sampler import build_bins, compute_probs, update_sampler


def _tiny_policy(rng, obs_dim=4, action_dim=2, hidden=(6, 5)):
    params = PolicyParams(
        obs_dim=obs_dim, action_dim=action_dim,
        actor=mlp_init(rng, [obs_dim, *hidden, action_dim], out_gain=0.5),
        critic=mlp_init(rng, [obs_dim, *hidden, 1], out_gain=1.0),
        log_std=rng.uniform(-1.0, 0.0, size=action_dim),
        norm=RunningNorm.for_dim(obs_dim),
    )
    params.norm.update(rng.normal(size=(50, obs_dim)))
    return params


def check_gae_monte_carlo():
    """lambda = 1 returns equal discounted Monte-Carlo sums."""
    rng = np.random.default_rng(8)
    T, gamma = 40, 0.9
    r, v = rng.normal(size=T), rng.normal(size=T)
    dones = np.zeros(T)
    dones[[13, 29, T - 1]] = 1.0
    _, ret = compute_gae(r, v, dones, 0.0, gamma, 1.0)
    mc = np.zeros(T)
    acc = 0.0
    for t in reversed(range(T)):
        acc = r[t] + gamma * acc * (1.0 - dones[t])
        mc[t] = acc
    err = float(np.abs(ret - mc).max())
    assert err < 1e-6, f"max |GAE - MC| = {err:g}"


def check_gae_hand_recursion():
    """r=[1,1], V=[0,0], terminal end, gamma=.99, lam=.95 -> A=[1.9405, 1]."""
    adv, _ = compute_gae([1.0, 1.0], [0.0, 0.0], [0.0, 1.0], 0.0, 0.99, 0.95)
    expect = np.array([1.0 + 0.99 * 0.95 * 1.0, 1.0])
    err = float(np.abs(adv - expect).max())
    assert err < 1e-12, f"A = {adv}, expected {expect}"


def check_gaussian_density():
    """Sampled-action log-prob equals the closed-form diagonal density."""
    rng = np.random.default_rng(3)
    p = _tiny_policy(rng)
    obs = rng.normal(size=(16, p.obs_dim))
    actions, logp, _ = act(p, obs, rng=np.random.default_rng(7))
    _, logp_again, _ = act(p, obs, rng=np.random.default_rng(7))
    assert np.array_equal(logp, logp_again), "act is not seed-deterministic"
    mu = np.zeros_like(actions)
    for i in range(len(obs)):
        m, _, _ = act(p, obs[i:i + 1], deterministic=True)
        mu[i] = m[0]
    var = np.exp(2.0 * p.log_std)
    manual = -0.5 * np.sum((actions - mu) ** 2 / var
                           + 2.0 * p.log_std + np.log(2.0 * np.pi), axis=1)
    err = float(np.abs(logp - manual).max())
    assert err < 1e-9, f"max log-prob error {err:g}"
    err2 = float(np.abs(gaussian_logp(actions, mu, p.log_std) - manual).max())
    assert err2 < 1e-9, f"gaussian_logp error {err2:g}"


def check_clip_arithmetic():
    """ratio = 1.5, A = 1 everywhere -> surrogate clips to 1.2 exactly."""
    rng = np.random.default_rng(11)
    p = _tiny_policy(rng)
    obs = rng.normal(size=(6, p.obs_dim))
    actions, logp, _ = act(p, obs, rng=rng)
    old_logp = logp - np.log(1.5)
    _, _, stats = loss_and_grads(p, obs, actions, old_logp, np.ones(6),
                                 rng.normal(size=6), PPOHyper())
    err = abs(stats["policy_loss"] - (-1.2))
    assert err < 1e-9, f"policy loss {stats['policy_loss']:.12f}, expected -1.2"
    assert stats["clip_fraction"] == 1.0, "every sample should be clipped"


def check_ppo_gradient():
    """Analytic loss gradient matches central finite differences."""
    rng = np.random.default_rng(12)
    p = _tiny_policy(rng)
    obs = rng.normal(size=(3, p.obs_dim))
    actions, logp, _ = act(p, obs, rng=rng)
    args = (obs, actions, logp + rng.normal(0, 0.1, 3),
            rng.normal(size=3), rng.normal(size=3), PPOHyper())
    _, grads, _ = loss_and_grads(p, *args)
    h, worst = 1e-6, 0.0
    for param, grad in zip(p.trainable(), grads):
        flat, gflat = param.ravel(), grad.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up, _, _ = loss_and_grads(p, *args)
            flat[k] = orig - h
            dn, _, _ = loss_and_grads(p, *args)
            flat[k] = orig
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(gflat[k] - fd) / max(abs(fd), 1e-3))
    assert worst < 1e-4, f"worst relative gradient error {worst:g}"


def check_sampler_hand_case():
    """9/1/1/1 failures, floor 0.75/N -> probs (4, 1, 1, 1)/7."""
    s = build_bins([4.0], alpha=1e-9, min_coeff=0.75, max_coeff=100.0)
    s = update_sampler(s, [(0, True)] * 9 + [(1, True), (2, True), (3, True)])
    expect = np.array([4 / 7, 1 / 7, 1 / 7, 1 / 7])
    err = float(np.abs(s.probs - expect).max())
    assert err < 1e-9, f"probs {s.probs}, expected {expect}"


def check_sampler_bounds():
    """Clamp stage respects [min/N, max/N]; output stays normalized."""
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        fails = rng.integers(0, 50, size=n).astype(float)
        raw = fails + 0.001
        clamped = np.clip(raw / raw.sum(), 0.75 / n, 100.0 / n)
        assert np.all(clamped >= 0.75 / n - 1e-15), "floor violated"
        assert np.all(clamped <= 100.0 / n + 1e-15), "cap violated"
        p = compute_probs(fails, 0.001, 0.75, 100.0)
        assert abs(p.sum() - 1.0) < 1e-9, f"probs sum to {p.sum():.12f}"


def check_tracking_errors_brute_force():
    """Vectorized tracking errors equal a per-frame python scan."""
    model = load_builtin_model("planar-walker-7")
    a = synthesize_gait(model, GaitSpec(type="walk", duration=2.0))
    b = synthesize_gait(model, GaitSpec(type="walk", duration=2.0,
                                        frequency=1.2))
    mpjpe, dvel, dacc = tracking_errors(a, b, model)

    tb = list(model.tracked_idx)
    n = min(a.n_frames, b.n_frames)

    def frame_kin(clip, i):
        q = np.concatenate([clip.root_pos[i], [clip.root_pitch[i]],
                            clip.joint_pos[i]])
        dq = np.concatenate([clip.root_lin_vel[i], [clip.root_ang_vel[i]],
                             clip.joint_vel[i]])
        return link_kinematics(model, q[None], dq[None])

    sp = sv = sw = 0.0
    for i in range(n):
        pa, aa, va, wa = frame_kin(a, i)
        pb, ab, vb, wb = frame_kin(b, i)
        for j in tb:
            sp += float(np.linalg.norm(pa[0, j] - pb[0, j]))
            sv += float(np.linalg.norm(va[0, j] - vb[0, j]))
            sw += abs(float(wa[0, j] - wb[0, j]))
    cnt = n * len(tb)
    for got, want, name in ((mpjpe, sp / cnt * 1e3, "mpjpe"),
                            (dvel, sv / cnt * 1e3, "dvel"),
                            (dacc, sw / cnt, "dacc")):
        assert abs(got - want) < 1e-9, f"{name}: {got!r} vs scan {want!r}"


def check_floating_hand_case():
    """1.5 s above threshold counts; a 0.9 s excursion does not."""
    fps, thr = 50.0, 0.8
    z = np.full(300, 0.7)
    z[20:95] = 0.95          # 1.5 s
    z[150:195] = 0.95        # 0.9 s — under the 1 s rule
    dur = floating_duration(z, fps, thr, min_duration=1.0)
    assert abs(dur - 1.5) < 1e-9, f"floating duration {dur}, expected 1.5"


def check_segmentation_hand_case():
    """Termination at 12 s of a 30 s episode fails segments 2 and 3."""
    model = load_builtin_model("planar-walker-7")
    ref = synthesize_gait(model, GaitSpec(type="stand", duration=30.0))
    rolled = slice_clip(ref, 0, 601)   # stops at t = 12 s
    failed, total = segment_failures(rolled, ref, model)
    assert (failed, total) == (2, 3), f"got {failed}/{total}, expected 2/3"
    sr = 100.0 * (total - failed) / total
    assert abs(sr - 100.0 / 3.0) < 1e-9, f"SR {sr:.4f}, expected 33.3333"


CHECKS = [
    ("gae lambda=1 equals monte-carlo", check_gae_monte_carlo),
    ("gae hand recursion", check_gae_hand_recursion),
    ("gaussian log-density closed form", check_gaussian_density),
    ("clipped surrogate arithmetic", check_clip_arithmetic),
    ("ppo gradient vs finite differences", check_ppo_gradient),
    ("sampler hand clamp case", check_sampler_hand_case),
    ("sampler clamp bounds", check_sampler_bounds),
    ("tracking errors vs per-frame scan", check_tracking_errors_brute_force),
    ("floating-duration hand case", check_floating_hand_case),
    ("segment failure hand case", check_segmentation_hand_case),
]


def run_selftest(stream=None) -> bool:
    stream = stream or sys.stdout
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except AssertionError as e:
            ok = False
            print(f"FAIL  {name}: {e}", file=stream)
        else:
            print(f"ok    {name}", file=stream)
    print(("all checks passed" if ok else "SELFTEST FAILED"), file=stream)
    return ok
