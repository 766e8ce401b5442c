"""Training loop and checkpoint serialization."""

import io
import json

import numpy as np
import pytest

from physref.checkpoint import (CheckpointError, load_checkpoint,
                                save_checkpoint)
from physref.envs import TrackingEnv
from physref.motion import GaitSpec, synthesize_gait
from physref.rl import AdamState, PPOHyper, act, init_policy, ppo_update
from physref.rl.train import TrainConfig, TrainError, train
from physref.sim import RandomizationRanges
from physref.stage import Stage


def small_env(walker, stage=Stage.PMG, n_envs=4, seed=0, duration=2.0):
    clip = synthesize_gait(walker, GaitSpec(type="stand", duration=duration))
    return TrackingEnv(walker, [clip], stage, n_envs=n_envs, seed=seed)


def clone_arrays(arrays):
    return [a.copy() for a in arrays]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

class TestCheckpoint:
    def make_params(self, seed=0, obs_dim=17, action_dim=5):
        rng = np.random.default_rng(seed)
        params = init_policy(obs_dim, action_dim, rng)
        params.norm.update(rng.normal(size=(100, obs_dim)) * 3.0 + 1.0)
        return params

    def test_round_trip_exact(self, tmp_path):
        params = self.make_params()
        opt = AdamState.for_params(params.trainable())
        for m in opt.m:
            m += 0.25
        opt.step = 7
        p = tmp_path / "policy.ckpt"
        save_checkpoint(p, params, stage=Stage.GMT, model_name="bot",
                        iteration=42, opt=opt)
        ck = load_checkpoint(p)
        assert ck.model == "bot" and ck.stage is Stage.GMT
        assert ck.iteration == 42
        for a, b in zip(params.trainable(), ck.params.trainable()):
            assert np.array_equal(a, b)
        assert np.array_equal(params.norm.mean, ck.params.norm.mean)
        assert np.array_equal(params.norm.var, ck.params.norm.var)
        assert ck.params.norm.count == params.norm.count
        assert ck.opt.step == 7
        for a, b in zip(opt.m + opt.v, ck.opt.m + ck.opt.v):
            assert np.array_equal(a, b)

        obs = np.random.default_rng(3).normal(size=(6, 17))
        a0, lp0, v0 = act(params, obs, deterministic=True)
        a1, lp1, v1 = act(ck.params, obs, deterministic=True)
        assert np.array_equal(a0, a1) and np.array_equal(v0, v1)

    def test_opt_optional(self, tmp_path):
        params = self.make_params()
        p = tmp_path / "p.ckpt"
        save_checkpoint(p, params, stage="pmg", model_name="bot")
        assert load_checkpoint(p).opt is None

    def test_identical_bytes(self, tmp_path):
        params = self.make_params()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, params, stage="gmt", model_name="bot", iteration=1)
        save_checkpoint(b, params, stage="gmt", model_name="bot", iteration=1)
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(CheckpointError, match="not a policy checkpoint"):
            load_checkpoint(p)

    def test_rejects_truncation(self, tmp_path):
        params = self.make_params()
        p = tmp_path / "p.ckpt"
        save_checkpoint(p, params, stage="gmt", model_name="bot")
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(p)

    def test_expectation_mismatches(self, tmp_path):
        params = self.make_params()
        p = tmp_path / "p.ckpt"
        save_checkpoint(p, params, stage="gmt", model_name="bot")
        with pytest.raises(CheckpointError, match="model"):
            load_checkpoint(p, expect_model="other")
        with pytest.raises(CheckpointError, match="gmt policy"):
            load_checkpoint(p, expect_stage="pmg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "nope.ckpt")


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

class TestTrainLoop:
    def test_config_validation(self):
        with pytest.raises(TrainError):
            TrainConfig(iterations=0)
        with pytest.raises(TrainError):
            TrainConfig(horizon=1)

    def test_short_run_bookkeeping(self, walker, tmp_path):
        env = small_env(walker, n_envs=3)
        log = io.StringIO()
        saved = []
        cfg = TrainConfig(iterations=3, horizon=12, seed=1,
                          checkpoint_every=2,
                          hyper=PPOHyper())
        res = train(env, cfg, log_stream=log,
                    checkpoint_fn=lambda p, o, it: saved.append(it))
        assert res.iterations_run == 3 and not res.aborted
        assert len(res.history) == 3
        for rec in res.history:
            assert np.isfinite(rec["reward_mean"])
            assert rec["aborted"] is False
        lines = [json.loads(l) for l in log.getvalue().splitlines()]
        assert [l["iteration"] for l in lines] == [0, 1, 2]
        assert saved == [2, 3]  # periodic save + final save

    def test_policy_shape_checked(self, walker):
        env = small_env(walker)
        params = init_policy(env.obs_dim + 1, env.action_dim,
                             np.random.default_rng(0))
        with pytest.raises(TrainError, match="shaped"):
            train(env, TrainConfig(iterations=1, horizon=4), params=params)

    def test_deterministic_given_seeds(self, walker):
        outs = []
        for _ in range(2):
            env = small_env(walker, n_envs=2, seed=5)
            cfg = TrainConfig(iterations=2, horizon=8, seed=9,
                              hyper=PPOHyper())
            res = train(env, cfg)
            outs.append(res)
        for a, b in zip(outs[0].params.trainable(), outs[1].params.trainable()):
            assert np.array_equal(a, b)
        for ra, rb in zip(outs[0].history, outs[1].history):
            ra, rb = dict(ra), dict(rb)
            ra.pop("time_s"), rb.pop("time_s")
            assert ra == rb

    def test_divergence_watchdog(self, walker):
        class PoisonEnv(TrackingEnv):
            def step(self, actions):
                obs, r, term, trunc, info = super().step(actions)
                return obs, np.full_like(r, np.nan), term, trunc, info

        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        env = PoisonEnv(walker, [clip], Stage.PMG, n_envs=2, seed=0)
        params = init_policy(env.obs_dim, env.action_dim,
                             np.random.default_rng(2))
        before = clone_arrays(params.trainable())
        cfg = TrainConfig(iterations=10, horizon=8, seed=3,
                          hyper=PPOHyper())
        res = train(env, cfg, params=params)
        assert res.aborted
        assert res.iterations_run == cfg.max_consecutive_aborts == 2
        assert all(rec["aborted"] for rec in res.history)
        # every poisoned update must have been rolled back untouched
        for a, b in zip(before, res.params.trainable()):
            assert np.array_equal(a, b)

    def test_stand_reward_improves(self, walker):
        """A short PPO run on a pure stand must already trend upward."""
        env = small_env(walker, stage=Stage.PMG, n_envs=8, seed=0,
                        duration=2.0)
        cfg = TrainConfig(iterations=40, horizon=24, seed=0,
                          hyper=PPOHyper())
        res = train(env, cfg)
        assert not res.aborted
        early = np.mean([r["reward_mean"] for r in res.history[:5]])
        late = np.mean([r["reward_mean"] for r in res.history[-5:]])
        assert late > early + 0.05
        assert all(np.isfinite(r["reward_mean"]) for r in res.history)
