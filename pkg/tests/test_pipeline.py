"""Configuration loading and the two-stage orchestration layer."""

import json

import numpy as np
import pytest
import yaml

from physref.checkpoint import Checkpoint, load_checkpoint
from physref.config import (ConfigError, DatasetEntry, apply_overrides,
                            build_stage_config, load_config)
from physref.metrics import artifact_report
from physref.motion import (GaitSpec, load_motion, save_motion,
                            synthesize_gait)
from physref.obs import obs_dim
from physref.pipeline import (PipelineError, evaluate_policy, load_motion_set,
                              record_physical_references, resolve_dataset,
                              rollout_tracking, save_motion_set, train_stage)
from physref.rl import init_policy
from physref.stage import Stage

WALKER = "planar-walker-7"


def base_raw(stage="pmg", **extra):
    d = {
        "stage": stage,
        "model": WALKER,
        "dataset": [{"gait": {"type": "stand", "duration": 2.0}}],
        "iterations": 2,
        "n_envs": 2,
    }
    d.update(extra)
    return d


def passive_checkpoint(walker, stage=Stage.PMG, seed=0):
    # Zero the actor output layer so the deterministic action is exactly 0
    # (PD holds the default pose).  Recording/eval plumbing can then be
    # tested without training a policy first.
    params = init_policy(obs_dim(walker, stage), walker.n_joints,
                         np.random.default_rng(seed))
    params.actor[-2][:] = 0.0
    params.actor[-1][:] = 0.0
    return Checkpoint(params=params, opt=None, stage=Stage.parse(stage),
                      model=walker.name, iteration=0)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

class TestConfig:
    def test_minimal_round_trip(self, tmp_path):
        p = tmp_path / "run.yaml"
        p.write_text(yaml.safe_dump(base_raw()))
        cfg = load_config(p)
        assert cfg.stage is Stage.PMG
        assert cfg.iterations == 2
        assert cfg.dataset[0].gait.type == "stand"
        assert cfg.dataset[0].label == "stand"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="config not found"):
            load_config(tmp_path / "nope.yaml")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key 'foo'"):
            build_stage_config(base_raw(foo=1))
        with pytest.raises(ConfigError, match="ppo: unknown key 'lr'"):
            build_stage_config(base_raw(ppo={"lr": 1e-4}))
        with pytest.raises(ConfigError, match=r"dataset\[0\].gait"):
            build_stage_config(base_raw(
                dataset=[{"gait": {"type": "stand", "speed": 2}}]))

    def test_stage_invariants(self):
        with pytest.raises(ConfigError, match="nominal physics"):
            build_stage_config(base_raw(
                randomization={"friction_static": [0.4, 1.2]}))
        # an empty block is the documented way to say "none"
        cfg = build_stage_config(base_raw(randomization={}))
        assert cfg.randomization is None
        with pytest.raises(ConfigError, match="pmg stage only"):
            build_stage_config(base_raw(
                stage="gmt", command_noise={"joint_pos": 0.01}))
        with pytest.raises(ConfigError, match="gmt stage only"):
            build_stage_config(base_raw(obs_noise={"joint_pos": 0.01}))

    def test_dataset_entry_validation(self):
        with pytest.raises(ConfigError, match="exactly one"):
            DatasetEntry(path="a.ref", gait=GaitSpec())
        with pytest.raises(ConfigError, match="exactly one"):
            DatasetEntry()
        with pytest.raises(ConfigError, match="synthesized"):
            build_stage_config(base_raw(dataset=[
                {"path": "a.ref", "artifacts": {"jitter_std": 0.01}}]))

    def test_overrides_typed(self):
        raw = apply_overrides(base_raw(), [
            "iterations=7",
            "ppo.learning_rate=3e-4",
            "ppo.epochs=2",
            "model=planar-walker-7",
            "dataset.0.gait.duration=4.0",
        ])
        cfg = build_stage_config(raw)
        assert cfg.iterations == 7
        assert cfg.ppo.learning_rate == pytest.approx(3e-4)
        assert isinstance(cfg.ppo.epochs, int) and cfg.ppo.epochs == 2
        assert cfg.dataset[0].gait.duration == 4.0

    def test_override_errors(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["oops"])
        with pytest.raises(ConfigError, match="not a block"):
            apply_overrides({"iterations": 3}, ["iterations.x=1"])
        with pytest.raises(ConfigError, match="unknown"):
            build_stage_config(apply_overrides(base_raw(), ["ppo.warmup=1"]))

    def test_ranges_from_lists(self):
        cfg = build_stage_config(base_raw(
            stage="gmt",
            dataset=[{"path": "refs/stand.ref"}],
            randomization={"friction_static": [0.5, 1.0]}))
        assert cfg.randomization.friction_static == (0.5, 1.0)


# ---------------------------------------------------------------------------
# dataset resolution
# ---------------------------------------------------------------------------

class TestResolveDataset:
    def test_synthesis_deterministic(self, walker):
        entries = [DatasetEntry(gait=GaitSpec(type="walk", duration=2.0),
                                artifacts=None)]
        a = resolve_dataset(entries, walker, seed=3)
        b = resolve_dataset(entries, walker, seed=3)
        assert np.array_equal(a[0][1].joint_pos, b[0][1].joint_pos)

    def test_artifacts_applied(self, walker):
        from physref.motion import ArtifactSpec
        entries = [DatasetEntry(
            gait=GaitSpec(type="stand", duration=6.0),
            artifacts=ArtifactSpec(penetration_depth=0.03,
                                   penetration_fraction=0.2))]
        (label, clip), = resolve_dataset(entries, walker, seed=0)
        rep = artifact_report(clip, walker)
        assert rep.penetration_fraction == pytest.approx(0.2, abs=0.02)

    def test_path_loading(self, walker, tmp_path):
        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        save_motion(clip, tmp_path / "s.ref")
        out = resolve_dataset([DatasetEntry(path="s.ref")], walker,
                              base_dir=tmp_path)
        assert out[0][0] == "s"
        assert np.array_equal(out[0][1].joint_pos, clip.joint_pos)

    def test_missing_clip(self, walker):
        with pytest.raises(PipelineError, match="dataset clip"):
            resolve_dataset([DatasetEntry(path="missing.ref")], walker)


# ---------------------------------------------------------------------------
# stage training plumbing
# ---------------------------------------------------------------------------

class TestTrainStage:
    def test_pmg_smoke_writes_artifacts(self, tmp_path):
        cfg = build_stage_config(base_raw())
        out = train_stage(cfg, tmp_path)
        assert out.checkpoint_path.exists()
        ck = load_checkpoint(out.checkpoint_path, expect_model=WALKER,
                             expect_stage="pmg")
        assert ck.iteration == 2
        assert ck.opt is not None
        records = [json.loads(l) for l in out.log_path.read_text().splitlines()]
        assert [r["iteration"] for r in records] == [0, 1]

    def test_gmt_refuses_raw_sources(self, tmp_path):
        cfg = build_stage_config(base_raw(stage="gmt"))
        with pytest.raises(ConfigError, match="physical-source"):
            train_stage(cfg, tmp_path)

    def test_gmt_trains_on_recorded_refs(self, walker, tmp_path):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ms = record_physical_references(passive_checkpoint(walker),
                                        [("stand", raw)])
        save_motion_set(ms, tmp_path / "refs")
        cfg = build_stage_config(base_raw(
            stage="gmt", dataset=[{"path": str(tmp_path / "refs/stand.ref")}]))
        out = train_stage(cfg, tmp_path)
        assert load_checkpoint(out.checkpoint_path).stage is Stage.GMT


# ---------------------------------------------------------------------------
# rollout recording + gating
# ---------------------------------------------------------------------------

class TestRecordReferences:
    def test_stand_recording_passes_gate(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ms = record_physical_references(passive_checkpoint(walker),
                                        [("stand", raw)])
        assert ms.labels == ["stand"] and not ms.excluded
        rec = ms.clips[0]
        assert rec.source == "physical"
        assert rec.n_frames == raw.n_frames
        assert rec.contacts is not None and rec.contacts.any()
        rep = artifact_report(rec, walker)
        assert rep.penetration_fraction == 0.0
        assert rep.floating_fraction == 0.0
        assert ms.per_clip[0]["mpjpe_vs_raw"] < 30.0  # mm

    def test_untrackable_clip_excluded(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        raw.root_pos[25:, 0] += 2.0  # nothing can follow a teleport
        ms = record_physical_references(passive_checkpoint(walker),
                                        [("tele", raw)])
        assert not ms.clips
        assert ms.excluded[0]["label"] == "tele"
        assert "terminated" in ms.excluded[0]["reason"]

    def test_stage_and_model_guards(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        with pytest.raises(PipelineError, match="pmg checkpoint"):
            record_physical_references(
                passive_checkpoint(walker, stage=Stage.GMT),
                [("stand", raw)])
        alien = raw.copy()
        alien.model = "other-bot"
        with pytest.raises(PipelineError, match="other-bot"):
            record_physical_references(passive_checkpoint(walker),
                                       [("x", alien)])

    def test_recording_deterministic(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ck = passive_checkpoint(walker)
        a = record_physical_references(ck, [("stand", raw)])
        b = record_physical_references(ck, [("stand", raw)])
        assert np.array_equal(a.clips[0].joint_pos, b.clips[0].joint_pos)
        assert np.array_equal(a.clips[0].root_pos, b.clips[0].root_pos)

    def test_motion_set_round_trip(self, walker, tmp_path):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ms = record_physical_references(passive_checkpoint(walker),
                                        [("stand", raw)])
        save_motion_set(ms, tmp_path)
        loaded = load_motion_set(tmp_path)
        assert loaded.labels == ms.labels
        assert loaded.provenance == ms.provenance
        assert np.array_equal(loaded.clips[0].joint_pos,
                              ms.clips[0].joint_pos)
        on_disk = load_motion(tmp_path / "stand.ref")
        assert on_disk.source == "physical"

    def test_rollout_guards(self, walker):
        from physref.motion import resample_motion
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ck = passive_checkpoint(walker)
        with pytest.raises(PipelineError, match="control rate"):
            rollout_tracking(walker, ck.params, resample_motion(raw, 25.0),
                             Stage.PMG)
        with pytest.raises(PipelineError, match="observations"):
            rollout_tracking(walker, ck.params, raw, Stage.GMT)
        with pytest.raises(PipelineError, match="rng"):
            from physref.sim import RandomizationRanges
            rollout_tracking(walker, ck.params, raw, Stage.PMG,
                             push_ranges=RandomizationRanges())


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

class TestEvaluatePolicy:
    def test_stand_eval_report(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ck = passive_checkpoint(walker, stage=Stage.GMT)
        rep = evaluate_policy(ck, [("stand", raw)])
        assert rep.n_episodes == 1
        assert rep.success_rate == 100.0
        assert rep.mpjpe < 30.0
        assert np.isfinite(rep.dvel) and np.isfinite(rep.dacc)

    def test_deterministic(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=3.0))
        ck = passive_checkpoint(walker, stage=Stage.GMT)
        a = evaluate_policy(ck, [("stand", raw)], episodes_per_clip=2, seed=5)
        b = evaluate_policy(ck, [("stand", raw)], episodes_per_clip=2, seed=5)
        assert a == b

    def test_pushes_smoke(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ck = passive_checkpoint(walker, stage=Stage.GMT)
        rep = evaluate_policy(ck, [("stand", raw)], pushes=True, seed=1)
        assert 0.0 <= rep.success_rate <= 100.0

    def test_pmg_checkpoint_evaluable(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        rep = evaluate_policy(passive_checkpoint(walker), [("stand", raw)])
        assert rep.success_rate == 100.0

    def test_episode_validation(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        ck = passive_checkpoint(walker, stage=Stage.GMT)
        with pytest.raises(PipelineError, match="episodes"):
            evaluate_policy(ck, [("stand", raw)], episodes_per_clip=0)
