"""Metrics vs brute-force oracles: penetration, floating, smoothness, MPJPE,
velocity errors, and segment success rate."""

import numpy as np
import pytest
from dataclasses import replace

from physref.metrics import (
    ArtifactReport,
    EvalReport,
    MetricThresholds,
    MetricsError,
    artifact_report,
    build_eval_report,
    clip_qpos,
    floating_duration,
    joint_jerk,
    segment_failures,
    success_rate,
    tracking_errors,
)
from physref.model import forward_state
from physref.motion import ArtifactSpec, GaitSpec, MotionClip, inject_artifacts, synthesize_gait


def truncate(clip, n):
    return replace(
        clip,
        root_pos=clip.root_pos[:n], root_pitch=clip.root_pitch[:n],
        root_lin_vel=clip.root_lin_vel[:n], root_ang_vel=clip.root_ang_vel[:n],
        joint_pos=clip.joint_pos[:n], joint_vel=clip.joint_vel[:n],
        contacts=None if clip.contacts is None else clip.contacts[:n],
    )


def shift_root(clip, dx=0.0, dz=0.0, frames=slice(None)):
    out = clip.copy()
    out.root_pos[frames, 0] += dx
    out.root_pos[frames, 1] += dz
    return out


class TestArtifactReport:
    def test_clean_stand(self, walker):
        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=5.0))
        rep = artifact_report(clip, walker)
        assert rep.penetration_duration == 0.0
        assert rep.floating_duration == 0.0
        assert rep.smoothness == 0.0
        assert rep.mpjpe == 0.0

    def test_floating_needs_a_full_second(self, walker):
        # base height lowered to 0.75 so the absolute 0.8 m threshold applies
        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=20.0))
        clip = shift_root(clip, dz=-0.10)
        clip = shift_root(clip, dz=0.95 - 0.75, frames=slice(100, 175))   # 1.5 s
        clip = shift_root(clip, dz=0.95 - 0.75, frames=slice(300, 345))   # 0.9 s
        rep = artifact_report(clip, walker,
                              thresholds=MetricThresholds(floating_height=0.8))
        assert rep.floating_duration == pytest.approx(1.5)
        assert rep.floating_fraction == pytest.approx(1.5 / (clip.n_frames / 50.0))

    def test_injected_floating_measured(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=60.0))
        spec = ArtifactSpec(floating_offset=0.3, floating_fraction=0.025)
        clip = inject_artifacts(raw, spec, np.random.default_rng(0))
        rep = artifact_report(clip, walker)
        assert rep.floating_duration == pytest.approx(1.5, abs=0.05)

    def test_injected_penetration_measured(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=20.0))
        spec = ArtifactSpec(penetration_depth=0.03, penetration_fraction=0.2)
        clip = inject_artifacts(raw, spec, np.random.default_rng(1))
        rep = artifact_report(clip, walker)
        assert rep.penetration_fraction == pytest.approx(0.2, abs=2.0 / clip.n_frames)

    def test_fraction_monotone_in_injection(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="stand", duration=30.0))
        rng = np.random.default_rng(2)
        fracs = []
        for f in (0.05, 0.15, 0.3):
            spec = ArtifactSpec(penetration_depth=0.03, penetration_fraction=f,
                                floating_offset=0.3, floating_fraction=f)
            rep = artifact_report(inject_artifacts(raw, spec, rng), walker)
            fracs.append((rep.penetration_fraction, rep.floating_fraction))
        assert fracs[0][0] < fracs[1][0] < fracs[2][0]
        assert fracs[0][1] < fracs[1][1] < fracs[2][1]

    def test_resting_depth_not_flagged(self, walker):
        # feet 4 mm under ground stays inside the 5 mm tolerance
        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        clip = shift_root(clip, dz=-0.004)
        rep = artifact_report(clip, walker)
        assert rep.penetration_duration == 0.0

    def test_jitter_raises_smoothness(self, walker):
        raw = synthesize_gait(walker, GaitSpec(type="walk", duration=10.0))
        noisy = inject_artifacts(raw, ArtifactSpec(jitter_std=0.02),
                                 np.random.default_rng(3))
        assert artifact_report(noisy, walker).smoothness > \
            artifact_report(raw, walker).smoothness

    def test_mpjpe_identity(self, walker):
        clip = synthesize_gait(walker, GaitSpec(type="walk", duration=2.0))
        assert artifact_report(clip, walker, baseline=clip).mpjpe == 0.0


class TestJerk:
    def test_cubic_exact(self):
        # third derivative of t^3 is 6; the 5-point stencil is exact on cubics
        t = np.arange(100) / 50.0
        clip_q = (t ** 3)[:, None]
        assert joint_jerk(clip_q, 50.0) == pytest.approx(6.0, rel=1e-9)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(4)
        q = rng.normal(size=(40, 3))
        fps = 50.0
        dt = 1.0 / fps
        vals = []
        for i in range(2, 38):
            for j in range(3):
                vals.append(abs((q[i + 2, j] - 2 * q[i + 1, j]
                                 + 2 * q[i - 1, j] - q[i - 2, j]) / (2 * dt ** 3)))
        assert joint_jerk(q, fps) == pytest.approx(np.mean(vals), abs=1e-9)

    def test_short_clip(self):
        assert joint_jerk(np.zeros((4, 2)), 50.0) == 0.0


class TestFloatingScan:
    def test_runs_and_threshold(self):
        fps = 50.0
        z = np.full(1000, 0.85)
        z[100:175] = 0.95      # 1.5 s
        z[300:345] = 0.95      # 0.9 s -> ignored
        z[500:551] = 0.95      # 1.02 s -> counted
        assert floating_duration(z, fps, 0.9) == pytest.approx(1.5 + 1.02)

    def test_exactly_one_second_ignored(self):
        z = np.full(500, 0.85)
        z[100:150] = 0.95      # exactly 1.0 s, rule is strictly greater
        assert floating_duration(z, 50.0, 0.9) == 0.0


class TestTrackingErrors:
    def test_identity(self, walker):
        clip = synthesize_gait(walker, GaitSpec(type="walk", duration=2.0))
        assert tracking_errors(clip, clip, walker) == (0.0, 0.0, 0.0)

    def test_constant_offset(self, walker):
        ref = synthesize_gait(walker, GaitSpec(type="walk", duration=2.0))
        rolled = shift_root(ref, dx=0.01)
        mpjpe, dvel, dacc = tracking_errors(rolled, ref, walker)
        assert mpjpe == pytest.approx(10.0, abs=1e-9)
        assert dvel == 0.0
        assert dacc == 0.0

    def test_translation_invariance(self, walker):
        ref = synthesize_gait(walker, GaitSpec(type="walk", duration=2.0))
        rolled = shift_root(ref, dx=0.01)
        a = tracking_errors(rolled, ref, walker)
        b = tracking_errors(shift_root(rolled, dx=0.7, dz=0.2),
                            shift_root(ref, dx=0.7, dz=0.2), walker)
        assert a == pytest.approx(b, abs=1e-9)

    def test_matches_per_frame_oracle(self, walker):
        rng = np.random.default_rng(5)
        def noisy_clip():
            clip = synthesize_gait(walker, GaitSpec(type="walk", duration=1.0))
            out = clip.copy()
            out.root_pos += rng.normal(0, 0.02, out.root_pos.shape)
            out.root_pitch += rng.normal(0, 0.02, out.root_pitch.shape)
            out.joint_pos += rng.normal(0, 0.02, out.joint_pos.shape)
            out.joint_vel += rng.normal(0, 0.1, out.joint_vel.shape)
            return out
        a, b = noisy_clip(), noisy_clip()
        mpjpe, dvel, dacc = tracking_errors(a, b, walker)

        tb = walker.tracked_idx
        dp, dv, dw = [], [], []
        for i in range(a.n_frames):
            sa = forward_state(walker, [*a.root_pos[i], a.root_pitch[i]],
                               [*a.root_lin_vel[i], a.root_ang_vel[i]],
                               a.joint_pos[i], a.joint_vel[i])
            sb = forward_state(walker, [*b.root_pos[i], b.root_pitch[i]],
                               [*b.root_lin_vel[i], b.root_ang_vel[i]],
                               b.joint_pos[i], b.joint_vel[i])
            dp.extend(np.linalg.norm(sa.position[tb] - sb.position[tb], axis=1))
            dv.extend(np.linalg.norm(sa.lin_vel[tb] - sb.lin_vel[tb], axis=1))
            dw.extend(np.abs(sa.ang_vel[tb] - sb.ang_vel[tb]))
        assert mpjpe == pytest.approx(np.mean(dp) * 1000, abs=1e-9)
        assert dvel == pytest.approx(np.mean(dv) * 1000, abs=1e-9)
        assert dacc == pytest.approx(np.mean(dw), abs=1e-9)

    def test_fps_mismatch(self, walker):
        a = synthesize_gait(walker, GaitSpec(type="stand", duration=2.0))
        b = replace(a.copy(), fps=25.0)
        with pytest.raises(MetricsError, match="fps"):
            tracking_errors(a, b, walker)


class TestSuccessRate:
    def make_ref(self, walker, duration):
        clip = synthesize_gait(walker, GaitSpec(type="stand", duration=duration))
        return clip

    def test_perfect_tracking(self, walker):
        ref = self.make_ref(walker, 30.0)
        assert success_rate([(ref, ref)], walker) == 100.0

    def test_single_bad_step_fails_one_segment(self, walker):
        ref = self.make_ref(walker, 30.0)        # 1501 frames = 3 segments
        rolled = shift_root(ref, dz=0.3, frames=slice(700, 701))
        assert success_rate([(rolled, ref)], walker) == pytest.approx(200.0 / 3.0)

    def test_early_termination_fails_remaining(self, walker):
        ref = self.make_ref(walker, 30.0)
        rolled = truncate(ref, 601)               # stops at t = 12 s
        failed, total = segment_failures(rolled, ref, walker)
        assert (failed, total) == (2, 3)
        assert success_rate([(rolled, ref)], walker) == pytest.approx(100.0 / 3.0)

    def test_trailing_partial_counts_once(self, walker):
        ref = self.make_ref(walker, 25.0)
        failed, total = segment_failures(ref, ref, walker)
        assert total == 3
        rolled = shift_root(ref, dz=0.3, frames=slice(1100, 1101))  # t = 22 s
        assert success_rate([(rolled, ref)], walker) == pytest.approx(200.0 / 3.0)

    def test_ee_height_error_triggers(self, walker):
        ref = self.make_ref(walker, 10.0)
        rolled = ref.copy()
        rolled.joint_pos[200:210, walker.joint_index["knee_l"]] = -2.0
        failed, total = segment_failures(rolled, ref, walker)
        assert (failed, total) == (1, 1)

    def test_threshold_boundary(self, walker):
        ref = self.make_ref(walker, 10.0)
        ok = shift_root(ref, dz=0.24)
        bad = shift_root(ref, dz=0.26)
        assert success_rate([(ok, ref)], walker) == 100.0
        assert success_rate([(bad, ref)], walker) == 0.0

    def test_multiple_pairs_aggregate(self, walker):
        ref = self.make_ref(walker, 30.0)
        bad = shift_root(ref, dz=0.3, frames=slice(700, 701))
        assert success_rate([(ref, ref), (bad, ref)], walker) == \
            pytest.approx(100.0 * 5.0 / 6.0)


class TestEvalReport:
    def test_build(self, walker):
        ref = synthesize_gait(walker, GaitSpec(type="walk", duration=12.0))
        rolled = shift_root(ref, dx=0.01)
        rep = build_eval_report([(rolled, ref), (ref, ref)], walker)
        assert rep.n_episodes == 2
        assert len(rep.per_clip) == 2
        assert rep.success_rate == 100.0
        assert rep.mpjpe == pytest.approx(5.0, abs=1e-9)   # mean of 10 and 0
        assert rep.per_clip[0]["segments"] == 2

    def test_invariants_enforced(self):
        with pytest.raises(MetricsError, match="success rate"):
            EvalReport(success_rate=120.0, mpjpe=0, dvel=0, dacc=0,
                       per_clip=(), n_episodes=1)
        with pytest.raises(MetricsError, match="episode"):
            EvalReport(success_rate=50.0, mpjpe=0, dvel=0, dacc=0,
                       per_clip=(), n_episodes=0)

    def test_empty_pairs(self, walker):
        with pytest.raises(MetricsError, match="episode"):
            build_eval_report([], walker)
