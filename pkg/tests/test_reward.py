"""Reward terms: kernels, wrapping, stage gating, and hand-summed totals."""

import numpy as np
import pytest

from physref.model import BodyState, forward_state
from physref.reward import (
    RewardConfig,
    RewardError,
    compute_reward,
    exp_kernel,
    reward_terms,
    wrap_angle,
)
from physref.sim import ContactReport
from physref.stage import Stage


def feet_report(model, force=50.0, extra_links=()):
    """Contact report with both feet loaded at ``force`` N."""
    P = model.n_contact_points
    link_force = np.zeros(model.n_links)
    link_force[model.ee_idx] = force
    for name in extra_links:
        link_force[model.link_index[name]] = 10.0
    return ContactReport(
        point_link=tuple(model.links[li].name for li in model.cp_link),
        in_contact=np.full(P, force > 0),
        normal_force=np.full(P, force / 2.0),
        tangent_force=np.zeros(P),
        depth=np.zeros(P),
        link_force=link_force,
    )


def standing(model):
    body = forward_state(model, [0.0, model.standing_root_height, 0.0],
                         [0.0, 0.0, 0.0], model.default_pose,
                         np.zeros(model.n_joints))
    root = np.array([0.0, model.standing_root_height, 0.0])
    return body, root


def identity_args(model, stage, **overrides):
    body, root = standing(model)
    nj = model.n_joints
    args = dict(
        body=body, body_ref=body, root=root, root_ref=root,
        contacts=feet_report(model), ref_contact_mask=np.array([True, True]),
        action=np.zeros(nj), prev_action=np.zeros(nj),
        q=model.default_pose, dq_ref=np.zeros(nj),
        model=model, stage=stage, config=RewardConfig(),
    )
    args.update(overrides)
    return args


class TestKernel:
    def test_zero_error(self):
        assert exp_kernel(0.0, 0.3) == 1.0

    def test_error_equals_sigma(self):
        assert exp_kernel(0.09, 0.3) == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_double_sigma(self):
        assert exp_kernel(0.36, 0.3) == pytest.approx(np.exp(-4.0), abs=1e-9)

    def test_strictly_decreasing_in_unit_interval(self):
        rng = np.random.default_rng(0)
        mse = np.sort(rng.uniform(0.0, 5.0, size=100))
        vals = exp_kernel(mse, 0.4)
        assert np.all(np.diff(vals) < 0)
        assert np.all(vals > 0.0) and np.all(vals <= 1.0)
        assert exp_kernel(1e-12, 0.4) < 1.0


class TestWrapAngle:
    def test_boundaries(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert wrap_angle(0.0) == 0.0
        assert wrap_angle(2 * np.pi) == pytest.approx(0.0, abs=1e-12)

    def test_period_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-10, 10, size=1000)
        assert np.allclose(wrap_angle(x + 2 * np.pi), wrap_angle(x), atol=1e-9)
        assert np.all(wrap_angle(x) > -np.pi) and np.all(wrap_angle(x) <= np.pi)


class TestComputeReward:
    def test_gmt_identity_total(self, walker):
        bd = compute_reward(**identity_args(walker, Stage.GMT))
        assert bd.total == pytest.approx(4.7, abs=1e-12)
        for name in ("body_pos", "body_ori", "body_lin_vel", "body_ang_vel",
                     "root_ori"):
            assert bd.terms[name] == pytest.approx(1.0)
        assert bd.terms["desired_contacts"] == 2.0
        assert bd.terms["action_smoothness"] == 0.0
        assert bd.terms["joint_limit"] == 0.0

    def test_pmg_identity_total(self, walker):
        bd = compute_reward(**identity_args(walker, Stage.PMG))
        assert bd.total == pytest.approx(5.0, abs=1e-12)
        assert bd.terms["root_pos"] == pytest.approx(1.0)
        assert bd.terms["undesired_contacts"] == 0.0
        assert "desired_contacts" not in bd.terms

    def test_joint_limit_penalty(self, walker):
        q = walker.default_pose.copy()
        q[walker.joint_index["hip_l"]] = 1.7  # limit is 1.6
        bd = compute_reward(**identity_args(walker, Stage.GMT, q=q))
        assert bd.terms["joint_limit"] == 1.0
        assert bd.weighted["joint_limit"] == -10.0
        assert bd.total == pytest.approx(4.7 - 10.0, abs=1e-12)

    def test_stage_gating(self, walker):
        gmt = compute_reward(**identity_args(walker, Stage.GMT))
        pmg = compute_reward(**identity_args(walker, Stage.PMG))
        assert "root_pos" not in gmt.terms
        assert "undesired_contacts" not in gmt.terms
        assert "desired_contacts" not in pmg.terms
        with pytest.raises(RewardError, match="not active"):
            gmt.term("root_pos")
        with pytest.raises(RewardError, match="not active"):
            pmg.term("desired_contacts")
        assert gmt.term("body_pos") == 1.0

    def test_contact_force_threshold(self, walker):
        low = compute_reward(**identity_args(
            walker, Stage.GMT, contacts=feet_report(walker, force=0.5)))
        high = compute_reward(**identity_args(
            walker, Stage.GMT, contacts=feet_report(walker, force=1.5)))
        assert low.terms["desired_contacts"] == 0.0
        assert high.terms["desired_contacts"] == 2.0

    def test_unwanted_contact_gives_no_credit(self, walker):
        bd = compute_reward(**identity_args(
            walker, Stage.GMT, ref_contact_mask=np.array([False, False])))
        assert bd.terms["desired_contacts"] == 0.0
        assert bd.total == pytest.approx(4.5, abs=1e-12)

    def test_undesired_contact_penalty_pmg(self, walker):
        bd = compute_reward(**identity_args(
            walker, Stage.PMG,
            contacts=feet_report(walker, extra_links=("torso",))))
        assert bd.terms["undesired_contacts"] == 1.0
        assert bd.total == pytest.approx(5.0 - 0.1, abs=1e-12)

    def test_smoothness_value_and_scaling(self, walker):
        nj = walker.n_joints
        a = np.full(nj, 0.1)
        slow = compute_reward(**identity_args(walker, Stage.GMT, action=a))
        fast = compute_reward(**identity_args(walker, Stage.GMT, action=a,
                                              dq_ref=np.ones(nj)))
        assert slow.terms["action_smoothness"] == pytest.approx(0.06)
        assert slow.weighted["action_smoothness"] == pytest.approx(-0.006)
        assert fast.weighted["action_smoothness"] == pytest.approx(-0.003)

    def test_smoothness_unscaled_in_pmg(self, walker):
        nj = walker.n_joints
        a = np.full(nj, 0.1)
        bd = compute_reward(**identity_args(walker, Stage.PMG, action=a,
                                            dq_ref=np.ones(nj)))
        assert bd.weighted["action_smoothness"] == pytest.approx(-0.006)

    def test_smoothness_magnitude_monotone_in_ref_speed(self, walker):
        nj = walker.n_joints
        a = np.full(nj, 0.2)
        mags = []
        for speed in (0.0, 0.5, 1.0, 2.0, 5.0):
            bd = compute_reward(**identity_args(
                walker, Stage.GMT, action=a, dq_ref=np.full(nj, speed)))
            mags.append(abs(bd.weighted["action_smoothness"]))
        assert all(m1 >= m2 for m1, m2 in zip(mags, mags[1:]))

    def test_wrap_invariance(self, walker):
        body, root = standing(walker)
        shifted = BodyState(position=body.position, angle=body.angle + 2 * np.pi,
                            lin_vel=body.lin_vel, ang_vel=body.ang_vel)
        root_shift = root + np.array([0.0, 0.0, 2 * np.pi])
        a = compute_reward(**identity_args(walker, Stage.PMG))
        b = compute_reward(**identity_args(walker, Stage.PMG, body_ref=shifted,
                                           root_ref=root_shift))
        assert b.total == pytest.approx(a.total, abs=1e-9)

    def test_uniform_offset_hits_kernel_scale(self, walker):
        body, root = standing(walker)
        shifted = BodyState(position=body.position + np.array([0.3, 0.0]),
                            angle=body.angle, lin_vel=body.lin_vel,
                            ang_vel=body.ang_vel)
        bd = compute_reward(**identity_args(
            walker, Stage.PMG, body_ref=shifted,
            root_ref=root + np.array([0.3, 0.0, 0.0])))
        assert bd.terms["body_pos"] == pytest.approx(np.exp(-1.0), abs=1e-9)
        assert bd.terms["root_pos"] == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_batched_matches_single(self, walker):
        rng = np.random.default_rng(8)
        nj, ne = walker.n_joints, len(walker.ee_idx)
        Bt = len(walker.tracked_idx)
        B = 5
        kw = dict(
            body_pos=rng.normal(size=(B, Bt, 2)), body_angle=rng.normal(size=(B, Bt)),
            body_lin_vel=rng.normal(size=(B, Bt, 2)), body_ang_vel=rng.normal(size=(B, Bt)),
            ref_body_pos=rng.normal(size=(B, Bt, 2)), ref_body_angle=rng.normal(size=(B, Bt)),
            ref_body_lin_vel=rng.normal(size=(B, Bt, 2)),
            ref_body_ang_vel=rng.normal(size=(B, Bt)),
            root=rng.normal(size=(B, 3)), ref_root=rng.normal(size=(B, 3)),
            ee_force=rng.uniform(0, 3, size=(B, ne)),
            ref_contact_mask=rng.random(size=(B, ne)) > 0.5,
            undesired_count=rng.integers(0, 3, size=B).astype(float),
            action=rng.normal(size=(B, nj)), prev_action=rng.normal(size=(B, nj)),
            q=rng.normal(size=(B, nj)),
            joint_lo=walker.joint_limits[:, 0], joint_hi=walker.joint_limits[:, 1],
            dq_ref=rng.normal(size=(B, nj)),
        )
        _, _, total = reward_terms(RewardConfig(), Stage.GMT, **kw)
        for i in range(B):
            single = {k: (v if k in ("joint_lo", "joint_hi") else v[i])
                      for k, v in kw.items()}
            _, _, ti = reward_terms(RewardConfig(), Stage.GMT, **single)
            assert total[i] == pytest.approx(float(ti), abs=1e-12)

    def test_config_validation(self):
        with pytest.raises(RewardError, match="body_pos_sigma"):
            RewardConfig(body_pos_sigma=0.0)
        with pytest.raises(RewardError, match="contact_force_threshold"):
            RewardConfig(contact_force_threshold=-1.0)
