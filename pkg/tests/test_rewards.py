"""Tests for the composite task reward."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamp.rewards import RewardWeights, compute_task_reward, wrap_angle
from gamp.sim import BipedModel, SimState

MODEL = BipedModel()
W = RewardWeights()


def _state(vx=0.0, cmd=0.0, pitch=0.0, z=None, qd_joints=0.0, prev_action=None):
    q = MODEL.q_default.copy()
    q[1] = MODEL.standing_height if z is None else z
    q[2] = pitch
    qd = np.zeros(9)
    qd[0] = vx
    qd[3:] = qd_joints
    s = SimState(q=q, qd=qd, command=cmd)
    if prev_action is not None:
        s.prev_action = np.asarray(prev_action, float)
    return s


class TestWrapAngle:
    def test_identity_inside_range(self):
        for a in (-3.0, -0.5, 0.0, 1.2, 3.1):
            assert wrap_angle(a) == pytest.approx(a)

    def test_wraps_past_pi(self):
        # a prone torso settles near pitch 4.48, i.e. 4.48 - 2*pi = -1.80
        assert wrap_angle(4.48) == pytest.approx(4.48 - 2 * np.pi)
        assert wrap_angle(-4.48) == pytest.approx(2 * np.pi - 4.48)
        assert wrap_angle(np.pi) == pytest.approx(np.pi)

    @given(st.floats(min_value=-50, max_value=50))
    @settings(max_examples=100, deadline=None)
    def test_period_and_range(self, a):
        w = float(wrap_angle(a))
        assert -np.pi < w <= np.pi + 1e-12
        assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-9)
        assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-9)


class TestTaskReward:
    def test_ideal_step(self):
        # perfect tracking, repeated action, upright, no torque: every
        # exponential is 1 and penalties are 0, so R = w_v + w_s + w_p
        s = _state(vx=0.7, cmd=0.7)
        r, bd = compute_task_reward(s, np.zeros(6), np.zeros(6), W)
        assert r == pytest.approx(W.w_v + W.w_s + W.w_p, abs=1e-12)
        assert bd["r_cmd"] == 1.0 and bd["r_smooth"] == 1.0 and bd["r_posture"] == 1.0
        assert bd["c_energy"] == 0.0 and bd["c_fall"] == 0.0

    def test_one_sigma_velocity_error(self):
        # [DERIVED] exp(-1) when the tracking error equals sigma_v
        s = _state(vx=W.sigma_v, cmd=0.0)
        _, bd = compute_task_reward(s, np.zeros(6), np.zeros(6), W)
        assert bd["r_cmd"] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_one_sigma_pitch(self):
        s = _state(pitch=W.sigma_p)
        _, bd = compute_task_reward(s, np.zeros(6), np.zeros(6), W)
        assert bd["r_posture"] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_pitch_wrapped_for_posture(self):
        # tumbled past pi: equivalent wrapped angle decides the penalty
        a = _state(pitch=4.48)
        b = _state(pitch=4.48 - 2 * np.pi)
        _, bda = compute_task_reward(a, np.zeros(6), np.zeros(6), W)
        _, bdb = compute_task_reward(b, np.zeros(6), np.zeros(6), W)
        assert bda["r_posture"] == pytest.approx(bdb["r_posture"], abs=1e-12)

    def test_smoothness_penalizes_action_change(self):
        s = _state(prev_action=np.zeros(6))
        a = np.full(6, 0.5)
        _, bd = compute_task_reward(s, a, np.zeros(6), W)
        assert bd["r_smooth"] == pytest.approx(np.exp(-float(a @ a)), abs=1e-12)

    def test_energy_cost(self):
        # [DERIVED] sum |tau_j qd_j| * scale: 6 joints at 10 N*m, 2 rad/s
        s = _state(qd_joints=2.0)
        _, bd = compute_task_reward(s, np.zeros(6), np.full(6, 10.0), W)
        assert bd["c_energy"] == pytest.approx(120.0 * W.energy_scale, abs=1e-12)

    def test_fall_indicator(self):
        low = _state(z=W.h_fall - 0.01)
        high = _state(z=W.h_fall + 0.01)
        r_low, bd_low = compute_task_reward(low, np.zeros(6), np.zeros(6), W)
        _, bd_high = compute_task_reward(high, np.zeros(6), np.zeros(6), W)
        assert bd_low["c_fall"] == 1.0 and bd_high["c_fall"] == 0.0
        # the indicator enters with weight -w_f
        r_ref, _ = compute_task_reward(
            _state(z=W.h_fall + 0.01, pitch=low.q[2]), np.zeros(6), np.zeros(6), W
        )
        assert r_low == pytest.approx(r_ref - W.w_f, abs=1e-12)

    def test_breakdown_sums_to_total(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = _state(
                vx=rng.normal(),
                cmd=rng.normal(),
                pitch=rng.normal() * 3,
                z=rng.uniform(0.1, 1.2),
                qd_joints=rng.normal(size=6),
                prev_action=rng.normal(size=6),
            )
            r, bd = compute_task_reward(s, rng.normal(size=6), rng.normal(size=6), W)
            recon = (
                W.w_v * bd["r_cmd"]
                + W.w_s * bd["r_smooth"]
                + W.w_p * bd["r_posture"]
                - W.w_e * bd["c_energy"]
                - W.w_f * bd["c_fall"]
            )
            assert r == pytest.approx(recon, abs=1e-12)
            assert r == bd["total"]

    def test_term_ranges(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = _state(vx=rng.normal(), cmd=rng.normal(), pitch=rng.normal() * 4)
            _, bd = compute_task_reward(s, rng.normal(size=6), rng.normal(size=6), W)
            for k in ("r_cmd", "r_smooth", "r_posture"):
                assert 0.0 < bd[k] <= 1.0
            assert bd["c_energy"] >= 0.0
            assert bd["c_fall"] in (0.0, 1.0)

    def test_maximized_at_perfect_tracking(self):
        # scan a grid: the tracking term peaks exactly at v_x = v_cmd
        vals = []
        for vx in np.linspace(-1.0, 2.0, 61):
            s = _state(vx=vx, cmd=0.5)
            _, bd = compute_task_reward(s, np.zeros(6), np.zeros(6), W)
            vals.append(bd["r_cmd"])
        assert np.argmax(vals) == 30

    def test_bad_weights_rejected(self):
        with pytest.raises(ValueError, match="sigma_v"):
            RewardWeights(sigma_v=0.0)
        with pytest.raises(ValueError, match="w_f"):
            RewardWeights(w_f=-1.0)


class TestRecScales:
    def test_default_scales_are_identity(self):
        s = _state(vx=0.7, cmd=0.7, prev_action=np.ones(6) * 0.1)
        a = np.ones(6) * 0.1
        base, _ = compute_task_reward(s, a, np.zeros(6), W)
        fallen, _ = compute_task_reward(s, a, np.zeros(6), W, fallen=True)
        assert fallen == pytest.approx(base, abs=1e-15)

    def test_zero_scales_drop_cmd_and_smooth(self):
        # [DERIVED] with both scales 0 the fallen reward keeps only the
        # posture, energy and fall terms
        w = RewardWeights(rec_cmd_scale=0.0, rec_smooth_scale=0.0)
        s = _state(vx=0.0, cmd=0.0)
        total, bd = compute_task_reward(s, np.zeros(6), np.zeros(6), w, fallen=True)
        expected = w.w_p * bd["r_posture"] - w.w_e * bd["c_energy"] - w.w_f * bd["c_fall"]
        assert total == pytest.approx(expected, abs=1e-15)
        upright, _ = compute_task_reward(s, np.zeros(6), np.zeros(6), w, fallen=False)
        assert upright > total

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError, match="rec_cmd_scale"):
            RewardWeights(rec_cmd_scale=-0.5)
