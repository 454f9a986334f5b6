"""Tests for the PPO core: policy head, GAE, updates, rollout collection."""

import numpy as np
import pytest

from gamp.amp import DiscriminatorPair, GateConfig, Mode, gate
from gamp.ppo import (
    LOG2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    EnvConfig,
    PolicyHead,
    PpoConfig,
    PpoState,
    RolloutBuffer,
    VecBiped,
    collect_rollout,
    compute_gae,
    gaussian_log_prob,
    policy_act,
    ppo_update,
)
from gamp.sim import N_JOINTS, OBS_DIM

SMALL = PpoConfig(horizon=8, n_envs=4, hidden=(32, 32), epochs=2, minibatches=2)


def _state(seed=0, cfg=SMALL):
    return PpoState.create(np.random.default_rng(seed), cfg)


def _rollout(seed=0, cfg=SMALL, episode_len=500):
    env = VecBiped(EnvConfig(), cfg.n_envs, episode_len, seed)
    state = _state(seed, cfg)
    pair = DiscriminatorPair.create(np.random.default_rng(seed + 1), hidden=(16, 16))
    buf = collect_rollout(env, state, pair, cfg, np.random.default_rng(seed + 2))
    return env, state, buf


class TestPolicyAct:
    def test_deterministic_repeats(self):
        state = _state()
        obs = np.random.default_rng(1).normal(size=OBS_DIM)
        a1, lp1, v1, _ = policy_act(state, obs, None)
        a2, lp2, v2, _ = policy_act(state, obs, None)
        np.testing.assert_array_equal(a1, a2)
        assert lp1 == lp2 and v1 == v2

    def test_log_prob_of_mean(self):
        # [DERIVED] Gaussian density at its mean: -sum log(sigma sqrt(2 pi))
        state = _state()
        obs = np.random.default_rng(2).normal(size=OBS_DIM)
        _, lp, _, _ = policy_act(state, obs, None)
        expected = -np.sum(state.policy.log_std) - 0.5 * N_JOINTS * LOG2PI
        assert lp == pytest.approx(expected, abs=1e-12)

    def test_zero_weight_policy_mean_zero(self):
        state = _state()
        for w in state.policy.mean.weights:
            w[...] = 0.0
        for b in state.policy.mean.biases:
            b[...] = 0.0
        a, _, _, raw = policy_act(state, np.ones(OBS_DIM), None)
        np.testing.assert_array_equal(a, np.zeros(N_JOINTS))
        np.testing.assert_array_equal(raw, np.zeros(N_JOINTS))

    def test_action_clamped_raw_not(self):
        state = _state()
        state.policy.log_std[...] = LOG_STD_MAX  # wide sampling
        obs = np.zeros(OBS_DIM)
        rng = np.random.default_rng(3)
        saw_clamp = False
        for _ in range(20):
            a, lp, _, raw = policy_act(state, obs, rng)
            assert np.all(np.abs(a) <= 1.0)
            if np.any(np.abs(raw) > 1.0):
                saw_clamp = True
                # log-prob belongs to the raw pre-clamp sample
                mean = np.zeros(N_JOINTS)
                assert lp == pytest.approx(
                    float(gaussian_log_prob(mean, state.policy.log_std, raw)), abs=1e-9
                )
        assert saw_clamp

    def test_batched(self):
        state = _state()
        obs = np.random.default_rng(4).normal(size=(5, OBS_DIM))
        a, lp, v, raw = policy_act(state, obs, None)
        assert a.shape == (5, N_JOINTS) and lp.shape == (5,) and v.shape == (5,)


def _gae_oracle(r, v, d, boot, gamma, lam):
    T = len(r)
    adv = np.zeros(T)
    vs = list(v) + [boot]
    for t in range(T):
        acc, coef = 0.0, 1.0
        for k in range(t, T):
            delta = r[k] + gamma * vs[k + 1] * (1 - d[k]) - vs[k]
            acc += coef * delta
            coef *= gamma * lam * (1 - d[k])
            if d[k]:
                break
        adv[t] = acc
    return adv


class TestGae:
    def test_zero_rewards_zero_values(self):
        adv, ret = compute_gae(np.zeros(10), np.zeros(10), np.zeros(10), 0.0, 0.99, 0.95)
        np.testing.assert_array_equal(adv, 0.0)
        np.testing.assert_array_equal(ret, 0.0)

    def test_single_step_hand_value(self):
        # [DERIVED] A = r + gamma V' - V = 1 + 0.99 * 0.5 = 1.495
        adv, ret = compute_gae(np.array([1.0]), np.array([0.0]), np.array([0.0]), 0.5, 0.99, 0.95)
        assert adv[0] == pytest.approx(1.495, abs=1e-12)
        assert ret[0] == pytest.approx(1.495, abs=1e-12)

    def test_gamma_zero_degenerates(self):
        rng = np.random.default_rng(5)
        r, v = rng.normal(size=16), rng.normal(size=16)
        adv, _ = compute_gae(r, v, np.zeros(16), rng.normal(), 0.0, 0.95)
        np.testing.assert_allclose(adv, r - v, atol=1e-14)

    def test_against_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(1000):
            T = int(rng.integers(1, 65))
            r = rng.normal(size=T)
            v = rng.normal(size=T)
            d = (rng.random(T) < 0.1).astype(float)
            boot = rng.normal()
            gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)
            adv, ret = compute_gae(r, v, d, boot, gamma, lam)
            oracle = _gae_oracle(r, v, d, boot, gamma, lam)
            worst = max(worst, float(np.max(np.abs(adv - oracle))))
            np.testing.assert_allclose(ret, adv + v, atol=1e-12)
        assert worst < 1e-10

    def test_two_dim_matches_columns(self):
        rng = np.random.default_rng(7)
        r = rng.normal(size=(20, 3))
        v = rng.normal(size=(20, 3))
        d = (rng.random((20, 3)) < 0.1).astype(float)
        boot = rng.normal(size=3)
        adv, _ = compute_gae(r, v, d, boot, 0.99, 0.95)
        for j in range(3):
            col, _ = compute_gae(r[:, j], v[:, j], d[:, j], boot[j], 0.99, 0.95)
            np.testing.assert_allclose(adv[:, j], col, atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            compute_gae(np.zeros(5), np.zeros(4), np.zeros(5), 0.0, 0.99, 0.95)


class TestRollout:
    def test_buffer_filled_and_finite(self):
        _, _, buf = _rollout()
        T, N = SMALL.horizon, SMALL.n_envs
        assert buf.obs.shape == (T, N, OBS_DIM)
        for arr in (buf.obs, buf.actions_raw, buf.log_probs, buf.values,
                    buf.task_rewards, buf.style_rewards, buf.total_rewards,
                    buf.g_z, buf.v_hat, buf.feat_t, buf.feat_t1, buf.bootstrap_value):
            assert np.all(np.isfinite(arr))

    def test_mode_matches_gate_everywhere(self):
        _, _, buf = _rollout(seed=3)
        cfg = GateConfig()
        for t in range(buf.g_z.shape[0]):
            for i in range(buf.g_z.shape[1]):
                assert buf.rec_mask[t, i] == (gate(buf.g_z[t, i], cfg) is Mode.REC)

    def test_total_reward_composition(self):
        _, _, buf = _rollout(seed=4)
        np.testing.assert_allclose(
            buf.total_rewards, buf.task_rewards + 0.5 * buf.style_rewards, atol=1e-12
        )

    def test_v_hat_range_and_style_positive(self):
        _, _, buf = _rollout(seed=5)
        assert np.all((buf.v_hat >= 0.0) & (buf.v_hat <= 1.0))
        assert np.all(buf.style_rewards >= 0.0)

    def test_prone_start_gates_rec(self):
        env = VecBiped(EnvConfig(), 4, 500, 11)
        for i in range(env.n):
            env.q[i, 2] = 1.45  # force a lying pitch
            env.qd[i] = 0.0
        state = _state(11)
        pair = DiscriminatorPair.create(np.random.default_rng(12), hidden=(8,))
        cfg = PpoConfig(horizon=1, n_envs=4, hidden=(32, 32))
        buf = collect_rollout(env, state, pair, cfg, np.random.default_rng(13))
        assert np.all(buf.rec_mask[0])

    def test_episode_termination_counts(self):
        cfg = PpoConfig(horizon=12, n_envs=4, hidden=(16, 16), epochs=1, minibatches=1)
        env = VecBiped(EnvConfig(), cfg.n_envs, 5, 21)
        state = _state(21, cfg)
        pair = DiscriminatorPair.create(np.random.default_rng(22), hidden=(8,))
        buf = collect_rollout(env, state, pair, cfg, np.random.default_rng(23))
        # every env completes its 5-step episode at least twice in 12 steps
        assert buf.episodes_completed >= 2 * cfg.n_envs
        assert buf.dones.sum() == buf.episodes_completed

    def test_collection_deterministic(self):
        _, _, a = _rollout(seed=9)
        _, _, b = _rollout(seed=9)
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.actions_raw, b.actions_raw)
        np.testing.assert_array_equal(a.total_rewards, b.total_rewards)
        np.testing.assert_array_equal(a.dones, b.dones)


class TestPpoUpdate:
    def test_first_pass_surrogate_near_zero(self):
        # with unchanged parameters the ratio is exactly 1, so the surrogate
        # equals the mean normalized advantage, which is ~0 by construction
        cfg = PpoConfig(horizon=8, n_envs=4, hidden=(32, 32), epochs=1, minibatches=1, lr=0.0)
        env = VecBiped(EnvConfig(), cfg.n_envs, 500, 31)
        state = _state(31, cfg)
        pair = DiscriminatorPair.create(np.random.default_rng(32), hidden=(8,))
        buf = collect_rollout(env, state, pair, cfg, np.random.default_rng(33))
        stats = ppo_update(state, buf, cfg, np.random.default_rng(34))
        assert abs(stats["policy_loss"]) < 1e-9
        assert abs(stats["approx_kl"]) < 1e-12
        assert stats["clip_frac"] == 0.0

    def test_entropy_closed_form(self):
        _, state, buf = _rollout(seed=41)
        stats = ppo_update(state, buf, SMALL, np.random.default_rng(42))
        # [DERIVED] Gaussian entropy with all sigma = 0.8 (log-std barely
        # moves in two epochs): 6 * (0.5 log(2 pi e) + log 0.8)
        expected = N_JOINTS * (0.5 * np.log(2 * np.pi * np.e) + np.log(0.8))
        assert stats["entropy"] == pytest.approx(expected, abs=1e-2)

    def test_stat_ranges(self):
        _, state, buf = _rollout(seed=43)
        stats = ppo_update(state, buf, SMALL, np.random.default_rng(44))
        assert 0.0 <= stats["clip_frac"] <= 1.0
        assert stats["approx_kl"] > -1e-3
        assert np.isfinite(stats["policy_loss"]) and np.isfinite(stats["value_loss"])

    def test_log_std_stays_clamped(self):
        _, state, buf = _rollout(seed=45)
        for _ in range(3):
            ppo_update(state, buf, SMALL, np.random.default_rng(46))
        assert np.all(state.policy.log_std >= LOG_STD_MIN)
        assert np.all(state.policy.log_std <= LOG_STD_MAX)

    def test_update_deterministic(self):
        outs = []
        for _ in range(2):
            _, state, buf = _rollout(seed=47)
            stats = ppo_update(state, buf, SMALL, np.random.default_rng(48))
            outs.append((stats, [w.copy() for w in state.policy.mean.weights]))
        assert outs[0][0] == outs[1][0]
        for a, b in zip(outs[0][1], outs[1][1]):
            np.testing.assert_array_equal(a, b)

    def test_value_regression_improves(self):
        # repeated updates on a fixed buffer drive the value loss down
        cfg = PpoConfig(horizon=8, n_envs=4, hidden=(32, 32), epochs=1, minibatches=1, lr=1e-3)
        env = VecBiped(EnvConfig(), cfg.n_envs, 500, 51)
        state = _state(51, cfg)
        pair = DiscriminatorPair.create(np.random.default_rng(52), hidden=(8,))
        buf = collect_rollout(env, state, pair, cfg, np.random.default_rng(53))
        losses = [ppo_update(state, buf, cfg, np.random.default_rng(54))["value_loss"]
                  for _ in range(30)]
        assert losses[-1] < losses[0]

    def test_config_validation(self):
        with pytest.raises(ValueError, match="gamma"):
            PpoConfig(gamma=1.5)
        with pytest.raises(ValueError, match="clip_ratio"):
            PpoConfig(clip_ratio=0.0)
