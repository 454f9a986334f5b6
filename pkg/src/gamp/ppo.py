"""PPO with GAE over a vectorized biped environment.

Rollout collection wires the simulator, the task reward, and the gated style
reward together per control step; updates use the manual-gradient MLP core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rewards as rw
from .amp import (
    AmpConfig,
    DiscriminatorPair,
    GateConfig,
    Mode,
    RunningNorm,
    gate,
    normalize_command,
    style_reward_batch,
    total_reward,
)
from .clips import features_from_state
from .nets import (
    AdamState,
    MlpParams,
    ScalarAdam,
    adam_step,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .sim import (
    N_JOINTS,
    N_Q,
    OBS_DIM,
    OBS_FRAME_DIM,
    OBS_HISTORY,
    BipedModel,
    SimState,
    make_obs_frame,
    reset,
    step_batch,
)

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    vf_coef: float = 0.5
    ent_coef: float = 0.005
    lr: float = 3e-4
    max_grad_norm: float = 1.0
    horizon: int = 64
    n_envs: int = 64
    hidden: tuple = (128, 128, 64)
    init_std: float = 0.8
    episode_len: int = 500

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        if self.horizon < 1 or self.n_envs < 1:
            raise ValueError("horizon and n_envs must be positive")


@dataclass
class PolicyHead:
    mean: MlpParams
    log_std: np.ndarray  # one learnable entry per action dimension

    @staticmethod
    def create(rng: np.random.Generator, cfg: PpoConfig) -> "PolicyHead":
        mean = init_mlp(
            [OBS_DIM, *cfg.hidden, N_JOINTS], rng, "elu", "identity", output_scale=0.01
        )
        return PolicyHead(mean, np.full(N_JOINTS, np.log(cfg.init_std)))


@dataclass
class PpoState:
    policy: PolicyHead
    value: MlpParams
    adam_policy: AdamState
    adam_value: AdamState
    adam_log_std: ScalarAdam

    @staticmethod
    def create(rng: np.random.Generator, cfg: PpoConfig) -> "PpoState":
        policy = PolicyHead.create(rng, cfg)
        value = init_mlp([OBS_DIM, *cfg.hidden, 1], rng, "elu", "identity")
        return PpoState(
            policy,
            value,
            AdamState.for_params(policy.mean, lr=cfg.lr),
            AdamState.for_params(value, lr=cfg.lr),
            ScalarAdam.for_shape(N_JOINTS, lr=cfg.lr),
        )


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, a: np.ndarray) -> np.ndarray:
    z = (a - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * a.shape[-1] * LOG2PI


def policy_act(
    state: PpoState, obs: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample actions (mean when ``rng`` is None).

    Returns (clamped action, log-prob of the raw sample, value, raw sample);
    the log-prob is taken before the [-1, 1] clamp and the raw sample is what
    PPO ratios are computed against.
    """
    obs = np.asarray(obs, dtype=float)
    mean = mlp_forward(state.policy.mean, obs)
    if not np.all(np.isfinite(mean)):
        raise FloatingPointError("non-finite policy output")
    if rng is None:
        raw = mean.copy()
    else:
        raw = mean + np.exp(state.policy.log_std) * rng.standard_normal(mean.shape)
    log_prob = gaussian_log_prob(mean, state.policy.log_std, raw)
    value = mlp_forward(state.value, obs)[..., 0]
    return np.clip(raw, -1.0, 1.0), log_prob, value, raw


def compute_gae(
    rewards_seq: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE over a (T,) or (T, N) sequence; returns (advantages, returns).

    delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t;
    A_t = delta_t + gamma lam (1 - done_t) A_{t+1}.
    """
    r = np.asarray(rewards_seq, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if r.shape != v.shape or r.shape != d.shape:
        raise ValueError(f"shape mismatch: rewards {r.shape}, values {v.shape}, dones {d.shape}")
    T = r.shape[0]
    adv = np.zeros_like(r)
    next_v = np.asarray(bootstrap_value, dtype=float)
    gae = np.zeros_like(next_v)
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - d[t]
        delta = r[t] + gamma * next_v * not_done - v[t]
        gae = delta + gamma * lam * not_done * gae
        adv[t] = gae
        next_v = v[t]
    return adv, adv + v


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, N, 88)
    actions_raw: np.ndarray  # (T, N, 6), pre-clamp samples
    log_probs: np.ndarray  # (T, N)
    values: np.ndarray  # (T, N)
    task_rewards: np.ndarray  # (T, N)
    style_rewards: np.ndarray  # (T, N)
    total_rewards: np.ndarray  # (T, N)
    rec_mask: np.ndarray  # (T, N) bool: transition scored by D_rec
    g_z: np.ndarray  # (T, N) gravity z at s_t
    v_hat: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N)
    feat_t: np.ndarray  # (T, N, 20)
    feat_t1: np.ndarray  # (T, N, 20)
    bootstrap_value: np.ndarray  # (N,)
    episodes_completed: int = 0
    integration_errors: int = 0
    tracking_error_sum: float = 0.0

    @staticmethod
    def allocate(T: int, N: int) -> "RolloutBuffer":
        return RolloutBuffer(
            obs=np.zeros((T, N, OBS_DIM)),
            actions_raw=np.zeros((T, N, N_JOINTS)),
            log_probs=np.zeros((T, N)),
            values=np.zeros((T, N)),
            task_rewards=np.zeros((T, N)),
            style_rewards=np.zeros((T, N)),
            total_rewards=np.zeros((T, N)),
            rec_mask=np.zeros((T, N), dtype=bool),
            g_z=np.zeros((T, N)),
            v_hat=np.zeros((T, N)),
            dones=np.zeros((T, N)),
            feat_t=np.zeros((T, N, 20)),
            feat_t1=np.zeros((T, N, 20)),
            bootstrap_value=np.zeros(N),
        )

    def mean_tracking_error(self) -> float:
        return self.tracking_error_sum / self.task_rewards.size


NORMAL_CMD_RANGE = (-0.5, 1.0)
FAST_CMD_RANGE = (-1.5, 3.0)
FAST_CMD_PROB = 0.3
INIT_MODE_PROBS = (0.6, 0.2, 0.2)  # upright, prone, supine


@dataclass
class EnvConfig:
    model: BipedModel = field(default_factory=BipedModel)
    weights: rw.RewardWeights = field(default_factory=rw.RewardWeights)
    amp: AmpConfig = field(default_factory=AmpConfig)
    gate: GateConfig = field(default_factory=GateConfig)


class VecBiped:
    """N independent biped environments stepped through one batched kernel.

    Per-env random streams are seeded seed * 10007 + index so resets are
    independent of the other envs' histories.
    """

    def __init__(
        self,
        cfg: EnvConfig,
        n_envs: int,
        episode_len: int,
        seed: int,
        rsi_pool: tuple[np.ndarray, np.ndarray] | None = None,
        rsi_prob: float = 0.0,
    ):
        self.cfg = cfg
        self.n = n_envs
        self.episode_len = episode_len
        if not 0.0 <= rsi_prob <= 1.0:
            raise ValueError(f"rsi_prob {rsi_prob} outside [0, 1]")
        if rsi_prob > 0.0 and rsi_pool is None:
            raise ValueError("rsi_prob > 0 requires a reset pool")
        self.rsi_pool = rsi_pool
        self.rsi_prob = rsi_prob
        self.rngs = [np.random.default_rng(seed * 10007 + i) for i in range(n_envs)]
        self.q = np.zeros((n_envs, N_Q))
        self.qd = np.zeros((n_envs, N_Q))
        self.prev_action = np.zeros((n_envs, N_JOINTS))
        self.command = np.zeros(n_envs)
        self.v_hat = np.zeros(n_envs)
        self.steps = np.zeros(n_envs, dtype=int)
        self.hist = np.zeros((n_envs, OBS_HISTORY, OBS_FRAME_DIM))
        self.obs_norm = RunningNorm(OBS_DIM)
        for i in range(n_envs):
            self.reset_env(i)

    def _sample_command(self, rng: np.random.Generator) -> float:
        lo, hi = FAST_CMD_RANGE if rng.random() < FAST_CMD_PROB else NORMAL_CMD_RANGE
        return float(rng.uniform(lo, hi))

    def reset_env(self, i: int) -> None:
        rng = self.rngs[i]
        cmd = self._sample_command(rng)
        if self.rsi_prob > 0.0 and rng.random() < self.rsi_prob:
            qs, qds = self.rsi_pool
            k = int(rng.integers(len(qs)))
            self.q[i] = qs[k]
            self.q[i, 0] = 0.0
            self.q[i, 3:] += rng.uniform(-0.05, 0.05, size=N_JOINTS)
            self.qd[i] = qds[k]
        else:
            mode = ("upright", "prone", "supine")[
                int(rng.choice(3, p=INIT_MODE_PROBS))
            ]
            state = reset(self.cfg.model, mode, cmd, rng)
            self.q[i] = state.q
            self.qd[i] = state.qd
        self.prev_action[i] = 0.0
        self.command[i] = cmd
        self.v_hat[i] = normalize_command(cmd, self.cfg.amp.v_max)
        self.steps[i] = 0
        frame = make_obs_frame(self.cfg.model, self._state(i))
        self.hist[i, :] = frame

    def _state(self, i: int) -> SimState:
        return SimState(
            q=self.q[i],
            qd=self.qd[i],
            command=float(self.command[i]),
            prev_action=self.prev_action[i],
        )

    def raw_observations(self) -> np.ndarray:
        return self.hist.reshape(self.n, OBS_DIM).copy()

    def observations(self) -> np.ndarray:
        return self.obs_norm.normalize(self.raw_observations())

    def step(self, actions_raw: np.ndarray, rec_mask: np.ndarray | None = None):
        """Apply clamped actions, integrate, reward, auto-reset.

        Returns (task rewards, dones, torques, blown-up mask); features of
        the pre/post states are the caller's job (it holds the buffer).
        ``rec_mask`` marks recovery-gated envs for the reward's rec scales.
        """
        model = self.cfg.model
        a = np.clip(actions_raw, -1.0, 1.0)
        targets = model.q_default[3:] + model.action_scale * a
        tau, _, _ = step_batch(model, self.q, self.qd, targets, model.n_substeps)

        blown = ~(
            np.all(np.isfinite(self.q), axis=1) & np.all(np.isfinite(self.qd), axis=1)
        )
        task = np.zeros(self.n)
        dones = np.zeros(self.n)
        for i in range(self.n):
            if blown[i]:
                dones[i] = 1.0
                continue
            task[i], _ = rw.compute_task_reward(
                self._state(i), a[i], tau[i], self.cfg.weights,
                fallen=bool(rec_mask[i]) if rec_mask is not None else False,
            )
        self.prev_action = a.copy()
        self.steps += 1
        done_mask = blown | (self.steps >= self.episode_len)
        dones[done_mask] = 1.0

        # roll observation history before any resets overwrite it
        ok = ~blown
        self.hist[:, :-1] = self.hist[:, 1:]
        for i in range(self.n):
            if ok[i]:
                self.hist[i, -1] = make_obs_frame(model, self._state(i))
        return task, dones, tau, blown

    def post_step_reset(self, dones: np.ndarray) -> int:
        completed = 0
        for i in range(self.n):
            if dones[i]:
                completed += 1
                self.reset_env(i)
        return completed


def collect_rollout(
    env: VecBiped,
    state: PpoState,
    pair: DiscriminatorPair,
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> RolloutBuffer:
    """Fill a horizon of transitions; style rewards use the discriminator
    snapshot passed in (not refreshed mid-rollout)."""
    T, N = cfg.horizon, env.n
    buf = RolloutBuffer.allocate(T, N)
    gate_cfg = env.cfg.gate
    lam_amp = env.cfg.amp.lambda_amp
    model = env.cfg.model
    for t in range(T):
        env.obs_norm.update(env.raw_observations())
        obs = env.observations()
        action, log_prob, value, raw = policy_act(state, obs, rng)
        feat_t = features_from_state(model, env.q, env.qd)
        g_z = feat_t[:, 1]
        v_hat = env.v_hat.copy()
        rec = np.array([gate(g, gate_cfg) is Mode.REC for g in g_z])

        task, dones, _, blown = env.step(raw, rec_mask=rec)
        feat_t1 = features_from_state(model, env.q, env.qd)
        style = np.zeros(N)
        valid = ~blown
        if valid.any():
            style[valid] = style_reward_batch(
                pair, feat_t[valid], feat_t1[valid], rec[valid], v_hat[valid]
            )
        buf.tracking_error_sum += float(
            np.sum(np.abs(np.where(valid, env.qd[:, 0], 0.0) - env.command))
        )

        buf.obs[t] = obs
        buf.actions_raw[t] = raw
        buf.log_probs[t] = log_prob
        buf.values[t] = value
        buf.task_rewards[t] = task
        buf.style_rewards[t] = style
        buf.total_rewards[t] = total_reward(task, style, lam_amp)
        buf.rec_mask[t] = rec
        buf.g_z[t] = g_z
        buf.v_hat[t] = v_hat
        buf.dones[t] = dones
        buf.feat_t[t] = feat_t
        buf.feat_t1[t] = np.where(valid[:, None], feat_t1, feat_t)
        buf.integration_errors += int(blown.sum())
        buf.episodes_completed += env.post_step_reset(dones)

    _, _, boot, _ = policy_act(state, env.observations(), None)
    buf.bootstrap_value = boot
    return buf


def _clip_by_norm(grads, extra: np.ndarray | None, max_norm: float) -> float:
    sq = sum(float(np.sum(g * g)) for g in grads.weights + grads.biases)
    if extra is not None:
        sq += float(np.sum(extra * extra))
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        scale = max_norm / norm
        grads.scale_(scale)
        if extra is not None:
            extra *= scale
    return norm


def ppo_update(
    state: PpoState, buf: RolloutBuffer, cfg: PpoConfig, rng: np.random.Generator
) -> dict:
    """Clipped-surrogate update over shuffled minibatches; returns mean
    losses, entropy, approximate KL, and clip fraction."""
    adv, ret = compute_gae(
        buf.total_rewards, buf.values, buf.dones, buf.bootstrap_value, cfg.gamma, cfg.lam
    )
    B = adv.size
    obs = buf.obs.reshape(B, -1)
    acts = buf.actions_raw.reshape(B, N_JOINTS)
    logp_old = buf.log_probs.reshape(B)
    adv = adv.reshape(B)
    ret = ret.reshape(B)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0, "clip_frac": 0.0}
    passes = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(B)
        for idx in np.array_split(perm, cfg.minibatches):
            M = len(idx)
            o, a = obs[idx], acts[idx]
            A, R, lp_old = adv[idx], ret[idx], logp_old[idx]

            mean = mlp_forward(state.policy.mean, o)
            log_std = state.policy.log_std
            std = np.exp(log_std)
            z = (a - mean) / std
            logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * N_JOINTS * LOG2PI
            ratio = np.exp(logp - lp_old)
            surr1 = ratio * A
            surr2 = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * A
            policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
            entropy = float(np.sum(log_std) + 0.5 * N_JOINTS * (1.0 + LOG2PI))

            # d policy_loss / d logp: active only where the unclipped branch
            # attains the minimum
            active = surr1 <= surr2
            dlogp = -(A * ratio * active) / M
            dmean = dlogp[:, None] * (z / std)
            dlog_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) - cfg.ent_coef

            v = mlp_forward(state.value, o)[:, 0]
            value_loss = float(np.mean((v - R) ** 2))
            dv = cfg.vf_coef * 2.0 * (v - R)[:, None] / M

            loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite PPO loss (policy={policy_loss}, value={value_loss}, "
                    f"minibatch size {M})"
                )

            pg, _ = mlp_backward(state.policy.mean, o, dmean)
            vg, _ = mlp_backward(state.value, o, dv)
            _clip_by_norm(pg, dlog_std, cfg.max_grad_norm)
            _clip_by_norm(vg, None, cfg.max_grad_norm)
            adam_step(state.policy.mean, pg, state.adam_policy)
            adam_step(state.value, vg, state.adam_value)
            state.adam_log_std.update(state.policy.log_std, dlog_std)
            np.clip(state.policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=state.policy.log_std)

            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["entropy"] += entropy
            stats["approx_kl"] += float(np.mean(lp_old - logp))
            stats["clip_frac"] += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio))
            passes += 1
    for k in stats:
        stats[k] /= passes
    return stats
