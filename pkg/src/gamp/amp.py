"""State-gated adversarial style rewards.

A fixed threshold on the body-frame gravity z-component routes every training
transition to one of two discriminators: a recovery discriminator over bare
feature pairs, and a locomotion discriminator that also receives the
normalized velocity command. The selected discriminator's output feeds the
-log(1 - D) style reward; the gate exists only at training time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .clips import FEATURE_DIM, MotionClip, sample_reference_loco, sample_transition
from .nets import (
    AdamState,
    MlpParams,
    adam_step,
    init_mlp,
    input_grad_penalty_backward,
    mlp_backward,
    mlp_forward,
)

REC_INPUT_DIM = 2 * FEATURE_DIM  # 40
LOCO_INPUT_DIM = REC_INPUT_DIM + 1  # 41


class Mode(enum.Enum):
    REC = "rec"
    LOCO = "loco"


@dataclass(frozen=True)
class GateConfig:
    threshold: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.threshold < 2.0:
            raise ValueError(f"gate threshold must be in (0, 2), got {self.threshold}")


@dataclass(frozen=True)
class AmpConfig:
    lambda_amp: float = 0.5
    v_max: float = 3.0

    def __post_init__(self):
        if self.lambda_amp < 0:
            raise ValueError("lambda_amp must be non-negative")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")


_gate_calls = 0


def gate_call_count() -> int:
    """Number of gate evaluations since the last reset. Inference code paths
    must leave this untouched; tests assert on it."""
    return _gate_calls


def reset_gate_call_count() -> None:
    global _gate_calls
    _gate_calls = 0


def gate(g_z: float, cfg: GateConfig) -> Mode:
    """Recovery iff |g_z + 1| strictly exceeds the threshold.

    Upright gives g_z = -1 (|0| fails the strict test, so locomotion); lying
    flat gives g_z near 0 (recovery).
    """
    global _gate_calls
    _gate_calls += 1
    return Mode.REC if abs(g_z + 1.0) > cfg.threshold else Mode.LOCO


def normalize_command(v_cmd: float, v_max: float) -> float:
    """v_hat = clamp(v_cmd / v_max, 0, 1); backward commands clamp to 0."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    return float(min(max(v_cmd / v_max, 0.0), 1.0))


@dataclass
class RunningNorm:
    """Streaming mean/variance (Welford), identity until first update."""

    dim: int
    count: float = 0.0
    mean: np.ndarray = None
    m2: np.ndarray = None

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.m2 is None:
            self.m2 = np.zeros(self.dim)

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        if n == 0:
            return
        batch_mean = x.mean(axis=0)
        batch_m2 = ((x - batch_mean) ** 2).sum(axis=0)
        delta = batch_mean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * n / tot
        self.m2 = self.m2 + batch_m2 + delta**2 * self.count * n / tot
        self.count = tot

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self.m2 / self.count

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.count < 2:
            return np.asarray(x, dtype=float).copy()
        return (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.variance() + 1e-8)


@dataclass
class DiscriminatorPair:
    rec: MlpParams
    loco: MlpParams
    norm: RunningNorm
    lambda_gp: float = 10.0
    eps: float = 1e-4
    adam_rec: AdamState = None
    adam_loco: AdamState = None

    def __post_init__(self):
        if self.rec.layer_dims[0] != REC_INPUT_DIM:
            raise ValueError(f"recovery discriminator input must be {REC_INPUT_DIM}")
        if self.loco.layer_dims[0] != LOCO_INPUT_DIM:
            raise ValueError(f"locomotion discriminator input must be {LOCO_INPUT_DIM}")
        if not 0.0 < self.eps <= 0.01:
            raise ValueError(f"eps must be in (0, 0.01], got {self.eps}")
        if self.adam_rec is None:
            self.adam_rec = AdamState.for_params(self.rec, lr=3e-4)
        if self.adam_loco is None:
            self.adam_loco = AdamState.for_params(self.loco, lr=3e-4)

    @staticmethod
    def create(
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (128, 128),
        lambda_gp: float = 10.0,
        eps: float = 1e-4,
        lr: float = 3e-4,
    ) -> "DiscriminatorPair":
        rec = init_mlp([REC_INPUT_DIM, *hidden, 1], rng, "tanh", "sigmoid")
        loco = init_mlp([LOCO_INPUT_DIM, *hidden, 1], rng, "tanh", "sigmoid")
        pair = DiscriminatorPair(
            rec, loco, RunningNorm(REC_INPUT_DIM), lambda_gp=lambda_gp, eps=eps
        )
        pair.adam_rec = AdamState.for_params(rec, lr=lr)
        pair.adam_loco = AdamState.for_params(loco, lr=lr)
        return pair


def _pair_input(pair: DiscriminatorPair, feat_t, feat_t1) -> np.ndarray:
    x = np.concatenate([np.asarray(feat_t, float), np.asarray(feat_t1, float)], axis=-1)
    return pair.norm.normalize(x)


def style_reward(
    pair: DiscriminatorPair, feat_t, feat_t1, mode: Mode, v_hat: float | None = None
) -> float:
    """-log(1 - D) under the discriminator selected by ``mode``, with D
    clamped to [eps, 1-eps]."""
    if mode is Mode.LOCO and v_hat is None:
        raise ValueError("locomotion style reward requires a condition v_hat")
    if mode is Mode.REC and v_hat is not None:
        raise ValueError("recovery style reward takes no condition")
    x = _pair_input(pair, feat_t, feat_t1)
    if mode is Mode.LOCO:
        x = np.concatenate([x, [float(v_hat)]])
        d = float(mlp_forward(pair.loco, x)[0])
    else:
        d = float(mlp_forward(pair.rec, x)[0])
    d = min(max(d, pair.eps), 1.0 - pair.eps)
    return float(-np.log(1.0 - d))


def style_reward_batch(
    pair: DiscriminatorPair,
    feat_t: np.ndarray,
    feat_t1: np.ndarray,
    rec_mask: np.ndarray,
    v_hat: np.ndarray,
) -> np.ndarray:
    """Vectorized style rewards for a mixed batch. ``rec_mask`` marks rows
    scored by the recovery discriminator; others use locomotion with their
    per-row condition."""
    x = _pair_input(pair, feat_t, feat_t1)
    rec_mask = np.asarray(rec_mask, dtype=bool)
    out = np.empty(x.shape[0])
    if rec_mask.any():
        d = mlp_forward(pair.rec, x[rec_mask])[:, 0]
        out[rec_mask] = -np.log(1.0 - np.clip(d, pair.eps, 1.0 - pair.eps))
    loco = ~rec_mask
    if loco.any():
        xl = np.concatenate([x[loco], np.asarray(v_hat, float)[loco, None]], axis=1)
        d = mlp_forward(pair.loco, xl)[:, 0]
        out[loco] = -np.log(1.0 - np.clip(d, pair.eps, 1.0 - pair.eps))
    return out


def total_reward(r_task, r_amp, lambda_amp: float):
    return r_task + lambda_amp * r_amp


def route_batch(
    g_z: np.ndarray, cfg: GateConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Stable partition of transition indices by the gate on each
    transition's first-frame g_z: (recovery indices, locomotion indices)."""
    g_z = np.asarray(g_z, dtype=float)
    modes = [gate(v, cfg) for v in g_z]
    rec = np.array([i for i, m in enumerate(modes) if m is Mode.REC], dtype=np.int64)
    loco = np.array([i for i, m in enumerate(modes) if m is Mode.LOCO], dtype=np.int64)
    return rec, loco


def discriminator_update_step(
    params: MlpParams,
    adam: AdamState,
    ref_x: np.ndarray,
    pol_x: np.ndarray,
    lambda_gp: float,
    logit_reg: float = 0.0,
) -> float:
    """One BCE + gradient-penalty Adam step: reference label 1, policy label
    0, penalty on the squared input-gradient norm at reference inputs.
    ``logit_reg`` adds a mean squared-logit penalty on both batches, which
    keeps D away from the reward clamp where style ranking is lost."""
    ref_x = np.atleast_2d(np.asarray(ref_x, float))
    pol_x = np.atleast_2d(np.asarray(pol_x, float))
    n_ref, n_pol = ref_x.shape[0], pol_x.shape[0]

    y_ref = mlp_forward(params, ref_x)[:, 0]
    y_pol = mlp_forward(params, pol_x)[:, 0]
    tiny = 1e-12
    yr = np.clip(y_ref, tiny, 1.0 - tiny)
    yp = np.clip(y_pol, tiny, 1.0 - tiny)
    bce = float(-np.mean(np.log(yr)) - np.mean(np.log(1.0 - yp)))

    # Upstream chosen so the chain through the sigmoid derivative y(1-y)
    # yields the logit-space gradient (y - label)/n.
    up_ref = ((yr - 1.0) / (n_ref * yr * (1.0 - yr)))[:, None]
    up_pol = (yp / (n_pol * yp * (1.0 - yp)))[:, None]
    reg = 0.0
    if logit_reg > 0.0:
        zr = np.log(yr / (1.0 - yr))
        zp = np.log(yp / (1.0 - yp))
        reg = float(np.mean(zr**2) + np.mean(zp**2))
        # d(z^2)/dy = 2z / (y(1-y)) folded into the same upstream
        up_ref += (logit_reg * 2.0 * zr / (n_ref * yr * (1.0 - yr)))[:, None]
        up_pol += (logit_reg * 2.0 * zp / (n_pol * yp * (1.0 - yp)))[:, None]
    grads, _ = mlp_backward(params, ref_x, up_ref)
    g_pol, _ = mlp_backward(params, pol_x, up_pol)
    grads.add_(g_pol)
    penalty = 0.0
    if lambda_gp > 0:
        penalty, gp_grads = input_grad_penalty_backward(params, ref_x)
        grads.add_(gp_grads, scale=lambda_gp)
    loss = bce + lambda_gp * penalty + logit_reg * reg
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite discriminator loss (bce={bce}, penalty={penalty}, "
            f"n_ref={n_ref}, n_pol={n_pol})"
        )
    adam_step(params, grads, adam)
    return loss


def update_discriminators(
    pair: DiscriminatorPair,
    rec_feats: np.ndarray,
    loco_feats: np.ndarray,
    loco_v_hat: np.ndarray,
    getup_clips: list[MotionClip],
    walk_clip: MotionClip,
    run_clip: MotionClip,
    rng: np.random.Generator,
    batch_size: int | None = None,
    input_noise: float = 0.0,
    logit_reg: float = 0.0,
) -> dict:
    """One update per discriminator on this iteration's policy transitions.

    ``rec_feats`` / ``loco_feats`` are (n, 40) concatenated feature pairs
    routed by the gate; each policy row is matched with one freshly sampled
    reference transition. An empty batch skips that discriminator and
    reports a 0.0 loss. ``batch_size`` caps each update's policy rows
    (subsampled without replacement) and ``input_noise`` adds Gaussian noise
    to the normalized inputs; both slow the discriminators down so the style
    reward keeps ranking transitions instead of clamping at the floor.
    """
    rec_feats = np.asarray(rec_feats, float).reshape(-1, REC_INPUT_DIM)
    loco_feats = np.asarray(loco_feats, float).reshape(-1, REC_INPUT_DIM)
    loco_v_hat = np.asarray(loco_v_hat, float).reshape(-1)
    if loco_feats.shape[0] != loco_v_hat.shape[0]:
        raise ValueError("locomotion batch and condition lengths differ")

    if rec_feats.shape[0] or loco_feats.shape[0]:
        pair.norm.update(np.concatenate([rec_feats, loco_feats], axis=0))

    if batch_size is not None:
        if rec_feats.shape[0] > batch_size:
            keep = rng.choice(rec_feats.shape[0], size=batch_size, replace=False)
            rec_feats = rec_feats[keep]
        if loco_feats.shape[0] > batch_size:
            keep = rng.choice(loco_feats.shape[0], size=batch_size, replace=False)
            loco_feats = loco_feats[keep]
            loco_v_hat = loco_v_hat[keep]

    losses = {"disc_loss_rec": 0.0, "disc_loss_loco": 0.0}

    n_rec = rec_feats.shape[0]
    if n_rec:
        refs = np.empty((n_rec, REC_INPUT_DIM))
        for i in range(n_rec):
            clip = getup_clips[int(rng.integers(len(getup_clips)))]
            t = sample_transition(clip, rng)
            refs[i, :FEATURE_DIM] = t.feat_t
            refs[i, FEATURE_DIM:] = t.feat_t1
        ref_x = pair.norm.normalize(refs)
        pol_x = pair.norm.normalize(rec_feats)
        if input_noise > 0.0:
            ref_x = ref_x + input_noise * rng.standard_normal(ref_x.shape)
            pol_x = pol_x + input_noise * rng.standard_normal(pol_x.shape)
        losses["disc_loss_rec"] = discriminator_update_step(
            pair.rec, pair.adam_rec, ref_x, pol_x, pair.lambda_gp, logit_reg
        )

    n_loco = loco_feats.shape[0]
    if n_loco:
        refs = np.empty((n_loco, LOCO_INPUT_DIM))
        for i in range(n_loco):
            t = sample_reference_loco(walk_clip, run_clip, float(loco_v_hat[i]), rng)
            refs[i, :FEATURE_DIM] = t.feat_t
            refs[i, FEATURE_DIM:REC_INPUT_DIM] = t.feat_t1
            refs[i, REC_INPUT_DIM] = t.condition
        refs[:, :REC_INPUT_DIM] = pair.norm.normalize(refs[:, :REC_INPUT_DIM])
        pol = np.concatenate(
            [pair.norm.normalize(loco_feats), loco_v_hat[:, None]], axis=1
        )
        if input_noise > 0.0:
            refs[:, :REC_INPUT_DIM] += input_noise * rng.standard_normal(
                (refs.shape[0], REC_INPUT_DIM)
            )
            pol[:, :REC_INPUT_DIM] += input_noise * rng.standard_normal(
                (pol.shape[0], REC_INPUT_DIM)
            )
        losses["disc_loss_loco"] = discriminator_update_step(
            pair.loco, pair.adam_loco, refs, pol, pair.lambda_gp, logit_reg
        )
    return losses
