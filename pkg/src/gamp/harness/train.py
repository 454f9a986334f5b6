"""Training orchestration: rollout -> discriminator update -> PPO update,
with a fixed-schema metrics CSV, periodic checkpoints, and a final frozen
policy export."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..amp import DiscriminatorPair, update_discriminators
from ..clips import generate_getup_clip, generate_run_clip, generate_walk_clip, reset_pool
from ..ppo import EnvConfig, PpoState, VecBiped, collect_rollout, ppo_update
from .config import TrainConfig
from .frozen import export_policy

METRICS_COLUMNS = [
    "iteration",
    "mean_task_reward",
    "mean_style_reward_rec",
    "mean_style_reward_loco",
    "frac_rec_gated",
    "disc_loss_rec",
    "disc_loss_loco",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_frac",
    "mean_tracking_error",
    "episodes_completed",
]


def _metrics_row(values: dict) -> str:
    return ",".join(repr(values[c]) for c in METRICS_COLUMNS)


def save_checkpoint(path, state: PpoState, env: VecBiped, iteration: int) -> None:
    mean = state.policy.mean
    arrays = {
        "iteration": np.array(iteration),
        "layer_dims": np.array(mean.layer_dims),
        "log_std": state.policy.log_std,
        "obs_mean": env.obs_norm.mean,
        "obs_var": env.obs_norm.variance(),
        "action_scale": np.array(env.cfg.model.action_scale),
        "meta": np.frombuffer(
            json.dumps(
                {"hidden_activation": mean.hidden_activation,
                 "output_activation": mean.output_activation}
            ).encode(),
            dtype=np.uint8,
        ),
    }
    for l, (w, b) in enumerate(zip(mean.weights, mean.biases)):
        arrays[f"w{l}"] = w
        arrays[f"b{l}"] = b
    for l, (w, b) in enumerate(zip(state.value.weights, state.value.biases)):
        arrays[f"vw{l}"] = w
        arrays[f"vb{l}"] = b
    np.savez(path, **arrays)


def export_checkpoint(checkpoint_path, out_path) -> None:
    """Convert a training checkpoint into the frozen inference format."""
    from ..nets import MlpParams

    with np.load(checkpoint_path) as z:
        dims = [int(d) for d in z["layer_dims"]]
        meta = json.loads(bytes(z["meta"]).decode())
        weights = [z[f"w{l}"] for l in range(len(dims) - 1)]
        biases = [z[f"b{l}"] for l in range(len(dims) - 1)]
        mean = MlpParams(
            dims, list(weights), list(biases),
            meta["hidden_activation"], meta["output_activation"],
        )
        export_policy(mean, z["obs_mean"], z["obs_var"], out_path,
                      action_scale=float(z["action_scale"]))


def train(cfg: TrainConfig, out_dir, iterations: int | None = None, log=None) -> Path:
    """Run training; returns the path of the final frozen policy."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iters = cfg.iterations if iterations is None else iterations

    rng = np.random.default_rng(cfg.seed)
    walk = generate_walk_clip(cfg.clips.walk, cfg.model)
    run = generate_run_clip(cfg.clips.run, cfg.model)
    getups = [
        generate_getup_clip("prone", cfg.clips.getup, cfg.model),
        generate_getup_clip("supine", cfg.clips.getup, cfg.model),
    ]
    env = VecBiped(
        EnvConfig(model=cfg.model, weights=cfg.rewards, amp=cfg.amp, gate=cfg.gate),
        cfg.ppo.n_envs,
        cfg.ppo.episode_len,
        cfg.seed,
        rsi_pool=reset_pool(getups, cfg.model) if cfg.rsi_prob > 0.0 else None,
        rsi_prob=cfg.rsi_prob,
    )
    state = PpoState.create(rng, cfg.ppo)
    pair = DiscriminatorPair.create(
        rng, hidden=cfg.disc.hidden, lambda_gp=cfg.disc.lambda_gp,
        eps=cfg.disc.eps, lr=cfg.disc.lr,
    )

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w") as mf:
        mf.write(",".join(METRICS_COLUMNS) + "\n")
        for it in range(1, iters + 1):
            try:
                buf = collect_rollout(env, state, pair, cfg.ppo, rng)
                rec = buf.rec_mask.reshape(-1)
                feats = np.concatenate(
                    [buf.feat_t.reshape(rec.size, -1), buf.feat_t1.reshape(rec.size, -1)],
                    axis=1,
                )
                v_hat = buf.v_hat.reshape(-1)
                losses = update_discriminators(
                    pair, feats[rec], feats[~rec], v_hat[~rec], getups, walk, run, rng,
                    batch_size=cfg.disc.batch_size, input_noise=cfg.disc.input_noise,
                    logit_reg=cfg.disc.logit_reg,
                )
                stats = ppo_update(state, buf, cfg.ppo, rng)
            except Exception as exc:
                mf.flush()
                raise RuntimeError(f"training aborted at iteration {it}: {exc}") from exc

            row = {
                "iteration": it,
                "mean_task_reward": float(buf.task_rewards.mean()),
                "mean_style_reward_rec": float(buf.style_rewards[buf.rec_mask].mean())
                if rec.any() else 0.0,
                "mean_style_reward_loco": float(buf.style_rewards[~buf.rec_mask].mean())
                if (~rec).any() else 0.0,
                "frac_rec_gated": float(buf.rec_mask.mean()),
                "disc_loss_rec": losses["disc_loss_rec"],
                "disc_loss_loco": losses["disc_loss_loco"],
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "approx_kl": stats["approx_kl"],
                "clip_frac": stats["clip_frac"],
                "mean_tracking_error": buf.mean_tracking_error(),
                "episodes_completed": buf.episodes_completed,
            }
            mf.write(_metrics_row(row) + "\n")
            if log is not None and (it % 10 == 0 or it == 1):
                log(
                    f"iter {it}/{iters} task {row['mean_task_reward']:.3f} "
                    f"track {row['mean_tracking_error']:.3f} "
                    f"rec {row['frac_rec_gated']:.2f}"
                )
            if cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{it:06d}.npz", state, env, it)

    save_checkpoint(out / "checkpoint_final.npz", state, env, iters)
    policy_path = out / "policy.gamp"
    export_policy(
        state.policy.mean, env.obs_norm.mean, env.obs_norm.variance(), policy_path,
        action_scale=cfg.model.action_scale,
    )
    return policy_path
