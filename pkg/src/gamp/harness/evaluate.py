"""Deployment-style rollouts of a frozen policy and the evaluation suite.

Inference here mirrors deployment: the frozen network (with its stored
observation normalizer) is the only decision-maker. No gate is evaluated and
no mode value exists on this code path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..rewards import RewardWeights, compute_task_reward, wrap_angle
from ..sim import (
    OBS_HISTORY,
    BipedModel,
    IntegrationError,
    make_obs_frame,
    projected_gravity,
    reset,
    step,
)
from .frozen import FrozenPolicy

RECOVERY_PITCH = 0.3  # rad, wrapped
RECOVERY_HEIGHT_FRAC = 0.8
RECOVERY_HOLD_S = 3.0
RECOVERY_WITHIN_S = 10.0


@dataclass(frozen=True)
class Scenario:
    name: str
    init_mode: str
    schedule: tuple  # ((start time s, v_cmd), ...) piecewise-constant command


SCENARIOS = {
    "stand": Scenario("stand", "upright", ((0.0, 0.0),)),
    "walk": Scenario("walk", "upright", ((0.0, 0.8),)),
    "run": Scenario("run", "upright", ((0.0, 2.5),)),
    "prone_recover": Scenario("prone_recover", "prone", ((0.0, 0.0),)),
    "supine_recover": Scenario("supine_recover", "supine", ((0.0, 0.0),)),
    # continuity presets: recover, then walk, then run on one schedule
    "supine_walk_run": Scenario("supine_walk_run", "supine", ((0.0, 0.0), (4.0, 0.8), (8.0, 2.5))),
    "prone_walk_run": Scenario("prone_walk_run", "prone", ((0.0, 0.0), (8.0, 0.8), (12.0, 2.5))),
}


def _command_at(schedule, t: float) -> float:
    cmd = schedule[0][1]
    for start, v in schedule:
        if t >= start:
            cmd = v
    return float(cmd)


def rollout_frozen(
    frozen: FrozenPolicy,
    model: BipedModel,
    scenario: Scenario,
    steps: int,
    seed: int = 0,
    weights: RewardWeights | None = None,
    trace_path=None,
) -> dict:
    """Deterministic frozen-policy rollout; returns a summary with tracking
    error, recovery success/time, and a failure flag on physics blow-up."""
    weights = weights or RewardWeights()
    rng = np.random.default_rng(seed)
    state = reset(model, scenario.init_mode, _command_at(scenario.schedule, 0.0), rng)
    frame = make_obs_frame(model, state)
    hist = [frame.copy() for _ in range(OBS_HISTORY)]

    stand = model.standing_height
    hold_steps = int(round(RECOVERY_HOLD_S / model.dt_ctrl))
    ok_run = 0
    recovered = False
    time_to_recover = float("nan")
    track_err_sum = 0.0
    n_done = 0
    failed = False
    writer = None
    fh = None
    if trace_path is not None:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(
            ["time"]
            + [f"q{i}" for i in range(9)]
            + [f"qd{i}" for i in range(9)]
            + [f"action{i}" for i in range(6)]
            + ["g_z", "r_cmd", "r_smooth", "r_posture", "c_energy", "c_fall"]
        )

    try:
        for k in range(steps):
            t = k * model.dt_ctrl
            state.command = _command_at(scenario.schedule, t)
            obs = np.concatenate(hist)
            action = frozen.act(obs).astype(float)
            state, info = step(model, state, action)
            hist.pop(0)
            hist.append(make_obs_frame(model, state))

            _, bd = compute_task_reward(state, action, info.torques, weights)
            track_err_sum += abs(state.qd[0] - state.command)
            n_done += 1

            upright = (
                abs(float(wrap_angle(state.q[2]))) < RECOVERY_PITCH
                and state.q[1] > RECOVERY_HEIGHT_FRAC * stand
            )
            ok_run = ok_run + 1 if upright else 0
            if not recovered and ok_run >= hold_steps:
                start_t = state.time - RECOVERY_HOLD_S
                if start_t <= RECOVERY_WITHIN_S:
                    recovered = True
                    time_to_recover = start_t
            if writer is not None:
                g_z = float(projected_gravity(state.q[2])[1])
                writer.writerow(
                    [repr(float(state.time))]
                    + [repr(float(v)) for v in state.q]
                    + [repr(float(v)) for v in state.qd]
                    + [repr(float(v)) for v in action]
                    + [repr(g_z)]
                    + [repr(float(bd[k2])) for k2 in
                       ("r_cmd", "r_smooth", "r_posture", "c_energy", "c_fall")]
                )
    except IntegrationError:
        failed = True
    finally:
        if fh is not None:
            fh.close()

    return {
        "scenario": scenario.name,
        "steps": n_done,
        "failed": failed,
        "mean_tracking_error": track_err_sum / max(n_done, 1),
        "recovered": bool(recovered),
        "time_to_recover": time_to_recover,
        "final_height": float(state.q[1]),
        "final_pitch": float(wrap_angle(state.q[2])),
    }


SWEEP_COMMANDS = (-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0)
SWEEP_SETTLE_S = 2.0
SWEEP_DURATION_S = 10.0
RECOVERY_TRIALS = 20
RECOVERY_DURATION_S = 13.5


def velocity_sweep(frozen: FrozenPolicy, model: BipedModel, commands=SWEEP_COMMANDS) -> list:
    """Per-command tracking error, measured after a settle period."""
    rows = []
    settle = int(round(SWEEP_SETTLE_S / model.dt_ctrl))
    steps = int(round(SWEEP_DURATION_S / model.dt_ctrl))
    for cmd in commands:
        scenario = Scenario(f"sweep_{cmd:+.2f}", "upright", ((0.0, float(cmd)),))
        rng = np.random.default_rng(1000)
        state = reset(model, "upright", float(cmd), rng)
        hist = [make_obs_frame(model, state).copy() for _ in range(OBS_HISTORY)]
        err_sum, n = 0.0, 0
        failed = False
        try:
            for k in range(steps):
                action = frozen.act(np.concatenate(hist)).astype(float)
                state, _ = step(model, state, action)
                hist.pop(0)
                hist.append(make_obs_frame(model, state))
                if k >= settle:
                    err_sum += abs(state.qd[0] - cmd)
                    n += 1
        except IntegrationError:
            failed = True
        rows.append(
            {
                "name": scenario.name,
                "command": float(cmd),
                "tracking_error": err_sum / max(n, 1),
                "failed": failed,
            }
        )
    return rows


def evaluate(frozen: FrozenPolicy, out_dir, suite: str = "full",
             model: BipedModel | None = None) -> dict:
    """Run the named suite and emit report.txt plus eval.csv in out_dir."""
    if suite not in ("full", "sweep", "recovery", "continuity"):
        raise ValueError(f"unknown suite {suite!r}")
    model = model or BipedModel()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"suite": suite}
    rows = []

    if suite in ("full", "sweep"):
        sweep = velocity_sweep(frozen, model)
        report["sweep"] = sweep
        report["mean_sweep_error"] = float(np.mean([r["tracking_error"] for r in sweep]))
        for r in sweep:
            rows.append(["sweep", r["name"], r["command"], r["tracking_error"], "", ""])

    if suite in ("full", "recovery"):
        steps = int(round(RECOVERY_DURATION_S / model.dt_ctrl))
        for mode in ("prone", "supine"):
            results = []
            for trial in range(RECOVERY_TRIALS):
                s = rollout_frozen(
                    frozen, model, SCENARIOS[f"{mode}_recover"], steps, seed=trial
                )
                results.append(s)
                rows.append(
                    [f"recovery_{mode}", f"trial_{trial}", 0.0,
                     s["mean_tracking_error"], s["recovered"], s["time_to_recover"]]
                )
            rate = float(np.mean([s["recovered"] for s in results]))
            report[f"recovery_rate_{mode}"] = rate
            times = [s["time_to_recover"] for s in results if s["recovered"]]
            report[f"mean_time_to_recover_{mode}"] = float(np.mean(times)) if times else float("nan")

    if suite in ("full", "continuity"):
        for name in ("supine_walk_run", "prone_walk_run"):
            sc = SCENARIOS[name]
            steps = int(round((sc.schedule[-1][0] + 6.0) / model.dt_ctrl))
            s = rollout_frozen(frozen, model, sc, steps, seed=7)
            report[name] = s
            rows.append(
                ["continuity", name, sc.schedule[-1][1],
                 s["mean_tracking_error"], s["recovered"], s["time_to_recover"]]
            )

    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "name", "command", "tracking_error", "recovered", "time_to_recover"])
        w.writerows(rows)

    with open(out / "report.txt", "w") as fh:
        fh.write(f"evaluation suite: {suite}\n")
        if "mean_sweep_error" in report:
            fh.write(f"velocity sweep mean |v - v_cmd|: {report['mean_sweep_error']:.4f} m/s\n")
            for r in report["sweep"]:
                fh.write(
                    f"  command {r['command']:+.2f}: error {r['tracking_error']:.4f}"
                    f"{'  FAILED' if r['failed'] else ''}\n"
                )
        for mode in ("prone", "supine"):
            key = f"recovery_rate_{mode}"
            if key in report:
                fh.write(
                    f"{mode} recovery: {report[key] * 100:.0f}% of {RECOVERY_TRIALS},"
                    f" mean time {report[f'mean_time_to_recover_{mode}']:.2f} s\n"
                )
        for name in ("supine_walk_run", "prone_walk_run"):
            if name in report:
                s = report[name]
                fh.write(
                    f"{name}: recovered={s['recovered']} "
                    f"tracking error {s['mean_tracking_error']:.4f} m/s\n"
                )
    return report
