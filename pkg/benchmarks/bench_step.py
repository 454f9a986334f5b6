"""Benchmark the compiled step kernel against the numpy fallback.

Usage: python3 benchmarks/bench_step.py [--envs 64] [--steps 200]
"""

import argparse
import time

import numpy as np

from gamp.sim import HAVE_KERNELS, BipedModel, reset, step_batch


def bench(backend: str, model: BipedModel, n_envs: int, n_steps: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    q = np.stack([reset(model, "upright", 0.0, rng).q for _ in range(n_envs)])
    qd = np.zeros_like(q)
    targets = np.tile(model.q_default[3:], (n_envs, 1))
    # warm up (JIT caches, page faults)
    step_batch(model, q.copy(), qd.copy(), targets, model.n_substeps, backend=backend)
    t0 = time.perf_counter()
    for _ in range(n_steps):
        step_batch(model, q, qd, targets, model.n_substeps, backend=backend)
    return (time.perf_counter() - t0) / n_steps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--envs", type=int, default=64)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = BipedModel()
    t_numpy = bench("numpy", model, args.envs, args.steps, args.seed)
    print(f"numpy fallback : {t_numpy * 1e3:8.3f} ms per control step ({args.envs} envs)")
    if HAVE_KERNELS:
        t_cy = bench("cython", model, args.envs, args.steps, args.seed)
        print(f"cython kernel  : {t_cy * 1e3:8.3f} ms per control step ({args.envs} envs)")
        print(f"speedup        : {t_numpy / t_cy:8.2f}x")
    else:
        print("cython kernel  : not built (pure-python install)")


if __name__ == "__main__":
    main()
