"""Time the compiled and the pure-Python kernels on the two paper-scale tasks.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--task spin32|chain5|all]

Reports seconds per forward pass and per loss-and-gradient evaluation (the
cost of one training epoch) for each available backend.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from lindlearn import adjoint as adj
from lindlearn import dataset as ds
from lindlearn import kernels
from lindlearn.superop import compile_model

TASKS = {"spin32": "spin32-tdep", "chain5": "chain5-tindep"}


def setup(preset_name: str, n_bs: int | None):
    preset = ds.load_preset(preset_name)
    if n_bs is not None:
        preset = preset.updated(n_bs=n_bs)
    truth = ds.sample_ground_truth(preset, 1)
    data = ds.generate_dataset(truth, preset, 1)
    system = compile_model(truth.with_probe(data.batches[0].probe))
    problems = adj.prepare_batch(system, data.batches, preset.substeps, preset.method)
    return system, problems, truth.theta * 1.01


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--task", choices=[*TASKS, "all"], default="all")
    ap.add_argument("--n-bs", type=int, help="override the batch count (smaller chain runs)")
    args = ap.parse_args(argv)
    tasks = list(TASKS) if args.task == "all" else [args.task]
    backends = kernels.available_backends()
    print(f"{'task':8s} {'backend':9s} {'forward [s]':>12s} {'grad [s]':>10s}")
    for task in tasks:
        system, problems, theta = setup(TASKS[task], args.n_bs)
        res = {}
        for name in backends:
            fwd = best_of(lambda: [adj.forward_pass(system, theta, p, name) for p in problems], args.repeat)
            grad = best_of(lambda: adj.value_and_grad(system, theta, problems, backend=name), args.repeat)
            res[name] = (fwd, grad)
            print(f"{task:8s} {name:9s} {fwd:12.4f} {grad:10.4f}")
        if "compiled" in res:
            g_py = adj.value_and_grad(system, theta, problems, backend="python")[1]
            g_c = adj.value_and_grad(system, theta, problems, backend="compiled")[1]
            diff = np.max(np.abs(g_py - g_c)) / np.max(np.abs(g_py))
            sp_f = res["python"][0] / res["compiled"][0]
            sp_g = res["python"][1] / res["compiled"][1]
            print(f"{task:8s} speedup   {sp_f:11.1f}x {sp_g:9.1f}x   (max rel. gradient difference {diff:.1e})")


if __name__ == "__main__":
    main()
