"""Compare the compiled and numpy kernels, then a full training step per backend.

    python benchmarks/bench_kernels.py [--repeat 200]

The training-step timing runs in a child process for each backend, since the
backend is fixed at import time by SUPERCM_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from supercm import _accel, kernels

STEP_SNIPPET = """
import timeit, numpy as np
from supercm import _accel
from supercm.core_math import AdamState
from supercm.data import two_moons, split_labeled, sample_batch
from supercm.trainer import ModelConfig, SuperCMModel, TrainConfig, train_step
rng = np.random.default_rng(0)
ds = two_moons(1600, 0.1, rng)
li, ui = split_labeled(ds, 3, rng)
model = SuperCMModel.init(2, 2, ModelConfig(), rng)
adam = AdamState.for_params(model.params())
cfg = TrainConfig(beta=1.0, n_u={n_u})
batch = sample_batch(ds, li, ui, cfg.n_l, cfg.n_u, 0.0, rng)
train_step(model, batch, cfg, adam, 1e-3, rng)  # warm-up / compile
t = min(timeit.repeat(lambda: train_step(model, batch, cfg, adam, 1e-3, rng), number={repeat}, repeat=3))
print(_accel.backend_name(), t / {repeat})
"""


def time_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12}{'N':>6}{'K':>4}{'d':>4}{'numba us':>12}{'numpy us':>12}{'ratio':>8}")
    for n, k, d in [(16, 2, 2), (70, 2, 2), (256, 4, 10), (1024, 10, 32)]:
        x = rng.normal(size=(n, d))
        gamma = kernels.softmax_rows_numpy(rng.normal(size=(n, k)))
        mu = rng.normal(size=(k, d))
        alpha = np.full(k, 1.5)
        z = rng.normal(size=(n, k))
        for name, a, b in [
            ("cm_loss", lambda: kernels.cm_terms_grads_numba(x, gamma, mu, alpha),
             lambda: kernels.cm_terms_grads_numpy(x, gamma, mu, alpha)),
            ("softmax", lambda: kernels.softmax_rows_numba(z), lambda: kernels.softmax_rows_numpy(z)),
        ]:
            ta, tb = time_call(a, repeat), time_call(b, repeat)
            print(f"{name:<12}{n:>6}{k:>4}{d:>4}{ta * 1e6:>12.1f}{tb * 1e6:>12.1f}{tb / ta:>8.2f}")


def bench_steps(repeat, n_u):
    print(f"\ntrain_step (n_l=6, n_u={n_u}, 3x10 MLP)")
    for flag in ("1", "0"):
        env = dict(os.environ, SUPERCM_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, "-c", STEP_SNIPPET.format(repeat=repeat, n_u=n_u)],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        print(f"  {out[0]:<6} {float(out[1]) * 1e6:9.1f} us/step")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--n-u", type=int, default=64)
    args = ap.parse_args()
    if not _accel.NUMBA_ENABLED:
        sys.exit("numba is not available (or SUPERCM_NUMBA=0); nothing to compare")
    bench_kernels(args.repeat)
    bench_steps(args.repeat, args.n_u)


if __name__ == "__main__":
    main()
