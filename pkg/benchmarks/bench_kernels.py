"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on tiny_cnn-sized inputs, then one full forward+backward
training step of tiny_cnn and the default mlp with each backend swapped in.
"""
import argparse
import timeit

import numpy as np

from ssfl import kernels, losses
from ssfl import _kernels_py
from ssfl.model import ModelSpec, backward, forward, init_model

try:
    from ssfl import _kernels as _compiled
except ImportError:
    _compiled = None


def kernel_cases(rng):
    x = rng.normal(size=(64, 16, 28, 28))
    cols = _kernels_py.im2col(x, 3, 3, 1)
    pooled, idx = _kernels_py.maxpool2_forward(x)
    rows = rng.normal(size=(64 * 8, 2 * 28 * 28))
    vhat, inv = _kernels_py.standardize_rows(rows, 1e-5)
    return {
        "im2col 64x16x28x28": lambda m: m.im2col(x, 3, 3, 1),
        "col2im 64x16x28x28": lambda m: m.col2im(cols, x.shape, 3, 3, 1),
        "maxpool fwd": lambda m: m.maxpool2_forward(x),
        "maxpool bwd": lambda m: m.maxpool2_backward(pooled, idx, x.shape),
        "standardize fwd": lambda m: m.standardize_rows(rows, 1e-5),
        "standardize bwd": lambda m: m.standardize_rows_backward(rows, vhat, inv),
    }


def train_step_case(spec, rng):
    state = init_model(spec)
    x = rng.uniform(size=(64,) + spec.input_shape)
    y = rng.integers(0, spec.num_classes, size=64)

    def step():
        logits, cache = forward(state, x, "train")
        backward(state, cache, losses.cross_entropy(logits, y).logit_gradients)

    return step


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    if _compiled is None:
        print("compiled extension not built; only the numpy backend is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'case':<34}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in kernel_cases(rng).items():
        tp = best(lambda: fn(_kernels_py), args.repeat) * 1e3
        tc = best(lambda: fn(_compiled), args.repeat) * 1e3
        print(f"{name:<34}{tp:>10.2f}{tc:>11.2f}{tp / tc:>8.1f}x")
    specs = {
        "train step tiny_cnn+group_norm": ModelSpec("tiny_cnn", (1, 28, 28), 10, "group_norm"),
        "train step tiny_cnn+batch_norm": ModelSpec("tiny_cnn", (1, 28, 28), 10, "batch_norm"),
        "train step mlp+group_norm": ModelSpec("mlp", (16,), 10, "group_norm"),
    }
    original = kernels._impl
    try:
        for name, spec in specs.items():
            step = train_step_case(spec, rng)
            kernels._impl = _kernels_py
            tp = best(step, args.repeat) * 1e3
            kernels._impl = _compiled
            tc = best(step, args.repeat) * 1e3
            print(f"{name:<34}{tp:>10.2f}{tc:>11.2f}{tp / tc:>8.1f}x")
    finally:
        kernels._impl = original


if __name__ == "__main__":
    main()
