"""Rprop-trained perceptrons: XOR, then a hidden-size sweep.

The sweep compares uniform and Nguyen-Widrow initialisation and counts the
classes a network never recalls. Run with ``python3 demos/mlp_rprop.py``.
"""
import numpy as np

from marginkit import init_nguyen_widrow, rprop_train
from marginkit.harness import hidden_size_sweep, make_synthetic_blobs, split_half
from marginkit.neural import BIPOLAR, RpropConfig, forward_batch


def xor():
    X = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    t = np.array([[-1], [1], [1], [-1]], dtype=float)
    solved = 0
    for seed in range(10):
        model = init_nguyen_widrow((2, 2, 1), seed=seed, activation=BIPOLAR)
        model, report = rprop_train(model, X, t, RpropConfig(max_epochs=1000, seed=seed))
        solved += report.final_mse < 0.01
        if seed == 0:
            out = forward_batch(model, X).ravel()
            print(f"seed 0: {report.epochs_run} epochs, MSE {report.final_mse:.2e}, outputs {np.round(out, 3)}")
    print(f"XOR 2-2-1 bipolar: {solved}/10 seeds reach MSE < 0.01")


def sweep():
    data = make_synthetic_blobs(c=10, n=16, per_class=40, spread=0.35, seed=1)
    train, test = split_half(data, seed=0)
    result = hidden_size_sweep(train, test, sizes=[2, 5, 10, 20], seeds=range(3),
                               config=RpropConfig(max_epochs=300))
    print(result.table_csv(), end="")
    for row in result.best_per_init():
        print(" | ".join(str(v) for v in row))


if __name__ == "__main__":
    xor()
    sweep()
