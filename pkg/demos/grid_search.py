"""Coarse-to-fine (C, sigma2) search for Gaussian one-vs-one SVMs.

Prints the surface CSV and the best cell. Run with
``python3 demos/grid_search.py``.
"""
from marginkit.harness import GridSpec, grid_search_svm, make_synthetic_blobs, split_half, surface_csv


def main():
    data = make_synthetic_blobs(c=4, n=8, per_class=40, spread=0.5, seed=2)
    train, validation = split_half(data, seed=0)
    rows = grid_search_svm(train, validation, GridSpec(c_values=(0.1, 1.0, 10.0), refine_rounds=1,
                                                       fine_points=3))
    print(surface_csv(rows), end="")
    best = max((r for r in rows if r.converged), key=lambda r: r.kappa)
    print(f"best: C={best.c_reg:.4g} sigma2={best.sigma2:.4g} kappa={best.kappa:.4f}, "
          f"{best.unique_sv_total} distinct SVs")


if __name__ == "__main__":
    main()
