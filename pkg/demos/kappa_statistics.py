"""Cohen's kappa, its variance and the two-classifier z test.

Run with ``python3 demos/kappa_statistics.py``.
"""
from marginkit import build_confusion, cohen_kappa, kappa_z_test
from marginkit.metrics import ConfusionMatrix


def main():
    cm = ConfusionMatrix([[45, 5], [15, 35]])
    simple = cohen_kappa(cm)
    delta = cohen_kappa(cm, method="delta")
    print(simple.to_text(), end="")
    print(f"delta-method variance = {delta.variance:.6g} (simple {simple.variance:.6g})")

    truth = [0] * 30 + [1] * 30 + [2] * 30
    a = [0] * 29 + [1] + [1] * 28 + [2, 2] + [2] * 30
    b = [0] * 20 + [1] * 10 + [1] * 22 + [0] * 8 + [2] * 25 + [0] * 5
    ka = cohen_kappa(build_confusion(truth, a, 3))
    kb = cohen_kappa(build_confusion(truth, b, 3))
    z, significant = kappa_z_test(ka, kb)
    print(f"classifier A kappa {ka.kappa:.4f}, classifier B kappa {kb.kappa:.4f}")
    print(f"z = {z:.3f}, significant at 0.05: {significant}")


if __name__ == "__main__":
    main()
