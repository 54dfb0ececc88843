"""Confusion matrices, Cohen's kappa with variance and confidence interval,
and the two-sample z test for comparing kappas."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence, Tuple

import numpy as np

Z_975 = 1.959964  # two-sided 0.05 critical value
CI_Z = 1.96

SIMPLE = "simple"
DELTA = "delta"  # Fleiss, Cohen & Everitt large-sample variance


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(counts < 0) or not np.all(counts == np.round(counts)):
            raise ValueError("counts must be nonnegative integers")
        if counts.sum() < 1:
            raise ValueError("confusion matrix is empty")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def c(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class KappaReport:
    kappa: float
    p_observed: float
    p_chance: float
    variance: float
    ci95_half_width: float
    n: int = 0
    c: int = 0
    method: str = SIMPLE

    def as_pair(self) -> Tuple[float, float]:
        return self.kappa, self.variance

    def to_text(self) -> str:
        """Key-value block, one ``key = value`` per line."""
        fields = [("kappa", self.kappa), ("variance", self.variance),
                  ("ci95", self.ci95_half_width), ("p_observed", self.p_observed),
                  ("p_chance", self.p_chance), ("n", self.n), ("c", self.c),
                  ("variance_method", self.method)]
        return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                       for k, v in fields)

    CSV_HEADER = "kappa,variance,ci,p_o,p_e,n,c"

    def to_csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in (self.kappa, self.variance, self.ci95_half_width,
                                                 self.p_observed, self.p_chance)) + f",{self.n},{self.c}"


def build_confusion(truth: Sequence[int], predicted: Sequence[int], c: int) -> ConfusionMatrix:
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape or truth.ndim != 1 or len(truth) == 0:
        raise ValueError("truth and predicted must be equal-length non-empty sequences")
    for name, arr in (("truth", truth), ("predicted", predicted)):
        if np.any((arr < 0) | (arr >= c)) or not np.all(arr == np.round(arr)):
            raise ValueError(f"{name} has labels outside [0, {c})")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (truth.astype(int), predicted.astype(int)), 1)
    return ConfusionMatrix(counts)


def kappa_variance(p_observed: float, p_chance: float, n: float) -> float:
    """Large-sample approximation ``p_o (1 - p_o) / (n (1 - p_e)^2)``."""
    if not p_chance < 1:
        raise ValueError("kappa is undefined when chance agreement is 1")
    return p_observed * (1 - p_observed) / (n * (1 - p_chance) ** 2)


def _delta_variance(p, p_o, p_e):
    # Fleiss, Cohen & Everitt (1969), p holds cell proportions
    rows, cols = p.sum(axis=1), p.sum(axis=0)
    k = len(p)
    diag = np.diag(p)
    a = np.sum(diag * ((1 - p_e) - (rows + cols) * (1 - p_o)) ** 2)
    off = (1 - p_o) ** 2 * sum(p[i, j] * (cols[i] + rows[j]) ** 2
                               for i in range(k) for j in range(k) if i != j)
    c_term = (p_o * p_e - 2 * p_e + p_o) ** 2
    return (a + off - c_term) / (1 - p_e) ** 4


def cohen_kappa(m: ConfusionMatrix, method: str = SIMPLE) -> KappaReport:
    """Cohen's kappa with a large-sample variance.

    ``method="simple"`` uses ``p_o (1 - p_o) / (n (1 - p_e)^2)``;
    ``method="delta"`` uses the full Fleiss-Cohen-Everitt expression.
    """
    counts = m.counts.astype(float)
    n = counts.sum()
    p_o = float(np.trace(counts) / n)
    p_e = float(np.sum(counts.sum(axis=1) * counts.sum(axis=0)) / n ** 2)
    if p_e >= 1.0:
        raise ValueError("kappa is undefined when chance agreement is 1")
    kappa = (p_o - p_e) / (1 - p_e)
    if method == SIMPLE:
        var = kappa_variance(p_o, p_e, n)
    elif method == DELTA:
        var = max(_delta_variance(counts / n, p_o, p_e), 0.0) / n
    else:
        raise ValueError(f"unknown variance method {method!r}")
    var = float(var)
    return KappaReport(kappa, p_o, p_e, var, CI_Z * math.sqrt(var), int(n), m.c, method)


def critical_value(alpha: float) -> float:
    """Two-sided standard-normal critical value."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if alpha == 0.05:
        return Z_975
    return NormalDist().inv_cdf(1 - alpha / 2)


def kappa_z_test(k1, k2, alpha: float = 0.05) -> Tuple[float, bool]:
    """z statistic for two independent kappas and whether ``|z|`` is significant.

    ``k1`` and ``k2`` are ``(kappa, variance)`` pairs or :class:`KappaReport`.
    """
    kappa1, var1 = k1.as_pair() if isinstance(k1, KappaReport) else k1
    kappa2, var2 = k2.as_pair() if isinstance(k2, KappaReport) else k2
    if var1 < 0 or var2 < 0:
        raise ValueError("variances must be nonnegative")
    diff = kappa1 - kappa2
    total = var1 + var2
    if total == 0:
        if diff != 0:
            raise ValueError("both variances are zero but the kappas differ")
        return 0.0, False
    z = diff / math.sqrt(total)
    return z, abs(z) > critical_value(alpha)


def accuracy_and_per_class_recall(m: ConfusionMatrix):
    """Returns ``(accuracy, recall, empty_rows)``; empty rows get recall 0 and are flagged."""
    counts = m.counts
    rows = counts.sum(axis=1)
    empty = rows == 0
    recall = np.where(empty, 0.0, np.diag(counts) / np.where(empty, 1, rows))
    return float(np.trace(counts) / m.n), recall, empty


def kappa_from_predictions(truth, predicted, c, method=SIMPLE) -> KappaReport:
    return cohen_kappa(build_confusion(truth, predicted, c), method)
