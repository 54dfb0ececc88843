"""Mercer kernels and the pairwise-distance width heuristic for Gaussian kernels.

Three families are supported: linear, polynomial (homogeneous when the offset
is zero) and Gaussian ``exp(-||x - z||^2 / (2 * sigma2))``. Kernels are
described by an immutable :class:`KernelSpec` which also has a short text form
used in model files and on the command line::

    linear
    poly:<degree>:<offset>
    gauss:<sigma2>
    gauss:auto
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

LINEAR = "linear"
POLYNOMIAL = "poly"
GAUSSIAN = "gauss"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its hyperparameters.

    ``sigma2=None`` on a Gaussian spec is the unresolved ``gauss:auto`` form;
    it must be resolved with :meth:`with_sigma2` before any evaluation.
    """

    kind: str = LINEAR
    degree: int = 1
    offset: float = 0.0
    sigma2: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (LINEAR, POLYNOMIAL, GAUSSIAN):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial degree must be an integer >= 1")
            if not (math.isfinite(self.offset) and self.offset >= 0):
                raise ValueError("polynomial offset must be finite and >= 0")
        if self.kind == GAUSSIAN and self.sigma2 is not None:
            if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
                raise ValueError("gaussian sigma2 must be finite and > 0")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(LINEAR)

    @classmethod
    def polynomial(cls, degree: int, offset: float = 0.0) -> "KernelSpec":
        return cls(POLYNOMIAL, degree=int(degree), offset=float(offset))

    @classmethod
    def gaussian(cls, sigma2: Optional[float]) -> "KernelSpec":
        return cls(GAUSSIAN, sigma2=None if sigma2 is None else float(sigma2))

    @property
    def is_auto(self) -> bool:
        return self.kind == GAUSSIAN and self.sigma2 is None

    def with_sigma2(self, sigma2: float) -> "KernelSpec":
        if self.kind != GAUSSIAN:
            raise ValueError("only gaussian kernels carry sigma2")
        return KernelSpec.gaussian(sigma2)

    def to_text(self) -> str:
        if self.kind == LINEAR:
            return "linear"
        if self.kind == POLYNOMIAL:
            return f"poly:{self.degree}:{self.offset!r}"
        return "gauss:auto" if self.sigma2 is None else f"gauss:{self.sigma2!r}"

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        parts = text.strip().split(":")
        head = parts[0].lower()
        try:
            if head == "linear" and len(parts) == 1:
                return cls.linear()
            if head == "poly" and len(parts) in (2, 3):
                offset = float(parts[2]) if len(parts) == 3 else 0.0
                return cls.polynomial(int(parts[1]), offset)
            if head == "gauss" and len(parts) == 2:
                if parts[1].lower() == "auto":
                    return cls.gaussian(None)
                return cls.gaussian(float(parts[1]))
        except ValueError as exc:
            raise ValueError(f"bad kernel spec {text!r}: {exc}") from None
        raise ValueError(f"bad kernel spec {text!r}")

    def __str__(self):
        return self.to_text()


def _check_vector(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


def _require_resolved(spec: KernelSpec):
    if spec.is_auto:
        raise ValueError("gaussian kernel width is unresolved (gauss:auto)")


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Evaluate ``k(x, z)`` for a single pair of vectors.

    Sums are accumulated left to right in double precision, so the result is
    reproducible and exactly symmetric in ``x`` and ``z``.
    """
    _require_resolved(spec)
    xs = _check_vector(x, "x").tolist()
    zs = _check_vector(z, "z").tolist()
    if len(xs) != len(zs):
        raise ValueError(f"dimension mismatch: {len(xs)} != {len(zs)}")

    if spec.kind == GAUSSIAN:
        acc = 0.0
        for a, b in zip(xs, zs):
            d = a - b
            acc += d * d
        return math.exp(-acc / (2.0 * spec.sigma2))

    acc = 0.0
    for a, b in zip(xs, zs):
        acc += a * b
    if spec.kind == LINEAR:
        return acc
    return (acc + spec.offset) ** spec.degree


def gram(spec: KernelSpec, X, Z=None) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Z[j])`` computed with vectorised numpy.

    This is the fast path used by the solver and decision functions. It does
    not validate finiteness; callers validate at their own boundary.
    """
    _require_resolved(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = X if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} != {Z.shape[1]}")
    dots = X @ Z.T
    if spec.kind == LINEAR:
        return dots
    if spec.kind == POLYNOMIAL:
        return (dots + spec.offset) ** spec.degree
    sq = (X * X).sum(axis=1)[:, None] + (Z * Z).sum(axis=1)[None, :] - 2.0 * dots
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * spec.sigma2))


class Sigma2Heuristic(NamedTuple):
    sigma2: float
    q1: float
    q3: float


def heuristic_sigma2(samples: Sequence, subsample_cap: int = 1000, seed: int = 0) -> Sigma2Heuristic:
    """Gaussian width from the statistics of pairwise squared distances.

    Returns the median of the squared Euclidean distances between all pairs of
    a seeded subsample of at most ``subsample_cap`` points, together with the
    first and third quartiles of that distribution (the admissible range).
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("heuristic_sigma2 needs at least 2 samples of equal dimension")
    if subsample_cap < 2:
        raise ValueError("subsample_cap must be >= 2")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples have non-finite components")
    if X.shape[0] > subsample_cap:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(X.shape[0], size=subsample_cap, replace=False))
        X = X[idx]
    d2 = pdist(X, metric="sqeuclidean")
    if not np.any(d2 > 0):
        raise ValueError("degenerate dataset: all sampled pairwise distances are zero")
    q1, med, q3 = np.percentile(d2, [25, 50, 75])
    if med <= 0:
        raise ValueError("degenerate dataset: median pairwise distance is zero")
    return Sigma2Heuristic(float(med), float(q1), float(q3))


def resolve(spec: KernelSpec, samples, subsample_cap: int = 1000, seed: int = 0) -> KernelSpec:
    """Replace a ``gauss:auto`` spec with the heuristic width for ``samples``."""
    if not spec.is_auto:
        return spec
    return spec.with_sigma2(heuristic_sigma2(samples, subsample_cap, seed).sigma2)
