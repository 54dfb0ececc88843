"""Binary soft-margin SVM trained on the dual with Sequential Minimal Optimization.

Each step updates two multipliers analytically. The first is the maximal KKT
violator; the second maximises the second-order gain of the pair step, with
fallbacks to the largest ``|E1 - E2|`` and then a seeded scan when a pair makes
no progress. Training stops once a single bias satisfies every KKT condition
at ``kkt_tolerance``; that bias is the midpoint of the feasible interval.
"""
from __future__ import annotations

import io
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .kernels import LINEAR, KernelSpec, gram

FORMAT_TAG = "marginkit-binary-svm"
FORMAT_VERSION = 1

FULL_CACHE_LIMIT = 4096
_STEP_EPS = 1e-12


class SmoConvergenceError(RuntimeError):
    """Raised when SMO exceeds ``max_passes``; carries the best dual objective."""

    def __init__(self, message, best_objective, passes):
        super().__init__(message)
        self.best_objective = best_objective
        self.passes = passes


@dataclass(frozen=True)
class SmoConfig:
    c_reg: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec.linear)
    kkt_tolerance: float = 1e-3
    max_passes: Optional[int] = None  # None -> 10 * n
    seed: int = 0
    cache_rows: int = 512  # row LRU size when n > FULL_CACHE_LIMIT

    def __post_init__(self):
        if not (self.c_reg > 0 and math.isfinite(self.c_reg)):
            raise ValueError("c_reg must be finite and > 0")
        if not 0 < self.kkt_tolerance < 1:
            raise ValueError("kkt_tolerance must lie in (0, 1)")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be a positive integer")
        if self.kernel.is_auto:
            raise ValueError("resolve gauss:auto before training")


@dataclass
class TrainingStats:
    passes: int = 0
    steps: int = 0
    dual_objective: float = 0.0
    dual_trace: List[float] = field(default_factory=list)
    c_reg: Optional[float] = None


@dataclass
class BinarySvmModel:
    """Kernel expansion ``f(x) = sum_j coef_j k(sv_j, x) + bias``.

    ``coefficients`` hold ``alpha_j * y_j`` and are all nonzero.
    ``support_indices`` map support vectors back to training rows; it is
    ``None`` for models loaded from disk.
    """

    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    kernel: KernelSpec
    dimension: int
    training_stats: TrainingStats = field(default_factory=TrainingStats)
    support_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=float).reshape(-1, self.dimension)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(self.coefficients) != len(self.support_vectors):
            raise ValueError("coefficient count differs from support vector count")

    @property
    def n_support(self) -> int:
        return len(self.coefficients)

    def decision_values(self, X) -> np.ndarray:
        X = _as_matrix(X, self.dimension)
        if self.n_support == 0:
            return np.full(len(X), self.bias)
        return gram(self.kernel, X, self.support_vectors) @ self.coefficients + self.bias


@dataclass(frozen=True)
class CompactLinearModel:
    theta: np.ndarray
    bias: float

    def output(self, x) -> float:
        x = _as_vector(x, len(self.theta))
        return float(self.theta @ x + self.bias)

    def decision_values(self, X) -> np.ndarray:
        return _as_matrix(X, len(self.theta)) @ self.theta + self.bias


def _as_vector(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input has non-finite components")
    return x


def _as_matrix(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim} columns, got shape {X.shape}")
    return X


class _KernelRows:
    """Kernel rows on demand: a full Gram matrix for small n, else an LRU of rows."""

    def __init__(self, spec, X, cache_rows):
        self.spec = spec
        self.X = X
        n = len(X)
        if n <= FULL_CACHE_LIMIT:
            self.full = gram(spec, X)
            self.diag = self.full.diagonal().copy()
        else:
            self.full = None
            self.cache = OrderedDict()
            self.cache_rows = max(2, cache_rows)
            if spec.kind == "gauss":
                self.diag = np.ones(n)
            else:
                self.diag = np.array([gram(spec, X[i:i + 1])[0, 0] for i in range(n)])

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        row = self.cache.get(i)
        if row is not None:
            self.cache.move_to_end(i)
            return row
        row = gram(self.spec, self.X[i:i + 1], self.X)[0]
        self.cache[i] = row
        if len(self.cache) > self.cache_rows:
            self.cache.popitem(last=False)
        return row

    def outputs(self, weights):
        """``sum_j weights_j K[:, j]`` without the bias."""
        if self.full is not None:
            return self.full @ weights
        out = np.zeros(len(self.X))
        for j in np.flatnonzero(weights):
            out += weights[j] * self.row(j)
        return out


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij``."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ (K @ ay))


def kkt_violations(alpha, y, outputs, c_reg, tol) -> np.ndarray:
    """Indices breaking the soft-margin KKT conditions at tolerance ``tol``.

    ``outputs`` are raw decision values (bias included) at the training points.
    """
    alpha = np.asarray(alpha, dtype=float)
    r = np.asarray(y) * np.asarray(outputs)
    at_zero = alpha <= 0
    at_c = alpha >= c_reg
    free = ~at_zero & ~at_c
    bad = (at_zero & (r < 1 - tol)) | (at_c & (r > 1 + tol)) | (free & (np.abs(r - 1) > tol))
    return np.flatnonzero(bad)


def model_kkt_violations(model: BinarySvmModel, samples, labels, c_reg, tol=1e-3) -> np.ndarray:
    """Audit a trained model against its training data."""
    if model.support_indices is None:
        raise ValueError("model has no support index map (loaded from disk?)")
    y = np.asarray(labels, dtype=float)
    alpha = np.zeros(len(y))
    alpha[model.support_indices] = np.abs(model.coefficients)
    return kkt_violations(alpha, y, model.decision_values(samples), c_reg, tol)


def _check_training_input(samples, labels):
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("samples must be a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples have non-finite components")
    y = np.asarray(labels, dtype=float)
    if y.shape != (len(X),):
        raise ValueError("labels must match samples in length")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be exactly +1 or -1")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise ValueError("training data needs at least one sample of each label")
    return X, y


class _Smo:
    """Dual coordinate-pair ascent.

    ``F_i = sum_j alpha_j y_j K_ij - y_i`` is cached for every point; it does not
    involve the bias. With ``v = -F``, a bias satisfying all KKT conditions at
    tolerance ``tol`` exists exactly when ``max(v[I_up]) - min(v[I_low]) <= 2 tol``,
    where I_up / I_low are the points whose ``y_i alpha_i`` may still grow / shrink.
    """

    def __init__(self, X, y, config: SmoConfig):
        self.y = y
        self.n = len(y)
        self.C = config.c_reg
        self.tol = config.kkt_tolerance
        self.rng = np.random.default_rng(config.seed)
        self.K = _KernelRows(config.kernel, X, config.cache_rows)
        self.alpha = np.zeros(self.n)
        self.F = -y.copy()
        self.b = 0.0
        self.snap = 1e-12 * max(self.C, 1.0)
        self.steps = 0

    def objective(self):
        # sum(alpha) - 1/2 sum_i alpha_i y_i (F_i + y_i)
        a = self.alpha
        return float(a.sum() - 0.5 * np.sum(a * self.y * (self.F + self.y)))

    def take_step(self, i1, i2):
        """Optimise the pair analytically; False when no progress is possible."""
        if i1 == i2:
            return False
        C = self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L <= self.snap:
            return False
        row1, row2 = self.K.row(i1), self.K.row(i2)
        k11, k12, k22 = row1[i1], row1[i2], row2[i2]
        eta = k11 + k22 - 2.0 * k12
        slope = y2 * (self.F[i1] - self.F[i2])
        if eta > 0:
            a2n = min(max(a2 + slope / eta, L), H)
        else:
            # objective gain along the pair direction, evaluated at both ends
            gain_l = (L - a2) * slope - 0.5 * eta * (L - a2) ** 2
            gain_h = (H - a2) * slope - 0.5 * eta * (H - a2) ** 2
            if max(gain_l, gain_h) <= 0:
                return False
            a2n = L if gain_l >= gain_h else H
        a2n = self._snap(a2n)
        a1n = self._snap(min(max(a1 + s * (a2 - a2n), 0.0), C))
        # a tiny step still counts when it lands a multiplier exactly on a bound
        reaches_bound = (a1n in (0.0, C) and a1 not in (0.0, C)) or (a2n in (0.0, C) and a2 not in (0.0, C))
        if a2n == a2 or (not reaches_bound and abs(a2n - a2) < _STEP_EPS * (a2n + a2 + _STEP_EPS)):
            return False
        self.F += y1 * (a1n - a1) * row1 + y2 * (a2n - a2) * row2
        self.alpha[i1], self.alpha[i2] = a1n, a2n
        self.steps += 1
        return True

    def _snap(self, a):
        if a < self.snap:
            return 0.0
        if a > self.C - self.snap:
            return self.C
        return a

    def _sets(self):
        y, a, C = self.y, self.alpha, self.C
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y < 0) & (a < C)) | ((y > 0) & (a > 0))
        return np.flatnonzero(up), np.flatnonzero(low)

    def gap(self):
        v = -self.F
        up, low = self._sets()
        if len(up) == 0 or len(low) == 0:
            return 0.0
        return float(v[up].max() - v[low].min())

    def step(self):
        """One pair update on the maximal violator. Returns None when converged."""
        v = -self.F
        up, low = self._sets()
        if len(up) == 0 or len(low) == 0:
            return None
        i = int(up[np.argmax(v[up])])
        if v[i] - v[low].min() <= 2 * self.tol:
            return None
        cand = low[v[low] < v[i]]
        cand = cand[cand != i]
        # second index: largest second-order gain, then largest |E_i - E_j|
        row = self.K.row(i)
        curv = self.K.diag[i] + self.K.diag[cand] - 2.0 * row[cand]
        curv = np.where(curv > 0, curv, 1e-12)
        diff = v[i] - v[cand]
        first = int(cand[np.argmax(diff * diff / curv)])
        second = int(cand[np.argmax(diff)])
        for j in (first, second):
            if self.take_step(j, i):
                return True
        for j in np.roll(cand, -int(self.rng.integers(len(cand)))):
            if self.take_step(int(j), i):
                return True
        return False

    def settle_bias(self):
        v = -self.F
        up, low = self._sets()
        if len(up) and len(low):
            self.b = 0.5 * (v[up].max() + v[low].min())
        elif len(up):
            self.b = float(v[up].max())
        elif len(low):
            self.b = float(v[low].min())

    def outputs(self):
        return self.F + self.y + self.b

    def run(self, max_passes):
        """A pass is ``n`` pair updates; the dual objective is recorded after each."""
        trace = []
        best = 0.0
        budget = max_passes * self.n
        while True:
            result = self.step()
            if result is None:
                break
            if result is False:
                raise SmoConvergenceError(
                    f"SMO stalled with KKT gap {self.gap():.3g} and no feasible pair step",
                    max(best, self.objective()), len(trace))
            if self.steps % self.n == 0:
                obj = self.objective()
                trace.append(obj)
                best = max(best, obj)
            if self.steps >= budget:
                raise SmoConvergenceError(
                    f"SMO did not converge within {max_passes} passes "
                    f"(KKT gap {self.gap():.3g})", max(best, self.objective()), len(trace))
        trace.append(self.objective())
        self.settle_bias()
        return len(trace), trace


def smo_train(samples, labels, config: SmoConfig) -> BinarySvmModel:
    """Train a binary soft-margin SVM with SMO.

    Parameters
    ----------
    samples : array-like, shape (n, d)
    labels : array-like of +1 / -1, shape (n,)
    config : SmoConfig

    Raises
    ------
    ValueError
        Single-class input, non +-1 labels, non-finite samples.
    SmoConvergenceError
        ``max_passes`` exhausted; ``best_objective`` holds the best dual value.
    """
    X, y = _check_training_input(samples, labels)
    max_passes = config.max_passes or 10 * len(y)
    solver = _Smo(X, y, config)
    passes, trace = solver.run(max_passes)

    sv = np.flatnonzero(solver.alpha > 0)
    stats = TrainingStats(passes=passes, steps=solver.steps,
                          dual_objective=trace[-1] if trace else 0.0,
                          dual_trace=trace, c_reg=config.c_reg)
    return BinarySvmModel(
        support_vectors=X[sv],
        coefficients=solver.alpha[sv] * y[sv],
        bias=float(solver.b),
        kernel=config.kernel,
        dimension=X.shape[1],
        training_stats=stats,
        support_indices=sv,
    )


def svm_output(model: BinarySvmModel, x) -> float:
    """Raw signed margin ``sum_j coef_j k(sv_j, x) + b`` for one vector."""
    x = _as_vector(x, model.dimension)
    return float(model.decision_values(x[None, :])[0])


def sign(value: float) -> int:
    """Sign with sgn(0) = +1."""
    return 1 if value >= 0 else -1


def svm_decide(model: BinarySvmModel, x) -> int:
    return sign(svm_output(model, x))


def compact_linear(model: BinarySvmModel) -> CompactLinearModel:
    """Collapse a linear-kernel expansion into a single weight vector."""
    if model.kernel.kind != LINEAR:
        raise ValueError(f"compact form needs a linear kernel, got {model.kernel}")
    if model.n_support == 0:
        theta = np.zeros(model.dimension)
    else:
        theta = model.coefficients @ model.support_vectors
    return CompactLinearModel(theta=theta, bias=float(model.bias))


def _fmt(v: float) -> str:
    return "%.17g" % v


def dumps_binary(model: BinarySvmModel) -> str:
    out = io.StringIO()
    out.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n")
    out.write(f"kernel {model.kernel.to_text()}\n")
    out.write(f"bias {_fmt(model.bias)}\n")
    out.write(f"sv_count {model.n_support}\n")
    out.write(f"dimension {model.dimension}\n")
    for coef, vec in zip(model.coefficients, model.support_vectors):
        out.write(" ".join([_fmt(coef)] + [_fmt(v) for v in vec]) + "\n")
    return out.getvalue()


def loads_binary(text: str) -> BinarySvmModel:
    lines = text.splitlines()
    try:
        tag, version = lines[0].split()
        if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
            raise ValueError(f"unsupported model header {lines[0]!r}")
        header = {}
        for line in lines[1:5]:
            key, value = line.split(" ", 1)
            header[key] = value
        kernel = KernelSpec.parse(header["kernel"])
        bias = float(header["bias"])
        count = int(header["sv_count"])
        dim = int(header["dimension"])
        rows = [[float(t) for t in line.split()] for line in lines[5:5 + count]]
    except (IndexError, KeyError) as exc:
        raise ValueError(f"truncated or malformed model file: {exc}") from None
    if len(rows) != count or any(len(r) != dim + 1 for r in rows):
        raise ValueError("support vector block does not match header")
    data = np.array(rows, dtype=float).reshape(count, dim + 1)
    return BinarySvmModel(support_vectors=data[:, 1:], coefficients=data[:, 0],
                          bias=bias, kernel=kernel, dimension=dim)


def save_binary(model: BinarySvmModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_binary(model))


def load_binary(path) -> BinarySvmModel:
    with open(path) as fh:
        return loads_binary(fh.read())
