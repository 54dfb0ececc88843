"""Experiment machinery: datasets, stratified splits, hyperparameter grids,
hidden-size sweeps and decision-scheme benchmarks."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import multiclass, neural
from .kernels import KernelSpec, heuristic_sigma2
from .metrics import accuracy_and_per_class_recall, build_confusion, cohen_kappa
from .svm import SmoConfig, SmoConvergenceError

log = logging.getLogger(__name__)

SURFACE_HEADER = "c_reg,sigma2,kappa,kappa_ci,unique_sv_total,avg_vec_evals_ddag,avg_vec_evals_voting,converged"
DEFAULT_C_VALUES = tuple(10.0 ** k for k in range(-2, 9))
AUTO = "auto"


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    c: int

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("samples must be (n, d) and match labels in length")
        if len(y) and (np.any(y < 0) or np.any(y >= self.c)):
            raise ValueError(f"labels must lie in [0, {self.c})")
        object.__setattr__(self, "samples", X)
        object.__setattr__(self, "labels", y.astype(int))

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.samples[idx], self.labels[idx], self.c)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)


def load_csv_dataset(path, has_header: bool = False) -> Dataset:
    """Rows are ``label, x1, ..., xn``; the class count is ``1 + max label``."""
    labels, rows, width = [], [], None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise ValueError(f"{path}: line {lineno}: expected {width} columns, got {len(rec)}")
            try:
                label = float(rec[0])
                values = [float(cell) for cell in rec[1:]]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric cell") from None
            if label != int(label) or label < 0:
                raise ValueError(f"{path}: line {lineno}: label must be a nonnegative integer")
            if len(values) == 0:
                raise ValueError(f"{path}: line {lineno}: row has no features")
            labels.append(int(label))
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    return Dataset(np.array(rows), np.array(labels), max(labels) + 1)


def save_csv_dataset(d: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        for label, row in zip(d.labels, d.samples):
            fh.write(",".join([str(int(label))] + [repr(float(v)) for v in row]) + "\n")


def split_half(d: Dataset, seed: int = 0):
    """Stratified 50/50 split; odd class counts give the extra sample to train."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for k in range(d.c):
        idx = np.flatnonzero(d.labels == k)
        if len(idx) < 2:
            raise ValueError(f"class {k} has {len(idx)} samples; need at least 2 to split")
        idx = rng.permutation(idx)
        cut = (len(idx) + 1) // 2
        train.append(idx[:cut])
        test.append(idx[cut:])
    return d.subset(np.sort(np.concatenate(train))), d.subset(np.sort(np.concatenate(test)))


def make_synthetic_blobs(c: int, n: int, per_class: int, spread: float, seed: int = 0,
                         scale: float = 1.0) -> Dataset:
    """Seeded Gaussian clouds around distinct centres.

    Centres sit at ``scale * e_k`` on the unit axes, then at ``-scale * e_k``;
    beyond ``2 n`` classes they are seeded random directions of norm ``scale``.
    """
    if c < 2 or per_class < 2:
        raise ValueError("need c >= 2 and per_class >= 2")
    if n < 1 or spread < 0:
        raise ValueError("need n >= 1 and spread >= 0")
    rng = np.random.default_rng(seed)
    centers = np.zeros((c, n))
    for k in range(c):
        if k < 2 * n:
            centers[k, k % n] = scale if k < n else -scale
        else:
            v = rng.normal(size=n)
            centers[k] = scale * v / np.linalg.norm(v)
    X = np.repeat(centers, per_class, axis=0)
    if spread > 0:
        X = X + spread * rng.normal(size=X.shape)
    return Dataset(X, np.repeat(np.arange(c), per_class), c)


# -- SVM hyperparameter surfaces ---------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """``sigma2_values=None`` means a geometric ladder over [H/100, 100 H]
    around the heuristic width H of the training set."""

    c_values: Sequence[float] = DEFAULT_C_VALUES
    sigma2_values: Optional[Sequence[float]] = None
    refine_rounds: int = 1
    refine_factor: float = 3.0
    fine_points: int = 5

    def __post_init__(self):
        for name in ("c_values", "sigma2_values"):
            vals = getattr(self, name)
            if vals is None:
                continue
            vals = tuple(float(v) for v in vals)
            if not vals or any(v <= 0 for v in vals):
                raise ValueError(f"{name} must be non-empty and positive")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        if self.refine_rounds < 0 or self.refine_factor <= 1 or self.fine_points < 1:
            raise ValueError("need refine_rounds >= 0, refine_factor > 1, fine_points >= 1")


@dataclass
class GridSurfaceRow:
    c_reg: float
    sigma2: float
    kappa: Optional[float]
    kappa_ci: Optional[float]
    unique_sv_total: Optional[int]
    avg_vector_evals_ddag: Optional[float]
    avg_vector_evals_voting: Optional[float]
    converged: bool
    kappa_voting: Optional[float] = None

    def to_csv(self) -> str:
        def f(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(v) if isinstance(v, float) else str(v)
        return ",".join(f(v) for v in (self.c_reg, self.sigma2, self.kappa, self.kappa_ci,
                                       self.unique_sv_total, self.avg_vector_evals_ddag,
                                       self.avg_vector_evals_voting, self.converged))


def surface_csv(rows: Sequence[GridSurfaceRow]) -> str:
    return SURFACE_HEADER + "\n" + "".join(r.to_csv() + "\n" for r in rows)


def sigma2_ladder(h: float, points: int = 5) -> List[float]:
    """Geometric ladder from h/100 to 100 h."""
    return [float(h * 10.0 ** e) for e in np.linspace(-2, 2, points)]


def _log_step(values):
    if len(values) < 2:
        return math.log(10.0)
    return float(np.mean(np.diff(np.log(values))))


def _evaluate_cell(train: Dataset, validation: Dataset, c_reg: float, sigma2: float,
                   base: SmoConfig, workers: int) -> GridSurfaceRow:
    config = replace(base, c_reg=c_reg, kernel=KernelSpec.gaussian(sigma2))
    try:
        model = multiclass.train_one_vs_one(train.samples, train.labels, train.c, config, workers=workers)
    except SmoConvergenceError as exc:
        log.info("cell C=%g sigma2=%g did not converge: %s", c_reg, sigma2, exc)
        return GridSurfaceRow(c_reg, sigma2, None, None, None, None, None, False)
    pred_ddag, st_ddag = multiclass.predict(model, validation.samples, multiclass.DDAG, share_kernel=True)
    pred_vote, st_vote = multiclass.predict(model, validation.samples, multiclass.VOTING, share_kernel=True)
    k_ddag = cohen_kappa(build_confusion(validation.labels, pred_ddag, validation.c))
    k_vote = cohen_kappa(build_confusion(validation.labels, pred_vote, validation.c))
    return GridSurfaceRow(
        c_reg, sigma2, k_ddag.kappa, k_ddag.ci95_half_width,
        multiclass.unique_support_vectors(model),
        float(np.mean([s.vector_evaluations for s in st_ddag])),
        float(np.mean([s.vector_evaluations for s in st_vote])),
        True, kappa_voting=k_vote.kappa)


def _best(rows):
    scored = [r for r in rows if r.converged and r.kappa is not None]
    if not scored:
        return None
    return max(scored, key=lambda r: r.kappa)  # max keeps the first of equal kappas


def grid_search_svm(train: Dataset, validation: Dataset, grid: GridSpec = GridSpec(),
                    smo_defaults: SmoConfig = SmoConfig(), workers: int = 1,
                    heuristic_seed: int = 0) -> List[GridSurfaceRow]:
    """Coarse-to-fine (C, sigma2) search for one-vs-one Gaussian SVMs.

    Every coarse cell is trained and scored on ``validation`` (the ``kappa``
    column is the DDAG kappa; vector-evaluation averages count each distinct
    support vector once per probe). Each refinement round re-centres a
    ``fine_points x fine_points`` geometric grid on the best cell so far, with
    log spacing shrunk by ``refine_factor``; cells already evaluated are not
    repeated. Non-convergent cells are kept with ``converged=False``.
    """
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    s_values = grid.sigma2_values
    if s_values is None:
        s_values = sigma2_ladder(heuristic_sigma2(train.samples, seed=heuristic_seed).sigma2)
    c_values = list(grid.c_values)

    rows, seen = [], set()

    def visit(c_reg, sigma2):
        key = (round(math.log(c_reg), 9), round(math.log(sigma2), 9))
        if key in seen:
            return
        seen.add(key)
        rows.append(_evaluate_cell(train, validation, c_reg, sigma2, smo_defaults, workers))

    for c_reg in c_values:
        for sigma2 in s_values:
            visit(c_reg, sigma2)

    step_c, step_s = _log_step(c_values), _log_step(s_values)
    offsets = np.arange(grid.fine_points) - (grid.fine_points - 1) / 2
    for _ in range(grid.refine_rounds):
        best = _best(rows)
        if best is None:
            break
        step_c /= grid.refine_factor
        step_s /= grid.refine_factor
        for oc in offsets:
            for os_ in offsets:
                visit(float(best.c_reg * math.exp(oc * step_c)), float(best.sigma2 * math.exp(os_ * step_s)))
    return rows


# -- neural network sweeps ----------------------------------------------------

@dataclass
class SweepRun:
    hidden: int
    init: str
    seed: int
    kappa: Optional[float] = None
    kappa_ci: Optional[float] = None
    zero_recall_classes: Optional[int] = None
    epochs: int = 0
    converged: bool = False
    final_mse: Optional[float] = None
    error: Optional[str] = None


@dataclass
class SweepSummary:
    hidden: int
    init: str
    best_kappa: Optional[float]
    best_ci: Optional[float]
    best_seed: Optional[int]
    mean_kappa: Optional[float]
    zero_recall_classes: Optional[int]  # of the best run
    max_zero_recall_classes: Optional[int]
    runs: int


@dataclass
class SweepResult:
    runs: List[SweepRun] = field(default_factory=list)
    summary: List[SweepSummary] = field(default_factory=list)

    TABLE_HEADER = "algorithm,init,hidden,kappa,kappa_ci,mean_kappa,zero_recall_classes,max_zero_recall_classes,runs"

    def table_csv(self) -> str:
        out = io.StringIO()
        out.write(self.TABLE_HEADER + "\n")
        for s in self.summary:
            vals = ["rprop", s.init, s.hidden, s.best_kappa, s.best_ci, s.mean_kappa,
                    s.zero_recall_classes, s.max_zero_recall_classes, s.runs]
            out.write(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v))
                               for v in vals) + "\n")
        return out.getvalue()

    def best_per_init(self):
        """Rows shaped like (algorithm, init scheme, "kappa +- ci", hidden count)."""
        table = []
        for init in dict.fromkeys(s.init for s in self.summary):
            cands = [s for s in self.summary if s.init == init and s.best_kappa is not None]
            if not cands:
                continue
            b = max(cands, key=lambda s: s.best_kappa)
            table.append(("RProp", INIT_LABELS.get(init, init),
                          f"{b.best_kappa:.4f} ± {b.best_ci:.3f}", b.hidden))
        return table


INIT_LABELS = {neural.UNIFORM: "Uniform (random)", neural.NGUYEN_WIDROW: "Nguyen-Widrow"}


def _init_model(init, dims, seed, activation, uniform_range):
    if init == neural.UNIFORM:
        return neural.init_uniform(dims, uniform_range, seed, activation)
    if init == neural.NGUYEN_WIDROW:
        return neural.init_nguyen_widrow(dims, seed, activation)
    raise ValueError(f"unknown init scheme {init!r}")


def train_mlp(train: Dataset, hidden: int, init: str = neural.NGUYEN_WIDROW,
              config: neural.RpropConfig = neural.RpropConfig(), activation: str = neural.SIGMOID,
              soft_targets: bool = True, uniform_range: float = 0.5):
    model = _init_model(init, (train.dimension, hidden, train.c), config.seed, activation, uniform_range)
    targets = neural.one_of_c(train.labels, train.c, activation, soft_targets)
    return neural.rprop_train(model, train.samples, targets, config)


def hidden_size_sweep(train: Dataset, validation: Dataset, sizes: Sequence[int],
                      inits: Sequence[str] = (neural.UNIFORM, neural.NGUYEN_WIDROW),
                      config: neural.RpropConfig = neural.RpropConfig(), seeds: Sequence[int] = (0,),
                      activation: str = neural.SIGMOID, soft_targets: bool = True,
                      uniform_range: float = 0.5) -> SweepResult:
    """Train one network per (size, init, seed) and score it on ``validation``.

    Training failures are recorded on the run and the sweep continues.
    """
    if not sizes:
        raise ValueError("sizes must be non-empty")
    result = SweepResult()
    for h in sizes:
        for init in inits:
            runs = []
            for seed in seeds:
                run = SweepRun(int(h), init, int(seed))
                try:
                    model, report = train_mlp(train, int(h), init, replace(config, seed=int(seed)),
                                              activation, soft_targets, uniform_range)
                    pred = neural.mlp_predict(model, validation.samples)
                    cm = build_confusion(validation.labels, pred, validation.c)
                    k = cohen_kappa(cm)
                    _, recall, empty = accuracy_and_per_class_recall(cm)
                    run.kappa, run.kappa_ci = k.kappa, k.ci95_half_width
                    run.zero_recall_classes = int(np.sum((recall == 0) & ~empty))
                    run.epochs, run.converged, run.final_mse = report.epochs_run, report.converged, report.final_mse
                except (ValueError, FloatingPointError) as exc:
                    run.error = str(exc)
                    log.warning("sweep run h=%s init=%s seed=%s failed: %s", h, init, seed, exc)
                runs.append(run)
            result.runs.extend(runs)
            ok = [r for r in runs if r.kappa is not None]
            best = max(ok, key=lambda r: r.kappa) if ok else None
            result.summary.append(SweepSummary(
                int(h), init,
                best.kappa if best else None, best.kappa_ci if best else None,
                best.seed if best else None,
                float(np.mean([r.kappa for r in ok])) if ok else None,
                best.zero_recall_classes if best else None,
                max((r.zero_recall_classes for r in ok), default=None),
                len(runs)))
    return result


# -- decision scheme benchmark ------------------------------------------------

@dataclass
class SchemeReport:
    scheme: str
    kappa: object  # KappaReport
    avg_machine_evals: float
    avg_vector_evals: float
    avg_unique_vector_evals: float


@dataclass
class BenchmarkReport:
    class_count: int
    test_size: int
    unique_sv_total: int
    sv_sum: int
    compact: bool
    schemes: Dict[str, SchemeReport]

    def to_text(self) -> str:
        lines = [f"classes = {self.class_count}", f"test_size = {self.test_size}",
                 f"unique_sv_total = {self.unique_sv_total}", f"sv_sum = {self.sv_sum}",
                 f"compact = {str(self.compact).lower()}"]
        for name, s in self.schemes.items():
            lines += [f"{name}.kappa = {s.kappa.kappa!r}",
                      f"{name}.kappa_ci = {s.kappa.ci95_half_width!r}",
                      f"{name}.kappa_variance = {s.kappa.variance!r}",
                      f"{name}.avg_machine_evals = {s.avg_machine_evals!r}",
                      f"{name}.avg_vector_evals = {s.avg_vector_evals!r}",
                      f"{name}.avg_unique_vector_evals = {s.avg_unique_vector_evals!r}"]
        return "\n".join(lines) + "\n"


def benchmark_decision_schemes(model: multiclass.MulticlassSvmModel, test: Dataset,
                               compact: bool = False) -> BenchmarkReport:
    """Score ``test`` under voting and DDAG with both kernel-counting modes."""
    if test.dimension != model.dimension:
        raise ValueError(f"test dimension {test.dimension} != model dimension {model.dimension}")
    schemes = {}
    for scheme in (multiclass.VOTING, multiclass.DDAG):
        pred, per_machine = multiclass.predict(model, test.samples, scheme, share_kernel=False, compact=compact)
        _, shared = multiclass.predict(model, test.samples, scheme, share_kernel=True, compact=compact)
        k = cohen_kappa(build_confusion(test.labels, pred, model.class_count))
        schemes[scheme] = SchemeReport(
            scheme, k,
            float(np.mean([s.machine_evaluations for s in per_machine])),
            float(np.mean([s.vector_evaluations for s in per_machine])),
            float(np.mean([s.vector_evaluations for s in shared])))
    return BenchmarkReport(model.class_count, len(test), multiclass.unique_support_vectors(model),
                           sum(m.n_support for m in model.machines.values()), compact, schemes)


# -- configuration --------------------------------------------------------------

ENV_PREFIX = "MF_"


def load_config(path=None, environ=None) -> Dict[str, str]:
    """Flat ``key = value`` file overlaid by ``MF_<KEY>`` environment variables."""
    cfg: Dict[str, str] = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                cfg[key.strip().lower().replace("-", "_")] = value.strip()
    environ = os.environ if environ is None else environ
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX) and len(key) > len(ENV_PREFIX):
            cfg[key[len(ENV_PREFIX):].lower()] = value
    return cfg
