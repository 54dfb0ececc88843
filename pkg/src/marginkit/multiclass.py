"""Multiclass SVMs from binary machines: one-vs-one voting, DDAG and one-vs-all.

Every decision returns an :class:`EvalStats` recording how many machines and
how many kernel evaluations against support vectors it cost. Kernel values can
be shared across machines within one decision (``share_kernel=True``), in
which case each distinct support vector is evaluated at most once per probe.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import svm
from .kernels import LINEAR, gram
from .svm import BinarySvmModel, SmoConfig

VOTING = "voting"
DDAG = "ddag"
ONE_VS_ALL = "ova"
SCHEMES = (VOTING, DDAG, ONE_VS_ALL)

MANIFEST = "manifest.txt"
MANIFEST_TAG = "marginkit-multiclass"

Pair = Tuple[int, int]


@dataclass
class EvalStats:
    machine_evaluations: int = 0
    vector_evaluations: int = 0
    unique_sv_total: int = 0
    decision_path: List[Pair] = field(default_factory=list)


@dataclass
class MulticlassSvmModel:
    """Bank of binary machines.

    ``machines[(i, j)]`` (``i < j``) outputs positive for class ``i`` and
    negative for class ``j``. One-vs-all models keep their ``c`` machines in
    ``ova_machines`` and leave ``machines`` empty.
    """

    class_count: int
    machines: Dict[Pair, BinarySvmModel]
    scheme_default: str = VOTING
    ova_machines: Optional[List[BinarySvmModel]] = None

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("a multiclass model needs at least 2 classes")
        if self.scheme_default not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme_default!r}")
        bank = list(self.machines.values()) + list(self.ova_machines or [])
        if not bank:
            raise ValueError("model has no machines")
        if self.machines and set(self.machines) != set(pairs(self.class_count)):
            raise ValueError(f"expected the {len(pairs(self.class_count))} pairwise machines")
        if self.scheme_default == ONE_VS_ALL and len(self.ova_machines or []) != self.class_count:
            raise ValueError("one-vs-all needs one machine per class")
        kinds = {m.kernel.kind for m in bank}
        dims = {m.dimension for m in bank}
        if len(kinds) != 1 or len(dims) != 1:
            raise ValueError("all machines must share kernel family and input dimension")
        self.dimension = dims.pop()
        self._pool = None
        self._compact = None

    @property
    def kernel(self):
        return next(iter(self.machines.values() or self.ova_machines)).kernel

    def sv_pool(self):
        """Distinct support vectors across the pairwise bank plus, per machine,
        the pool index of each of its support vectors."""
        if self._pool is None:
            keys = sorted(self.machines)
            stacked = [self.machines[k].support_vectors for k in keys]
            allv = np.vstack(stacked) if stacked else np.zeros((0, self.dimension))
            if len(allv):
                pool, inverse = np.unique(allv, axis=0, return_inverse=True)
                inverse = inverse.reshape(-1)
            else:
                pool, inverse = allv, np.zeros(0, dtype=int)
            index, start = {}, 0
            for k, block in zip(keys, stacked):
                index[k] = inverse[start:start + len(block)]
                start += len(block)
            self._pool = (pool, index)
        return self._pool

    def compact_machines(self):
        if self._compact is None:
            self._compact = {k: svm.compact_linear(m) for k, m in self.machines.items()}
        return self._compact


def pairs(c: int) -> List[Pair]:
    return list(combinations(range(c), 2))


def _check_multiclass_input(samples, labels, c):
    X = np.asarray(samples, dtype=float)
    y = np.asarray(labels)
    if c < 2:
        raise ValueError("need at least 2 classes")
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("samples must be an (n, d) array matching labels")
    if np.any((y < 0) | (y >= c)) or not np.all(y == np.round(y)):
        raise ValueError(f"labels must be integers in [0, {c})")
    y = y.astype(int)
    counts = np.bincount(y, minlength=c)
    for k in range(c):
        if counts[k] == 0:
            raise ValueError(f"class {k} has no samples")
    return X, y


def _train_pair(args):
    X, y, i, j, config = args
    mask = (y == i) | (y == j)
    return svm.smo_train(X[mask], np.where(y[mask] == i, 1.0, -1.0), config)


def _run(jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_train_pair, jobs))
    return [_train_pair(job) for job in jobs]


def train_one_vs_one(samples, labels, c: int, config: SmoConfig, scheme_default=VOTING,
                     workers: int = 1) -> MulticlassSvmModel:
    """Train the ``c(c-1)/2`` pairwise machines; class ``i`` is the positive label of ``(i, j)``.

    Results are assembled by pair key, so the model does not depend on
    ``workers``.
    """
    X, y = _check_multiclass_input(samples, labels, c)
    keys = pairs(c)
    models = _run([(X, y, i, j, config) for i, j in keys], workers)
    return MulticlassSvmModel(c, dict(zip(keys, models)), scheme_default)


def _train_rest(args):
    X, y, k, config = args
    return svm.smo_train(X, np.where(y == k, 1.0, -1.0), config)


def train_one_vs_all(samples, labels, c: int, config: SmoConfig, workers: int = 1) -> MulticlassSvmModel:
    X, y = _check_multiclass_input(samples, labels, c)
    jobs = [(X, y, k, config) for k in range(c)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(_train_rest, jobs))
    else:
        models = [_train_rest(job) for job in jobs]
    return MulticlassSvmModel(c, {}, ONE_VS_ALL, ova_machines=models)


class _Evaluator:
    """Serves raw machine outputs for one probe and accounts for their cost."""

    def __init__(self, model, share_kernel, compact, outputs=None, x=None):
        if compact and model.kernel.kind != LINEAR:
            raise ValueError("compact evaluation needs linear machines")
        self.model = model
        self.share = share_kernel and not compact
        self.compact = compact
        self.outputs = outputs
        self.x = x
        self.stats = EvalStats()
        if self.share:
            pool, self.index = model.sv_pool()
            self.pool = pool
            self.seen = np.zeros(len(pool), dtype=bool)
            if outputs is None:
                self.kvals = np.zeros(len(pool))

    def __call__(self, key):
        m = self.model.machines[key]
        st = self.stats
        st.machine_evaluations += 1
        st.decision_path.append(key)
        if self.share:
            idx = self.index[key]
            fresh = idx[~self.seen[idx]]
            fresh = np.unique(fresh)
            st.vector_evaluations += len(fresh)
            if self.outputs is None and len(fresh):
                self.kvals[fresh] = gram(m.kernel, self.x[None, :], self.pool[fresh])[0]
            self.seen[fresh] = True
        elif not self.compact:
            st.vector_evaluations += m.n_support
        if self.outputs is not None:
            return self.outputs[key]
        if self.compact:
            return self.model.compact_machines()[key].output(self.x)
        if self.share:
            return float(m.coefficients @ self.kvals[self.index[key]] + m.bias) if m.n_support else m.bias
        return svm.svm_output(m, self.x)


def _vote(model, ev):
    c = model.class_count
    votes = np.zeros(c, dtype=int)
    margins = np.zeros(c)
    for i, j in pairs(c):
        out = ev((i, j))
        if out >= 0:
            votes[i] += 1
            margins[i] += out
        else:
            votes[j] += 1
            margins[j] -= out
    tied = np.flatnonzero(votes == votes.max())
    if len(tied) > 1:
        best = margins[tied].max()
        tied = tied[margins[tied] == best]
    return int(tied[0])


def _ddag(model, ev):
    candidates = list(range(model.class_count))
    while len(candidates) > 1:
        i, j = candidates[0], candidates[-1]
        if ev((i, j)) >= 0:
            candidates.pop()
        else:
            candidates.pop(0)
    return candidates[0]


def _probe(model, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != model.dimension:
        raise ValueError(f"dimension mismatch: expected {model.dimension}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input has non-finite components")
    return x


def _finish(model, ev):
    ev.stats.unique_sv_total = unique_support_vectors(model) if model.machines else 0
    return ev.stats


def decide_voting(model: MulticlassSvmModel, x, share_kernel=False, compact=False):
    """Majority vote over all pairwise machines.

    Ties go to the class with the largest summed margin over the contests it
    won, then to the lowest class index.
    """
    if not model.machines:
        raise ValueError("voting needs a one-vs-one model")
    ev = _Evaluator(model, share_kernel, compact, x=_probe(model, x))
    cls = _vote(model, ev)
    return cls, _finish(model, ev)


def decide_ddag(model: MulticlassSvmModel, x, share_kernel=False, compact=False):
    """Sequential elimination over the ascending class list, first vs last."""
    if not model.machines:
        raise ValueError("DDAG needs a one-vs-one model")
    ev = _Evaluator(model, share_kernel, compact, x=_probe(model, x))
    cls = _ddag(model, ev)
    return cls, _finish(model, ev)


def decide_one_vs_all(model: MulticlassSvmModel, x):
    if not model.ova_machines:
        raise ValueError("model was not trained one-vs-all")
    x = _probe(model, x)
    outs = [svm.svm_output(m, x) for m in model.ova_machines]
    stats = EvalStats(machine_evaluations=len(outs),
                      vector_evaluations=sum(m.n_support for m in model.ova_machines))
    return int(np.argmax(outs)), stats


def decide(model: MulticlassSvmModel, x, scheme=None, **kwargs):
    scheme = scheme or model.scheme_default
    if scheme == VOTING:
        return decide_voting(model, x, **kwargs)
    if scheme == DDAG:
        return decide_ddag(model, x, **kwargs)
    if scheme == ONE_VS_ALL:
        return decide_one_vs_all(model, x)
    raise ValueError(f"unknown scheme {scheme!r}")


def machine_outputs(model: MulticlassSvmModel, X, compact=False) -> Dict[Pair, np.ndarray]:
    """Raw outputs of every pairwise machine on every row of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dimension:
        raise ValueError(f"dimension mismatch: expected (n, {model.dimension}), got {X.shape}")
    if compact:
        return {k: cm.decision_values(X) for k, cm in model.compact_machines().items()}
    return {k: m.decision_values(X) for k, m in model.machines.items()}


def predict(model: MulticlassSvmModel, X, scheme=None, share_kernel=False, compact=False):
    """Decide every row of ``X``; returns ``(classes, list of EvalStats)``.

    Machine outputs are computed in one vectorised sweep; the per-probe stats
    account only for the machines the scheme actually visits.
    """
    scheme = scheme or model.scheme_default
    X = np.asarray(X, dtype=float)
    if scheme == ONE_VS_ALL:
        results = [decide_one_vs_all(model, x) for x in X]
        return np.array([r[0] for r in results], dtype=int), [r[1] for r in results]
    if scheme not in (VOTING, DDAG):
        raise ValueError(f"unknown scheme {scheme!r}")
    table = machine_outputs(model, X, compact=compact)
    core = _vote if scheme == VOTING else _ddag
    unique_total = unique_support_vectors(model)
    preds, stats = [], []
    for r in range(len(X)):
        row = {k: float(v[r]) for k, v in table.items()}
        ev = _Evaluator(model, share_kernel, compact, outputs=row)
        preds.append(core(model, ev))
        ev.stats.unique_sv_total = unique_total
        stats.append(ev.stats)
    return np.array(preds, dtype=int), stats


def unique_support_vectors(model: MulticlassSvmModel) -> int:
    """Number of distinct support vectors (exact equality) across the pairwise bank."""
    return len(model.sv_pool()[0])


def save_multiclass(model: MulticlassSvmModel, path) -> None:
    """Write ``manifest.txt`` plus one binary model file per machine into ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for (i, j), m in sorted(model.machines.items()):
        name = f"m_{i}_{j}"
        svm.save_binary(m, root / name)
        names.append(name)
    for k, m in enumerate(model.ova_machines or []):
        name = f"ova_{k}"
        svm.save_binary(m, root / name)
        names.append(name)
    with open(root / MANIFEST, "w") as fh:
        fh.write(f"{MANIFEST_TAG} 1\n")
        fh.write(f"classes {model.class_count}\n")
        fh.write(f"scheme {model.scheme_default}\n")
        fh.write(f"machines {' '.join(names)}\n")


def load_multiclass(path) -> MulticlassSvmModel:
    root = Path(path)
    with open(root / MANIFEST) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split()[0] != MANIFEST_TAG:
        raise ValueError(f"{root / MANIFEST} is not a multiclass manifest")
    header = dict(line.split(" ", 1) for line in lines[1:] if line.strip())
    c = int(header["classes"])
    machines, ova = {}, {}
    for name in header.get("machines", "").split():
        m = svm.load_binary(root / name)
        parts = name.split("_")
        if parts[0] == "m":
            machines[(int(parts[1]), int(parts[2]))] = m
        elif parts[0] == "ova":
            ova[int(parts[1])] = m
        else:
            raise ValueError(f"unknown machine file {name!r}")
    ova_list = [ova[k] for k in sorted(ova)] or None
    return MulticlassSvmModel(c, machines, header["scheme"], ova_machines=ova_list)


def is_multiclass_dir(path) -> bool:
    return os.path.isdir(path) and os.path.exists(os.path.join(path, MANIFEST))
