"""Batch command line: ``marginkit <command> [options]``.

Option defaults can come from a flat ``key = value`` config file
(``--config``) or ``MF_<KEY>`` environment variables; explicit flags win.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import imageprep, multiclass, neural
from .harness import (Dataset, GridSpec, benchmark_decision_schemes, grid_search_svm,
                      hidden_size_sweep, load_config, load_csv_dataset, make_synthetic_blobs,
                      save_csv_dataset, split_half, surface_csv, train_mlp, DEFAULT_C_VALUES)
from .kernels import KernelSpec, resolve
from .metrics import build_confusion, cohen_kappa
from .svm import SmoConfig, SmoConvergenceError

log = logging.getLogger("marginkit")


def _floats(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


class _Settings:
    """Flag value, else config/env value, else the built-in default."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg

    def get(self, name, default=None, cast=str):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.cfg:
            raw = self.cfg[name]
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default


def _smo_config(s, kernel):
    return SmoConfig(c_reg=s.get("c", 1.0, float), kernel=kernel,
                     kkt_tolerance=s.get("tol", 1e-3, float),
                     max_passes=s.get("max_passes", None, int),
                     seed=s.get("seed", 0, int))


def _rprop_config(s):
    return neural.RpropConfig(max_epochs=s.get("epochs", 1000, int),
                              mse_tolerance=s.get("mse_tol", 1e-6, float),
                              seed=s.get("seed", 0, int))


def cmd_preprocess(s):
    """Class sub-directories of PGM images become CSV sample rows."""
    root = Path(s.get("in_dir"))
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise SystemExit(f"{root}: expected one sub-directory of PGM images per class")
    names = [p.name for p in class_dirs]
    if all(n.isdigit() for n in names):
        labels = [int(n) for n in names]
    else:
        labels = list(range(len(names)))
        for n, k in zip(names, labels):
            print(f"class {k} = {n}")
    invert = s.get("invert", False, bool)
    stage_dir = s.get("stage_dir")
    rows, ys = [], []
    for label, d in zip(labels, class_dirs):
        for path in sorted(d.glob("*.pgm")):
            img = imageprep.read_pgm(path)
            t = imageprep.otsu_threshold(img)
            small = imageprep.resize_to_32(imageprep.crop_and_center(img, t, invert=invert))
            if stage_dir:
                out = Path(stage_dir) / d.name
                out.mkdir(parents=True, exist_ok=True)
                imageprep.write_pgm(small, out / path.name)
            rows.append(imageprep.vectorize(small))
            ys.append(label)
    if not rows:
        raise SystemExit(f"{root}: no .pgm images found")
    save_csv_dataset(Dataset(np.array(rows), np.array(ys), max(ys) + 1), s.get("out"))
    print(f"wrote {len(rows)} samples to {s.get('out')}")


def cmd_train_svm(s):
    data = load_csv_dataset(s.get("data"))
    kernel = resolve(KernelSpec.parse(s.get("kernel", "linear")), data.samples, seed=s.get("seed", 0, int))
    config = _smo_config(s, kernel)
    scheme = s.get("scheme", multiclass.VOTING)
    workers = s.get("workers", 1, int)
    if scheme == multiclass.ONE_VS_ALL:
        model = multiclass.train_one_vs_all(data.samples, data.labels, data.c, config, workers=workers)
    else:
        model = multiclass.train_one_vs_one(data.samples, data.labels, data.c, config, scheme, workers=workers)
    multiclass.save_multiclass(model, s.get("model_out"))
    nsv = multiclass.unique_support_vectors(model) if model.machines else sum(
        m.n_support for m in model.ova_machines)
    print(f"kernel = {kernel}\nclasses = {data.c}\nunique_sv_total = {nsv}")


def cmd_train_mlp(s):
    data = load_csv_dataset(s.get("data"))
    model, report = train_mlp(data, s.get("hidden", 10, int), s.get("init", neural.NGUYEN_WIDROW),
                              _rprop_config(s), s.get("activation", neural.SIGMOID),
                              not s.get("strict_targets", False, bool))
    neural.save_mlp(model, s.get("model_out"))
    print(f"epochs = {report.epochs_run}\nfinal_mse = {report.final_mse!r}\n"
          f"converged = {str(report.converged).lower()}")


def _predict(model_path, data, scheme):
    if multiclass.is_multiclass_dir(model_path):
        model = multiclass.load_multiclass(model_path)
        return multiclass.predict(model, data.samples, scheme)[0], model.class_count
    if neural.is_mlp_file(model_path):
        model = neural.load_mlp(model_path)
        return neural.mlp_predict(model, data.samples), model.output_dim
    raise SystemExit(f"{model_path}: not a marginkit model")


def cmd_evaluate(s):
    data = load_csv_dataset(s.get("data"))
    pred, c = _predict(s.get("model"), data, s.get("scheme"))
    report = cohen_kappa(build_confusion(data.labels, pred, max(c, data.c)))
    sys.stdout.write(report.to_text())


def cmd_grid_search(s):
    data = load_csv_dataset(s.get("data"))
    train, validation = split_half(data, s.get("seed", 0, int))
    c_grid = s.get("c_grid", "default")
    s_grid = s.get("sigma2_grid", "auto")
    grid = GridSpec(c_values=DEFAULT_C_VALUES if c_grid == "default" else _floats(c_grid),
                    sigma2_values=None if s_grid == "auto" else _floats(s_grid),
                    refine_rounds=s.get("refine", 1, int))
    base = SmoConfig(kkt_tolerance=s.get("tol", 1e-3, float), max_passes=s.get("max_passes", None, int),
                     seed=s.get("seed", 0, int))
    rows = grid_search_svm(train, validation, grid, base, workers=s.get("workers", 1, int),
                           heuristic_seed=s.get("seed", 0, int))
    Path(s.get("out")).write_text(surface_csv(rows))
    print(f"wrote {len(rows)} surface rows to {s.get('out')}")


def cmd_sweep_mlp(s):
    data = load_csv_dataset(s.get("data"))
    train, validation = split_half(data, s.get("seed", 0, int))
    result = hidden_size_sweep(train, validation, _ints(s.get("sizes", "10")),
                               config=_rprop_config(s), seeds=list(range(s.get("seeds", 1, int))),
                               activation=s.get("activation", neural.SIGMOID))
    Path(s.get("out")).write_text(result.table_csv())
    for row in result.best_per_init():
        print(" | ".join(str(v) for v in row))


def cmd_benchmark(s):
    model = multiclass.load_multiclass(s.get("model"))
    data = load_csv_dataset(s.get("data"))
    data = Dataset(data.samples, data.labels, max(data.c, model.class_count))
    report = benchmark_decision_schemes(model, data, compact=s.get("compact", False, bool))
    text = report.to_text()
    if s.get("out"):
        Path(s.get("out")).write_text(text)
    sys.stdout.write(text)


def cmd_synth(s):
    d = make_synthetic_blobs(s.get("classes", 3, int), s.get("dim", 2, int), s.get("per_class", 10, int),
                             s.get("spread", 0.1, float), s.get("seed", 0, int))
    save_csv_dataset(d, s.get("out"))
    print(f"wrote {len(d)} samples to {s.get('out')}")


def build_parser():
    p = argparse.ArgumentParser(prog="marginkit", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("preprocess", help="PGM class folders -> CSV of 1024-d vectors")
    c.add_argument("--in", dest="in_dir", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--invert", action="store_true", default=None)
    c.add_argument("--stage-dir", help="also write the 32x32 PGMs here")
    c.set_defaults(func=cmd_preprocess)

    c = sub.add_parser("train-svm", help="train a multiclass SVM")
    c.add_argument("--data", required=True)
    c.add_argument("--kernel", help="linear | poly:<d>:<offset> | gauss:<sigma2> | gauss:auto")
    c.add_argument("--c", type=float)
    c.add_argument("--scheme", choices=multiclass.SCHEMES)
    c.add_argument("--model-out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--tol", type=float)
    c.add_argument("--max-passes", type=int)
    c.add_argument("--workers", type=int)
    c.set_defaults(func=cmd_train_svm)

    c = sub.add_parser("train-mlp", help="train a one-hidden-layer network with Rprop")
    c.add_argument("--data", required=True)
    c.add_argument("--hidden", type=int)
    c.add_argument("--init", choices=(neural.UNIFORM, neural.NGUYEN_WIDROW))
    c.add_argument("--model-out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--epochs", type=int)
    c.add_argument("--activation", choices=neural.ACTIVATIONS)
    c.add_argument("--strict-targets", action="store_true", default=None)
    c.set_defaults(func=cmd_train_mlp)

    c = sub.add_parser("evaluate", help="kappa report of a model on a dataset")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--scheme", choices=multiclass.SCHEMES)
    c.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("grid-search", help="coarse-to-fine (C, sigma2) surface for Gaussian SVMs")
    c.add_argument("--data", required=True)
    c.add_argument("--c-grid", help="comma list or 'default'")
    c.add_argument("--sigma2-grid", help="comma list or 'auto'")
    c.add_argument("--refine", type=int)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--tol", type=float)
    c.add_argument("--max-passes", type=int)
    c.add_argument("--workers", type=int)
    c.set_defaults(func=cmd_grid_search)

    c = sub.add_parser("sweep-mlp", help="hidden-size sweep, uniform vs Nguyen-Widrow")
    c.add_argument("--data", required=True)
    c.add_argument("--sizes", help="comma list of hidden counts")
    c.add_argument("--seeds", type=int, help="number of seeds per size")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, help="split seed")
    c.add_argument("--epochs", type=int)
    c.add_argument("--activation", choices=neural.ACTIVATIONS)
    c.set_defaults(func=cmd_sweep_mlp)

    c = sub.add_parser("benchmark", help="voting vs DDAG accuracy and evaluation cost")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out")
    c.add_argument("--compact", action="store_true", default=None)
    c.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("synth", help="write a synthetic Gaussian-blob dataset")
    c.add_argument("--classes", type=int)
    c.add_argument("--dim", type=int)
    c.add_argument("--per-class", type=int)
    c.add_argument("--spread", type=float)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(_Settings(args, load_config(args.config)))
    except (ValueError, OSError) as exc:
        print(f"marginkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SmoConvergenceError as exc:
        print(f"marginkit {args.command}: error: {exc} "
              f"(best dual objective {exc.best_objective:.6g})", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
