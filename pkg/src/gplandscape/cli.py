"""Command-line entry point: ``gplandscape <command> [--config FILE] [--set k=v ...]``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
Data files are deterministic for a given config; wall times go to
``manifest.json`` (and ``timing.csv`` for optimize-nu) only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import __version__
from .config import ConfigError, RunConfig, from_dict, load
from .data import load_csv, load_dataset, save_dataset, schwefel_dataset, split
from .ensemble import (
    ensemble_advisor,
    fit_members,
    improvement_csv,
    improvement_report,
    weights_csv,
)
from .gp import GPObjective, dataset_mse, fit_gp, posterior_predict
from .hyperspace import space_for
from .kernel import Hyperparameters
from .landscape import ExplorationError, explore_gp, local_minimize
from .nu_sweep import (
    cluster_minima,
    clusters_csv,
    detect_folds,
    folds_csv,
    nu_grid,
    pca_csv,
    sweep,
)
from .transitions import (
    LandscapeGraph,
    connect_all,
    disconnectivity_tree,
    export_graph,
    minima_ts_dump,
)

log = logging.getLogger("gplandscape")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class NumericalFailure(RuntimeError):
    pass


# helpers ----------------------------------------------------------------------


class Outputs:
    """Writes files into the run directory and remembers their hashes."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, data) -> Path:
        raw = data.encode("utf-8") if isinstance(data, str) else bytes(data)
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, sort_keys=True, indent=1) + "\n")

    def manifest(self, command: str, cfg: RunConfig, wall_time: float, extra=None) -> None:
        body = {
            "command": command,
            "code_version": __version__,
            "config_sha256": cfg.digest(),
            "config": cfg.to_dict(),
            "seeds": {
                "dataset": cfg.dataset.seed,
                "split": cfg.dataset.split_seed,
                "landscape": cfg.landscape.seed,
                "fit": cfg.fit.seed,
            },
            "wall_time_s": round(wall_time, 3),
            "outputs": dict(sorted(self.files.items())),
        }
        if extra:
            body.update(extra)
        path = self.root / "manifest.json"
        path.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")


def load_data(cfg: RunConfig):
    """``(train, test)`` per the dataset section."""
    ds = cfg.dataset
    std_x = ds.standardize_features
    if std_x is None:
        std_x = ds.source != "schwefel"
    try:
        if ds.source == "schwefel":
            full = schwefel_dataset(ds.d, ds.n, ds.low, ds.high, ds.seed)
        elif ds.source == "csv":
            full = load_csv(ds.path, ds.target, ds.delimiter)
        else:
            full = load_dataset(ds.path)
        return split(full, ds.test_fraction, ds.split_seed, standardize_features=std_x,
                     standardize_targets=ds.standardize_targets)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"dataset: {exc}") from None


def make_space(cfg: RunConfig, train, nu_free=None, nu=None):
    k = cfg.kernel
    return space_for(
        train,
        nu_free=k.nu_free if nu_free is None else nu_free,
        nu=k.nu if nu is None else nu,
        nu_max=k.nu_max,
        isotropic=k.isotropic,
        scale_lengthscales=k.scale_lengthscales,
        log_amplitude_bounds=tuple(k.log_amplitude_bounds),
        log_lengthscale_bounds=tuple(k.log_lengthscale_bounds),
        log_noise_bounds=tuple(k.log_noise_bounds),
    )


def _csv_rows(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.10g}" if isinstance(v, float) else v)
                    for v in r])
    return buf.getvalue()


def minima_csv(minima) -> str:
    rows = []
    for m in minima:
        hp = m.hyperparameters
        rows.append((m.id, float(m.loss), float(m.grad_norm),
                     None if hp is None else float(hp.nu),
                     m.spectral_norm, m.log_occupation, m.train_mse, m.test_mse))
    return _csv_rows(["id", "loss", "grad_norm", "nu", "spectral_norm", "log_occupation",
                      "train_mse", "test_mse"], rows)


def _graph_outputs(out: Outputs, graph: LandscapeGraph, n_levels: int, prefix: str = ""):
    out.write_json(f"{prefix}graph.json", graph.to_dict())
    tree = disconnectivity_tree(graph, n_levels)
    for fmt in ("json", "dot", "svg"):
        out.write(f"{prefix}tree.{fmt}", export_graph(tree, fmt))
    mins, ts = minima_ts_dump(graph)
    out.write(f"{prefix}min.data", mins)
    out.write(f"{prefix}ts.data", ts)


def explore(cfg: RunConfig, train, test, space):
    return explore_gp(train, space, cfg.landscape.basin_hopping(), test=test)


# commands ---------------------------------------------------------------------


def cmd_schwefel_gen(cfg: RunConfig, out: Outputs, args) -> dict:
    ds = cfg.dataset
    data = schwefel_dataset(ds.d, ds.n, ds.low, ds.high, ds.seed)
    buf = io.BytesIO()
    save_dataset(data, buf)
    out.write("dataset.npz", buf.getvalue())
    header = [f"x{i}" for i in range(ds.d)] + ["y"]
    rows = [tuple(float(v) for v in x) + (float(y),) for x, y in zip(data.X, data.y)]
    out.write("dataset.csv", _csv_rows(header, rows))
    return {"n": ds.n, "d": ds.d}


def cmd_fit(cfg: RunConfig, out: Outputs, args) -> dict:
    """Best of ``fit.n_starts`` local fits from random starts."""
    train, test = load_data(cfg)
    space = make_space(cfg, train)
    obj = GPObjective(train, space)
    rng = np.random.default_rng(cfg.fit.seed)
    best = None
    for _ in range(cfg.fit.n_starts):
        r = local_minimize(space.sample_start(rng), obj, cfg.landscape.local_tol,
                           cfg.landscape.max_local_iter)
        if r.converged and (best is None or r.loss < best.loss):
            best = r
    if best is None:
        raise NumericalFailure("no local fit converged")
    hp = space.from_vector(best.theta)
    model = fit_gp(train, hp)
    buf = io.BytesIO()
    save_dataset(train, buf)
    out.write("train.npz", buf.getvalue())
    out.write_json("model.json", {
        "hyperparameters": hp.to_dict(),
        "theta": [float(v) for v in best.theta],
        "train_data": "train.npz",
    })
    metrics = {
        "nlml": float(best.loss),
        "grad_norm": float(best.grad_norm),
        "train_mse": dataset_mse(model, train),
        "test_mse": dataset_mse(model, test),
        "nu": float(hp.nu),
    }
    out.write_json("metrics.json", metrics)
    return metrics


def cmd_predict(cfg: RunConfig, out: Outputs, args) -> dict:
    """Predict at raw feature rows of ``--input`` with a model written by ``fit``."""
    if not args.model or not args.input:
        raise ConfigError("predict needs --model and --input")
    model_path = Path(args.model)
    try:
        spec = json.loads(model_path.read_text())
        hp = Hyperparameters.from_dict(spec["hyperparameters"])
        train = load_dataset(model_path.parent / spec["train_data"])
        raw = np.loadtxt(args.input, delimiter=",", ndmin=2, skiprows=args.skip_header)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load model or input: {exc}") from None
    if raw.shape[1] != train.d:
        raise ConfigError(f"input has {raw.shape[1]} columns, model expects {train.d}")
    model = fit_gp(train, hp)
    pred = posterior_predict(model, train.transform_X(raw), include_noise=args.include_noise)
    rows = [(float(m), float(v)) for m, v in zip(pred.mean, pred.variance)]
    out.write("predictions.csv", _csv_rows(["mean", "variance"], rows))
    return {"n_points": len(rows), "n_clamped": pred.n_clamped}


def cmd_landscape(cfg: RunConfig, out: Outputs, args) -> dict:
    train, test = load_data(cfg)
    space = make_space(cfg, train)
    res = explore(cfg, train, test, space)
    out.write_json("minima.json", {"names": space.names(),
                                   "minima": [m.to_dict() for m in res.minima]})
    out.write("minima.csv", minima_csv(res.minima))
    out.write_json("exploration.json", res.stats)
    summary = {"n_minima": len(res.minima), "best_loss": float(res.minima[0].loss)}
    if cfg.landscape.transitions:
        graph = connect_all(res.minima, GPObjective(train, space),
                            pair_budget=cfg.landscape.pair_budget,
                            n_images=cfg.landscape.n_images, k_spring=cfg.landscape.k_spring,
                            coords=space.canonical, local_tol=cfg.landscape.local_tol,
                            saddle_tol=cfg.landscape.local_tol)
        _graph_outputs(out, graph, cfg.landscape.n_levels)
        summary["n_transitions"] = len(graph.transitions)
    return summary


def cmd_export_graph(cfg: RunConfig, out: Outputs, args) -> dict:
    if not args.graph:
        raise ConfigError("export-graph needs --graph")
    try:
        graph = LandscapeGraph.from_dict(json.loads(Path(args.graph).read_text()))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read graph: {exc}") from None
    tree = disconnectivity_tree(graph, cfg.landscape.n_levels)
    for fmt in args.format:
        out.write(f"tree.{fmt}", export_graph(tree, fmt))
    return {"n_leaves": len(tree.leaves), "n_roots": len(tree.roots)}


def cmd_sweep_nu(cfg: RunConfig, out: Outputs, args) -> dict:
    train, test = load_data(cfg)
    space = make_space(cfg, train, nu_free=False)
    s = cfg.sweep
    grid = nu_grid(s.nu_start, s.nu_stop, s.nu_step)
    res = sweep(train, space, grid, cfg.landscape.basin_hopping(), test=test,
                warm_start=s.warm_start)
    if not any(res.per_nu.values()):
        raise NumericalFailure("no minima at any grid value")
    cluster_minima(res, coords=space.canonical)
    graphs = None
    if cfg.landscape.transitions:
        graphs = {}
        for nu in grid:
            if not res.per_nu.get(nu):
                continue
            sp = space.with_nu(nu)
            graphs[nu] = connect_all(res.per_nu[nu], GPObjective(train, sp),
                                     pair_budget=cfg.landscape.pair_budget,
                                     n_images=cfg.landscape.n_images,
                                     k_spring=cfg.landscape.k_spring,
                                     coords=sp.canonical, local_tol=cfg.landscape.local_tol,
                                     saddle_tol=cfg.landscape.local_tol)
            _graph_outputs(out, graphs[nu], cfg.landscape.n_levels, prefix=f"graphs/nu_{nu:g}/")
    events = detect_folds(res, graphs)
    out.write("sweep.json", res.to_json())
    out.write("clusters.csv", clusters_csv(res))
    out.write("pca.csv", pca_csv(res, coords=space.canonical))
    out.write("folds.csv", folds_csv(events))
    return {"grid_size": len(grid), "n_minima": len(res.minima()),
            "n_clusters": len(set(res.labels.values())), "n_folds": len(events)}


def _optimize_job(cfg_dict: dict, repeat: int, free: bool):
    cfg = from_dict(cfg_dict)
    cfg.dataset.seed = cfg.dataset.seed + repeat
    cfg.dataset.split_seed = cfg.dataset.split_seed + repeat
    cfg.landscape.seed = cfg.landscape.seed + repeat
    train, test = load_data(cfg)
    space = make_space(cfg, train, nu_free=free, nu=None if free else cfg.optimize_nu.fixed_nu)
    t0 = time.perf_counter()
    res = explore(cfg, train, test, space)
    wall = time.perf_counter() - t0
    bt = min(res.minima, key=lambda m: m.test_mse)
    br = min(res.minima, key=lambda m: m.train_mse)
    row = (cfg.dataset.n, repeat, "free" if free else "fixed", len(res.minima),
           float(bt.test_mse), float(bt.hyperparameters.nu), float(br.train_mse),
           float(br.hyperparameters.nu))
    return row, wall


def _pool_map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


def cmd_optimize_nu(cfg: RunConfig, out: Outputs, args) -> dict:
    """Best test MSE with nu optimized against nu fixed, over repeated splits."""
    jobs = [(cfg.to_dict(), r, free) for r in range(cfg.optimize_nu.repeats)
            for free in (True, False)]
    results = _pool_map(_optimize_job, jobs, args.workers)
    rows = [r for r, _ in results]
    out.write("table1.csv", _csv_rows(
        ["n", "repeat", "mode", "n_minima", "best_test_mse", "best_test_nu",
         "best_train_mse", "best_train_nu"], rows))
    out.write("timing.csv", _csv_rows(
        ["repeat", "mode", "wall_time_s"],
        [(r[1], r[2], round(w, 3)) for r, w in results]))
    med = {}
    for mode in ("free", "fixed"):
        med[mode] = float(np.median([r[4] for r in rows if r[2] == mode]))
    summary = {"median_best_test_mse_free": med["free"],
               "median_best_test_mse_fixed": med["fixed"],
               "free_not_worse": med["free"] <= med["fixed"]}
    out.write_json("summary.json", summary)
    return summary


def cmd_ensemble(cfg: RunConfig, out: Outputs, args) -> dict:
    train, test = load_data(cfg)
    space = make_space(cfg, train)
    res = explore(cfg, train, test, space)
    members = res.minima
    models = fit_members(members, train, space)
    schemes = tuple(cfg.ensemble.schemes)
    norm = improvement_report(members, models, test, schemes, normalize=True)
    raw = improvement_report(members, models, test, schemes, normalize=False)
    out.write("ensemble.csv", improvement_csv(norm))
    out.write("normalization.csv", improvement_csv(norm + raw))
    out.write("weights.csv", weights_csv(members, schemes))
    out.write("minima.csv", minima_csv(members))
    adv = ensemble_advisor(members, cfg.ensemble.threshold)
    advice = {"recommendation": adv.recommendation, "n_minima": adv.n_minima,
              "threshold": adv.threshold, "loss_spread": adv.loss_spread,
              "weight_entropy": adv.weight_entropy}
    out.write_json("advice.json", advice)
    return {"advice": adv.recommendation,
            "improvement_pct": {r.scheme: round(r.improvement_pct, 4) for r in norm}}


COMMANDS = {
    "fit": cmd_fit,
    "landscape": cmd_landscape,
    "sweep-nu": cmd_sweep_nu,
    "optimize-nu": cmd_optimize_nu,
    "ensemble": cmd_ensemble,
    "schwefel-gen": cmd_schwefel_gen,
    "predict": cmd_predict,
    "export-graph": cmd_export_graph,
}


# entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field (repeatable)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int,
                        help="shorthand for dataset.seed, dataset.split_seed, "
                             "landscape.seed and fit.seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for independent jobs (default: all CPUs)")
    common.add_argument("--log-level", default="WARNING")

    p = argparse.ArgumentParser(prog="gplandscape", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "predict":
            sp.add_argument("--model", help="model.json written by fit")
            sp.add_argument("--input", help="CSV of raw feature rows")
            sp.add_argument("--skip-header", type=int, default=0, metavar="N")
            sp.add_argument("--include-noise", action="store_true")
        if name == "export-graph":
            sp.add_argument("--graph", help="graph.json written by landscape")
            sp.add_argument("--format", nargs="+", default=["svg"],
                            choices=["json", "dot", "svg"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides += [f"{k}={args.seed}" for k in
                          ("dataset.seed", "dataset.split_seed", "landscape.seed", "fit.seed")]
        if args.out:
            overrides.append(f"output_dir={args.out}")
        cfg = load(args.config, overrides)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Outputs(cfg.output_path())
        t0 = time.perf_counter()
        summary = COMMANDS[args.command](cfg, out, args)
        out.manifest(args.command, cfg, time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ExplorationError, ArithmeticError, LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
