"""Experiment drivers: recovery curves, parameter sweeps and classification.

Every driver returns a :class:`Report` whose rows are
``(point, solver, metric, value, stddev)``.  Rows are sorted by a numeric
key before writing, so reports do not depend on execution order.  Each trial
draws its randomness from ``SeedSequence([seed, trial, m, s])`` and the
instance is shared by all solvers at that point.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .graph import Graph, WgmParams, grid_graph, read_edge_list
from .losses import Instance, LogisticParams
from .metrics import (auc, balanced_error, kfold_split, probability_of_recovery,
                      trimmed_trials)
from .solvers import ARMIJO, METHODS, SolverConfig, solve
from .synth import SynthSpec, synth_instance

log = logging.getLogger(__name__)

WORKERS_ENV = "GRAPHSTOIHT_WORKERS"
CSV_COLUMNS = ("point", "solver", "metric", "value", "stddev")
SCHEMA_VERSION = 1
SOLVER_SWITCHES = {name: key for key, name in METHODS.items()}
ALL_SOLVERS = ("GraphStoIHT", "GraphIHT", "StoIHT", "IHT")

DEFAULT_GRIDS = {
    "recovery_curve": tuple(range(5, 251, 5)),
    "block_size": (1, 2, 4, 8, 16, 24, 32, 40, 48, 56, 64, 180),
    "learning_rate": tuple(round(0.1 * k, 1) for k in range(1, 17)),
    "noise": tuple(range(2, 65, 2)),
}


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment.

    ``grid`` holds the swept values: ``m`` for recovery curves, ``b`` for
    block-size and noise sweeps and ``eta`` for learning-rate sweeps.
    ``m_grid`` is the list of observation counts scanned by the noise sweep.
    """

    kind: str
    grid: tuple = ()
    trials: int = 50
    seed: int = 0
    solvers: tuple = ALL_SOLVERS
    sparsities: tuple = (8,)
    m: int | None = None
    block_size: int | None = None
    learning_rate: float = 1.0
    noise_levels: tuple = (0.0,)
    m_grid: tuple = tuple(range(20, 251, 10))
    max_epochs: int = 500
    residual_tol: float = 1e-7
    threshold: float | None = None
    trim_fraction: float = 0.05
    rows: int = 16
    cols: int = 16
    graph_path: str | None = None
    signal_path: str | None = None
    validation_m: int | None = None
    validation_trials: int = 10
    eta_grid: tuple = (0.5, 1.0, 1.5)
    stall_epochs: int = 0

    def __post_init__(self):
        kinds = ("recovery_curve", "benchmark_graphs", "block_size", "learning_rate", "noise")
        if self.kind not in kinds:
            raise HarnessError(f"kind must be one of {kinds}, got {self.kind!r}")
        if not self.grid:
            default = DEFAULT_GRIDS.get(self.kind if self.kind != "benchmark_graphs"
                                        else "recovery_curve")
            object.__setattr__(self, "grid", default)
        for name in ("grid", "solvers", "sparsities", "noise_levels", "m_grid", "eta_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.trials < 1:
            raise HarnessError("trials must be at least 1")
        for s in self.solvers:
            if s not in SOLVER_SWITCHES:
                raise HarnessError(f"unknown solver {s!r}; choose from {ALL_SOLVERS}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Row:
    point: tuple
    solver: str
    metric: str
    value: float
    stddev: float = 0.0

    def point_text(self) -> str:
        return ";".join(f"{k}={_fmt(v)}" for k, v in self.point)


def _point_key(point: tuple) -> tuple:
    # numbers sort numerically and before labels such as "all"
    return tuple((k, (1, v) if isinstance(v, str) else (0, float(v))) for k, v in point)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


@dataclass
class Report:
    rows: list
    manifest: dict = field(default_factory=dict)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (_point_key(r.point), r.solver, r.metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.sorted_rows():
            w.writerow([r.point_text(), r.solver, r.metric, _fmt(r.value), _fmt(r.stddev)])
        return buf.getvalue()

    def write(self, directory: str | Path, name: str = "report") -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{name}.csv"
        path.write_text(self.to_csv())
        (d / f"{name}.manifest.json").write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True, default=str) + "\n")
        return path

    def select(self, metric: str | None = None, solver: str | None = None) -> list:
        return [r for r in self.sorted_rows()
                if (metric is None or r.metric == metric)
                and (solver is None or r.solver == solver)]


def pool_size() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise HarnessError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _map(fn, tasks: list) -> list:
    workers = min(pool_size(), len(tasks))
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def trial_seeds(seed: int, trial: int, m: int, s: int) -> tuple[int, int]:
    """Instance seed and solver seed for one trial."""
    a, b = np.random.SeedSequence([seed, trial, m, s]).generate_state(2)
    return int(a), int(b)


def _load_graph(spec: ExperimentSpec) -> Graph:
    if spec.graph_path:
        return read_edge_list(spec.graph_path)
    return grid_graph(spec.rows, spec.cols)


def _load_signal(spec: ExperimentSpec, p: int) -> np.ndarray | None:
    if not spec.signal_path:
        return None
    v = np.array([float(t) for t in Path(spec.signal_path).read_text().split()])
    if len(v) != p:
        raise HarnessError(f"{spec.signal_path}: {len(v)} values for a {p}-node graph")
    return v


def _solver_config(name: str, s: int, b: int, eta: float, spec: ExperimentSpec,
                   seed: int) -> SolverConfig:
    projection, batching = SOLVER_SWITCHES[name]
    return SolverConfig(WgmParams(s, 1), projection=projection, batching=batching,
                        learning_rate=eta, block_size=b, max_epochs=spec.max_epochs,
                        residual_tol=spec.residual_tol, seed=seed,
                        stall_epochs=spec.stall_epochs)


def _make_instance(graph: Graph, signal, s: int, m: int, noise: float, seed: int) -> Instance:
    inst = synth_instance(SynthSpec(graph, s, m, noise, seed))
    if signal is None:
        return inst
    # fixed signal: keep the drawn design and noise, swap the truth
    y = inst.A @ signal + inst.noise
    return Instance(inst.A, y, signal, inst.noise)


def _run_trial(task: dict) -> dict:
    graph = task["graph"]
    inst = _make_instance(graph, task["signal"], task["s"], task["m"], task["noise"],
                          task["inst_seed"])
    cfg = task["config"]
    try:
        trace = solve(inst, "lsq", cfg, graph)
    except Exception as exc:  # recorded per trial, not fatal
        return {"key": task["key"], "error": f"{type(exc).__name__}: {exc}",
                "final": float("inf"), "curve": [], "iter_curve": []}
    return {"key": task["key"], "error": None, "final": trace.final_error,
            "curve": trace.errors, "iter_curve": trace.iter_errors,
            "epochs": trace.epochs_run, "termination": trace.termination}


def _trimmed_stats(values, trim: float) -> tuple[float, float]:
    kept = trimmed_trials(values, trim)
    return float(np.mean(kept)), float(np.std(kept))


def _recovery_stats(finals, threshold, trim):
    kept = trimmed_trials(finals, trim)
    prob = probability_of_recovery(kept, threshold)
    hits = (kept <= threshold).astype(float)
    return prob, float(np.std(hits))


def _threshold(spec: ExperimentSpec, noise: float) -> float:
    if spec.threshold is not None:
        return spec.threshold
    return 1e-6 if noise == 0 else noise


def _manifest(spec: ExperimentSpec, t0: float, failures: list, extra: dict | None = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "kind": spec.kind, "seed": spec.seed,
           "config_hash": spec.config_hash(), "spec": asdict(spec),
           "wall_time_s": round(time.time() - t0, 3),
           "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
           "trial_failures": failures}
    out.update(extra or {})
    return out


def _failures(results: list) -> list:
    return [{"key": list(r["key"]), "error": r["error"]} for r in results if r["error"]]


def tune_learning_rates(spec: ExperimentSpec, graph: Graph, signal) -> dict:
    """Pick each solver's step size on separate validation instances.

    Uses ``validation_trials`` instances with ``validation_m`` observations
    and keeps the step size with the lowest trimmed-mean final error.
    """
    s = spec.sparsities[0]
    m = spec.validation_m
    tasks = []
    for name in spec.solvers:
        for eta in spec.eta_grid:
            for t in range(spec.validation_trials):
                # offset trial ids so validation never reuses a test instance
                inst_seed, solver_seed = trial_seeds(spec.seed, 10**6 + t, m, s)
                cfg = _solver_config(name, s, min(s, m), eta, spec, solver_seed)
                tasks.append({"key": (name, eta, t), "graph": graph, "signal": signal,
                              "s": s, "m": m, "noise": spec.noise_levels[0],
                              "inst_seed": inst_seed, "config": cfg})
    results = _map(_run_trial, tasks)
    chosen = {}
    for name in spec.solvers:
        scores = []
        for eta in spec.eta_grid:
            finals = [r["final"] for r in results if r["key"][:2] == (name, eta)]
            finals = np.nan_to_num(np.asarray(finals), nan=np.inf, posinf=1e300)
            scores.append((float(np.mean(trimmed_trials(finals, spec.trim_fraction))), eta))
        chosen[name] = min(scores)[1]
    return chosen


def run_recovery_curve(spec: ExperimentSpec) -> Report:
    """Probability of recovery for every (m, s, solver); block size ``min(s, m)``."""
    if spec.kind not in ("recovery_curve", "benchmark_graphs"):
        raise HarnessError(f"run_recovery_curve needs kind recovery_curve, got {spec.kind}")
    t0 = time.time()
    graph = _load_graph(spec)
    signal = _load_signal(spec, graph.num_nodes)
    sparsities = spec.sparsities
    if signal is not None:
        sparsities = (int(np.count_nonzero(signal)),)
    etas = {name: spec.learning_rate for name in spec.solvers}
    if spec.validation_m:
        etas = tune_learning_rates(replace(spec, sparsities=sparsities), graph, signal)
    noise = spec.noise_levels[0]
    tasks = []
    for m in spec.grid:
        for s in sparsities:
            for t in range(spec.trials):
                inst_seed, solver_seed = trial_seeds(spec.seed, t, m, s)
                for name in spec.solvers:
                    cfg = _solver_config(name, s, min(s, m), etas[name], spec, solver_seed)
                    tasks.append({"key": (m, s, name, t), "graph": graph, "signal": signal,
                                  "s": s, "m": m, "noise": noise,
                                  "inst_seed": inst_seed, "config": cfg})
    results = _map(_run_trial, tasks)
    threshold = _threshold(spec, noise)
    rows = []
    for m in spec.grid:
        for s in sparsities:
            for name in spec.solvers:
                finals = [r["final"] for r in results if r["key"][:3] == (m, s, name)]
                prob, sd = _recovery_stats(finals, threshold, spec.trim_fraction)
                rows.append(Row((("m", m), ("s", s)), name, "recovery_probability", prob, sd))
    return Report(rows, _manifest(spec, t0, _failures(results), {"learning_rates": etas}))


def _curve_rows(results, keys, point_of, name, trim, length, metric, field_name="curve"):
    rows = []
    for key in keys:
        curves = [r[field_name] for r in results if r["key"][:len(key)] == key]
        mat = np.full((len(curves), length), np.nan)
        for i, c in enumerate(curves):
            if c:
                c = np.asarray(c[:length], dtype=float)
                mat[i, :len(c)] = c
                mat[i, len(c):] = c[-1]  # a stopped run keeps its last error
            else:
                mat[i, :] = np.inf
        for j in range(length):
            mean, sd = _trimmed_stats(np.nan_to_num(mat[:, j], nan=np.inf), trim)
            rows.append(Row(point_of(key) + (("epoch", j + 1),), name, metric, mean, sd))
    return rows


def run_sweep(spec: ExperimentSpec) -> Report:
    """Block-size, learning-rate or noise sweep of the stochastic methods."""
    t0 = time.time()
    graph = _load_graph(spec)
    signal = _load_signal(spec, graph.num_nodes)
    s = spec.sparsities[0]
    if spec.kind == "block_size":
        m = spec.m or 180
        tasks = []
        for b in spec.grid:
            for t in range(spec.trials):
                inst_seed, solver_seed = trial_seeds(spec.seed, t, m, s)
                for name in spec.solvers:
                    cfg = _solver_config(name, s, min(b, m), spec.learning_rate, spec, solver_seed)
                    tasks.append({"key": (b, name, t), "graph": graph, "signal": signal, "s": s,
                                  "m": m, "noise": 0.0, "inst_seed": inst_seed, "config": cfg})
        results = _map(_run_trial, tasks)
        rows = []
        for name in spec.solvers:
            rows += _curve_rows(results, [(b, name) for b in spec.grid],
                                lambda k: (("b", k[0]),), name, spec.trim_fraction,
                                spec.max_epochs, "estimation_error")
        return Report(rows, _manifest(spec, t0, _failures(results), {"m": m}))

    if spec.kind == "learning_rate":
        m = spec.m or 80
        b = spec.block_size or 8
        tasks = []
        for eta in spec.grid:
            for t in range(spec.trials):
                inst_seed, solver_seed = trial_seeds(spec.seed, t, m, s)
                for name in spec.solvers:
                    cfg = _solver_config(name, s, min(b, m), eta, spec, solver_seed)
                    tasks.append({"key": (eta, name, t), "graph": graph, "signal": signal, "s": s,
                                  "m": m, "noise": 0.0, "inst_seed": inst_seed, "config": cfg})
        results = _map(_run_trial, tasks)
        rows = []
        for name in spec.solvers:
            rows += _curve_rows(results, [(eta, name) for eta in spec.grid],
                                lambda k: (("eta", k[0]),), name, spec.trim_fraction,
                                spec.max_epochs, "estimation_error")
        return Report(rows, _manifest(spec, t0, _failures(results), {"m": m, "b": b}))

    if spec.kind == "noise":
        return _noise_sweep(spec, graph, signal, t0)
    raise HarnessError(f"run_sweep cannot run kind {spec.kind!r}")


def _noise_sweep(spec: ExperimentSpec, graph, signal, t0) -> Report:
    """Smallest m reaching probability one, per (b, noise level, solver).

    For each combination the m grid is scanned upward and stops at the first
    m whose trimmed trials all succeed.
    """
    s = spec.sparsities[0]
    rows, all_results = [], []
    for noise in spec.noise_levels:
        threshold = _threshold(spec, noise)
        for b in spec.grid:
            for name in spec.solvers:
                required = float("nan")
                for m in spec.m_grid:
                    tasks = []
                    for t in range(spec.trials):
                        inst_seed, solver_seed = trial_seeds(spec.seed, t, m, s)
                        cfg = _solver_config(name, s, min(b, m), spec.learning_rate, spec,
                                             solver_seed)
                        tasks.append({"key": (noise, b, name, m, t), "graph": graph,
                                      "signal": signal, "s": s, "m": m, "noise": noise,
                                      "inst_seed": inst_seed, "config": cfg})
                    results = _map(_run_trial, tasks)
                    all_results += results
                    prob, sd = _recovery_stats([r["final"] for r in results], threshold,
                                               spec.trim_fraction)
                    rows.append(Row((("noise", noise), ("b", b), ("m", m)), name,
                                    "recovery_probability", prob, sd))
                    if prob == 1.0:
                        required = m
                        break
                rows.append(Row((("noise", noise), ("b", b)), name, "required_m", required, 0.0))
    return Report(rows, _manifest(spec, t0, _failures(all_results)))


# -- classification -----------------------------------------------------------

def read_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with the label (+1/-1) in the first column and features after it.

    A first line whose fields are not all numeric is treated as a header.
    """
    labels, feats = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), 1):
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                if lineno == 1 and not labels:
                    continue
                raise HarnessError(f"{path}:{lineno}: non-numeric field") from None
            if len(vals) < 2:
                raise HarnessError(f"{path}:{lineno}: need a label and at least one feature")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise HarnessError(f"{path}:{lineno}: expected {width} fields, found {len(vals)}")
            if vals[0] not in (1.0, -1.0):
                raise HarnessError(f"{path}:{lineno}: label {fields[0].strip()!r} is not +1 or -1")
            if not np.all(np.isfinite(vals)):
                raise HarnessError(f"{path}:{lineno}: non-finite value")
            labels.append(vals[0])
            feats.append(vals[1:])
    if not labels:
        raise HarnessError(f"{path}: no data rows")
    return np.asarray(feats), np.asarray(labels)


def zscore(X: np.ndarray) -> np.ndarray:
    """Center each column and scale it to unit standard deviation (constant columns stay zero)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


@dataclass(frozen=True)
class ClassificationGrid:
    sparsities: tuple = tuple(range(10, 101, 5))
    lambdas: tuple = (1e-3, 1e-4)
    block_fractions: tuple = (1.0, 0.5)
    max_epochs: int = 40


def _fit_logistic(X, y, graph, name, s, lam, frac, grid: ClassificationGrid, seed: int):
    projection, batching = SOLVER_SWITCHES[name]
    m = len(y)
    b = max(1, int(round(frac * m)))
    cfg = SolverConfig(WgmParams(min(s, X.shape[1]), 1), projection=projection,
                       batching=batching, learning_rate=ARMIJO, block_size=min(b, m),
                       max_epochs=grid.max_epochs, seed=seed)
    inst = Instance(X, y, classification=True)
    return solve(inst, "logistic", cfg, graph, LogisticParams(lam))


def _params_grid(grid: ClassificationGrid, name: str):
    fracs = grid.block_fractions if SOLVER_SWITCHES[name][1] == "stochastic" else (1.0,)
    return [(s, lam, f) for s in grid.sparsities for lam in sorted(grid.lambdas) for f in fracs]


def _select(X, y, graph, name, grid, k, rng, seed):
    """Inner cross-validation; best mean AUC, ties to smaller s then smaller lambda."""
    folds = kfold_split(len(y), k, rng)
    best = None
    for s, lam, frac in _params_grid(grid, name):
        scores = []
        for i, val in enumerate(folds):
            tr = np.concatenate([f for j, f in enumerate(folds) if j != i])
            if len(np.unique(y[val])) < 2 or len(np.unique(y[tr])) < 2:
                continue
            trace = _fit_logistic(X[tr], y[tr], graph, name, s, lam, frac, grid, seed)
            scores.append(auc(X[val] @ trace.final_x, y[val]))
        mean = float(np.mean(scores)) if scores else 0.0
        key = (-mean, s, lam, -frac)
        if best is None or key < best[0]:
            best = (key, (s, lam, frac), mean)
    return best[1], best[2]


def run_classification(dataset_path, graph_path, cv: int = 5,
                       grid: ClassificationGrid | None = None,
                       solvers: tuple = ALL_SOLVERS, seed: int = 0,
                       inner_cv: int | None = None) -> Report:
    """Nested cross-validated sparse logistic regression on a CSV dataset."""
    t0 = time.time()
    grid = grid or ClassificationGrid()
    X, y = read_dataset(dataset_path)
    graph = read_edge_list(graph_path) if isinstance(graph_path, (str, Path)) else graph_path
    if graph.num_nodes != X.shape[1]:
        raise HarnessError(f"graph has {graph.num_nodes} nodes but data has {X.shape[1]} features")
    X = zscore(X)
    rng = np.random.default_rng(seed)
    folds = kfold_split(len(y), cv, rng)
    rows, selections = [], []
    per = {name: {"auc": [], "balanced_error": [], "support_size": []} for name in solvers}
    for fold, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != fold])
        for name in solvers:
            inner_rng = np.random.default_rng([seed, fold])
            (s, lam, frac), val_auc = _select(X[train], y[train], graph, name, grid,
                                              inner_cv or cv, inner_rng, seed)
            trace = _fit_logistic(X[train], y[train], graph, name, s, lam, frac, grid, seed)
            scores = X[test] @ trace.final_x
            pred = np.where(scores >= 0, 1.0, -1.0)
            fold_auc = auc(scores, y[test])
            fold_ber = balanced_error(pred, y[test])
            size = int(np.count_nonzero(trace.final_x))
            steps = [e for e in trace.step_sizes if e > 0]
            point = (("fold", fold),)
            rows += [Row(point, name, "auc", fold_auc),
                     Row(point, name, "balanced_error", fold_ber),
                     Row(point, name, "support_size", size),
                     Row(point, name, "selected_s", s),
                     Row(point, name, "selected_lambda", lam),
                     Row(point, name, "mean_step_size", float(np.mean(steps)) if steps else 0.0)]
            per[name]["auc"].append(fold_auc)
            per[name]["balanced_error"].append(fold_ber)
            per[name]["support_size"].append(size)
            selections.append({"fold": fold, "solver": name, "s": s, "lambda": lam,
                               "block_fraction": frac, "validation_auc": val_auc})
    for name in solvers:
        for metric, vals in per[name].items():
            rows.append(Row((("fold", "all"),), name, metric, float(np.mean(vals)),
                            float(np.std(vals))))
    manifest = {"schema_version": SCHEMA_VERSION, "kind": "classification", "seed": seed,
                "dataset": str(dataset_path), "folds": cv, "grid": asdict(grid),
                "selections": selections, "wall_time_s": round(time.time() - t0, 3),
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    return Report(rows, manifest)
