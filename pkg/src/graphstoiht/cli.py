"""Command line entry point.

Subcommands::

    recover    recovery probability versus number of observations
    sweep      block-size, learning-rate or noise sweep
    classify   cross-validated sparse logistic regression on a CSV dataset
    project    head or tail projection of a vector onto a graph model
    pcst       prize-collecting Steiner forest of a graph
    gen        write a synthetic instance directory

Experiment options may come from a ``key = value`` config file (``--config``);
command-line flags override it.  Config keys are the long flag names with
dashes or underscores, e.g. ``trials = 20`` or ``m_grid = 40,80,120``.
Set ``GRAPHSTOIHT_WORKERS`` to run trials in a process pool.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .graph import GraphError, WgmParams, grid_graph, read_edge_list, write_edge_list
from .harness import (ALL_SOLVERS, ClassificationGrid, ExperimentSpec, HarnessError,
                      run_classification, run_recovery_curve, run_sweep)
from .pcst import PcstInstance, penalty, solve_pcst
from .projections import ProjectionConfig, head_projection, tail_projection
from .synth import SynthSpec, save_instance, synth_instance

log = logging.getLogger("graphstoiht")


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(" ", "").split(",") if t)


def _names(text: str) -> tuple:
    return tuple(t for t in text.replace(" ", "").split(",") if t)


def read_config(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HarnessError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _read_values(path: str | Path) -> np.ndarray:
    return np.array([float(t) for t in Path(path).read_text().split()], dtype=np.float64)


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--solvers", type=_names, help=f"comma list from {','.join(ALL_SOLVERS)}")
    p.add_argument("--sparsity", type=_ints, dest="sparsities", help="comma list of s")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--graph", dest="graph_path", help="edge-list graph instead of a grid")
    p.add_argument("--stall-epochs", type=int, help="stop when the residual stalls this long")


# field name -> parser for values read from a config file
_SPEC_FIELDS = {
    "grid": _floats, "trials": int, "seed": int, "solvers": _names, "sparsities": _ints,
    "m": int, "block_size": int, "learning_rate": float, "noise_levels": _floats,
    "m_grid": _ints, "max_epochs": int, "residual_tol": float, "threshold": float,
    "trim_fraction": float, "rows": int, "cols": int, "graph_path": str,
    "signal_path": str, "stall_epochs": int, "validation_m": int,
    "validation_trials": int, "eta_grid": _floats,
}


def _spec_from(args, kind: str, grid_parser=_ints) -> ExperimentSpec:
    values = {}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in _SPEC_FIELDS:
                raise HarnessError(f"{args.config}: unknown key {key!r}")
            parse = grid_parser if key == "grid" else _SPEC_FIELDS[key]
            values[key] = parse(raw)
    for key in _SPEC_FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    grid = values.pop("grid", ())
    if kind == "learning_rate":
        grid = tuple(float(g) for g in grid)
    else:
        grid = tuple(int(g) for g in grid)
    return ExperimentSpec(kind, grid=grid, **values)


def cmd_recover(args) -> int:
    spec = _spec_from(args, "benchmark_graphs" if args.signal_path else "recovery_curve")
    report = run_recovery_curve(spec)
    path = report.write(args.out, "recovery")
    print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    spec = _spec_from(args, args.kind, _floats if args.kind == "learning_rate" else _ints)
    report = run_sweep(spec)
    path = report.write(args.out, f"sweep_{args.kind}")
    print(f"wrote {path}")
    return 0


def cmd_classify(args) -> int:
    grid = ClassificationGrid(
        sparsities=args.s_grid or ClassificationGrid.sparsities,
        lambdas=args.lambda_grid or ClassificationGrid.lambdas,
        block_fractions=args.block_fractions or ClassificationGrid.block_fractions,
        max_epochs=args.max_epochs)
    report = run_classification(args.data, args.graph, cv=args.folds, grid=grid,
                                solvers=args.solvers or ALL_SOLVERS, seed=args.seed)
    path = report.write(args.out, "classification")
    print(f"wrote {path}")
    return 0


def cmd_project(args) -> int:
    graph = read_edge_list(args.graph)
    x = _read_values(args.vector)
    wgm = WgmParams(args.s, args.g)
    if args.kind == "head":
        cfg = ProjectionConfig.head(graph.num_nodes, wgm, args.omega, s_low=args.s_low)
        res = head_projection(x, graph, cfg)
    else:
        cfg = ProjectionConfig.tail(wgm, args.omega)
        res = tail_projection(x, graph, cfg)
    total = float(np.dot(x, x))
    kept = float(np.dot(res.vector, res.vector))
    print("support", " ".join(map(str, res.support)))
    print(f"size {res.achieved_sparsity} window [{cfg.s_low}, {cfg.s_high}] "
          f"pcst_calls {res.iterations_used}")
    if total > 0:
        print(f"captured_ratio {kept / total:.12g} residual_ratio {(total - kept) / total:.12g}")
    return 0


def cmd_pcst(args) -> int:
    graph = read_edge_list(args.graph)
    prizes = _read_values(args.prizes)
    inst = PcstInstance(graph, prizes, args.g, args.scale)
    forest = solve_pcst(inst)
    print("nodes", " ".join(map(str, forest.nodes)))
    print("edges", " ".join(f"{u}-{v}" for u, v in graph.edges[forest.edges]))
    print(f"objective {forest.objective:.12g} penalty {penalty(inst, forest):.12g}")
    return 0


def cmd_gen(args) -> int:
    graph = read_edge_list(args.graph) if args.graph else grid_graph(args.rows, args.cols)
    spec = SynthSpec(graph, args.s, args.m, args.noise, args.seed)
    inst = synth_instance(spec)
    out = Path(args.out)
    save_instance(inst, out, {"s": args.s, "m": args.m, "noise_norm": args.noise,
                              "seed": args.seed})
    write_edge_list(graph, out / "graph.txt")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphstoiht", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recover", help="recovery probability versus m")
    _add_experiment_args(p)
    p.add_argument("--m-grid", type=_ints, dest="grid", help="comma list of m")
    p.add_argument("--noise", type=_floats, dest="noise_levels")
    p.add_argument("--signal", dest="signal_path", help="fixed signal file for a given graph")
    p.add_argument("--validation-m", type=int, help="tune step sizes on instances of this size")
    p.add_argument("--validation-trials", type=int)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("sweep", help="block-size, learning-rate or noise sweep")
    _add_experiment_args(p)
    p.add_argument("--kind", required=True, choices=("block_size", "learning_rate", "noise"))
    p.add_argument("--grid", type=str, help="comma list of swept values")
    p.add_argument("--m", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--m-grid", type=_ints)
    p.add_argument("--noise", type=_floats, dest="noise_levels")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("classify", help="cross-validated logistic regression")
    p.add_argument("--data", required=True, help="CSV: label (+1/-1) then features")
    p.add_argument("--graph", required=True, help="edge-list graph over features")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--s-grid", type=_ints)
    p.add_argument("--lambda-grid", type=_floats)
    p.add_argument("--block-fractions", type=_floats)
    p.add_argument("--max-epochs", type=int, default=40)
    p.add_argument("--solvers", type=_names)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("project", help="head or tail projection of a vector")
    p.add_argument("--kind", required=True, choices=("head", "tail"))
    p.add_argument("--graph", required=True)
    p.add_argument("--vector", required=True, help="one value per line")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--omega", type=float, default=0.1)
    p.add_argument("--s-low", type=int, help="head lower bound (default p/2)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("pcst", help="prize-collecting Steiner forest")
    p.add_argument("--graph", required=True)
    p.add_argument("--prizes", required=True, help="one prize per line")
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--scale", type=float, default=1.0, help="edge cost multiplier")
    p.set_defaults(func=cmd_pcst)

    p = sub.add_parser("gen", help="write a synthetic instance")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=16)
    p.add_argument("--cols", type=int, default=16)
    p.add_argument("--graph")
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--m", type=int, default=120)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "command", None) == "sweep" and args.grid is not None:
        parse = _floats if args.kind == "learning_rate" else _ints
        args.grid = parse(args.grid)
    try:
        return args.func(args)
    except (GraphError, HarnessError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
