"""Command-line interface.

Exit codes: 0 success, 2 configuration or validation error, 3 data or parse
error, 4 numerical failure. Output goes to ``--out``, else to the directory in
``$GSTARS_OUTPUT_DIR``, else ``./gstars_out``. Every command writes
``manifest.json``; ``gstars replay manifest.json`` reruns it. All outputs are
byte-identical across reruns and worker counts except ``timings.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, bench, glasso, graphlets, maxent, pbd, stars, synth
from .graph_core import (EdgeListParseError, ShapeError, n_pairs, read_edge_list, write_edge_list,
                         write_matrix_csv)

log = logging.getLogger("gstars")

OUTPUT_ENV = "GSTARS_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

FAMILY_ALIASES = {"er": "erdos_renyi", "erdos_renyi": "erdos_renyi", "hub": "hub",
                  "neighborhood": "neighborhood", "nb": "neighborhood"}


class DataError(ValueError):
    pass


_CONFIG_ERRORS = (synth.ConfigError, stars.ConfigError, glasso.DegenerateGridError,
                  maxent.InconsistentPriorsError)
_DATA_ERRORS = (DataError, EdgeListParseError, ShapeError, stars.MissingDataError,
                glasso.InsufficientDataError, OSError)
_NUMERIC_ERRORS = (glasso.ConvergenceError, glasso.UnboundedProblemError, synth.FactorizationError,
                   maxent.MaxEntError, np.linalg.LinAlgError, FloatingPointError)


# -- I/O helpers ---------------------------------------------------------------


def read_data(path) -> np.ndarray:
    """n x p numeric CSV, rows are samples; a non-numeric first line is taken as a header."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    try:
        X = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse numeric CSV ({exc})") from None
    if X.size == 0:
        raise DataError(f"{path}: no data rows")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{path}: non-finite value at data row {bad[0] + 1}, column {bad[1] + 1}")
    return X


def write_data(path, X) -> None:
    p = X.shape[1]
    header = ",".join(f"x{j + 1}" for j in range(p))
    np.savetxt(path, X, delimiter=",", fmt="%.17g", header=header, comments="")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or "gstars_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out: Path, args, outputs) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose", "argv", "workers")}
    _write_json(out / "manifest.json", {
        "command": args.command,
        "argv": args.argv,
        "config": cfg,
        "outputs": sorted(str(o) for o in outputs) + ["manifest.json"],
        "version": __version__,
    })


# -- commands ------------------------------------------------------------------


def _generator_config(args) -> synth.GeneratorConfig:
    if args.config:
        cfg = synth.GeneratorConfig.from_file(args.config)
    else:
        if args.family is None or args.p is None:
            raise synth.ConfigError("family" if args.family is None else "p", "missing required field")
        family = FAMILY_ALIASES.get(args.family)
        if family is None:
            raise synth.ConfigError("family", f"unknown family {args.family!r}")
        d = {"family": family, "p": args.p, "seed": args.seed}
        for name in ("sparsity", "n_hubs", "hub_weight", "weight", "edges_per_node", "delta"):
            v = getattr(args, name)
            if v is not None:
                d[name] = v
        cfg = synth.GeneratorConfig.from_dict(d)
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    cfg = _generator_config(args)
    model = cfg.build()
    X = synth.sample_mvn(model, args.n, seed=np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    out = _out_dir(args)
    write_edge_list(out / "truth_edges.txt", model.theta)
    write_matrix_csv(out / "precision.csv", model.theta)
    write_data(out / "data.csv", X)
    _write_json(out / "generator.json", cfg.to_dict())
    _manifest(out, args, ["truth_edges.txt", "precision.csv", "data.csv", "generator.json"])
    print(f"{cfg.family}: p={cfg.p}, {model.graph.edge_count} edges, n={args.n} -> {out}")
    return EXIT_OK


def _grid_and_solver(args, X):
    S = glasso.sample_covariance(X)
    grid = glasso.RegularizationGrid(glasso.lambda_grid(S, K=args.K, ratio=args.ratio, spacing=args.spacing))
    return grid, glasso.SolverConfig(tol=args.tol, max_iter=args.max_iter)


def cmd_select(args) -> int:
    X = read_data(args.data)
    grid, solver = _grid_and_solver(args, X)
    if args.method == "stars":
        state = stars.run_stars(X, grid, args.beta, args.N, solver, args.seed, args.workers)
    elif args.method == "bstars":
        state = stars.run_bstars(X, grid, args.beta, args.N, solver, args.seed, args.workers)
    else:
        state = graphlets.run_gstars(X, grid, args.beta, args.N, solver, args.seed, args.workers,
                                     full_curve=args.full_curve)
    report = state.report
    out = _out_dir(args)
    (out / "curves.csv").write_text(report.curves_csv())
    d = report.to_dict()
    _write_json(out / "timings.json", d.pop("timings"))
    _write_json(out / "report.json", d)
    outputs = ["curves.csv", "report.json", "timings.json"]
    if report.theta is not None:
        write_edge_list(out / "selected_edges.txt", report.theta)
        outputs.append("selected_edges.txt")
    _manifest(out, args, outputs)
    lam = report.lam_gamma if args.method == "gstars" else report.lam_beta
    print(f"{args.method}: selected lambda = {lam} -> {out}")
    return EXIT_OK


def cmd_graphlets(args) -> int:
    graph, _ = read_edge_list(args.edges, p=args.p)
    M = graphlets.count_orbits(graph)
    out = _out_dir(args)
    header = ",".join(f"orbit{o}" for o in range(graphlets.N_ORBITS))
    np.savetxt(out / "orbits.csv", M, delimiter=",", fmt="%d", header=header, comments="")
    outputs = ["orbits.csv"]
    if graph.p >= 2:
        R = graphlets.gcm(M)
        write_matrix_csv(out / "gcm.csv", R)
        write_matrix_csv(out / "gcv.csv", graphlets.gcv(R)[None, :])
        outputs += ["gcm.csv", "gcv.csv"]
    _manifest(out, args, outputs)
    print(f"p={graph.p}, {graph.edge_count} edges -> {out}")
    return EXIT_OK


def pilot_priors(X, grid, beta, seed, solver, eps=None):
    """Max-entropy priors from two subsamples at the pilot lower bound."""
    state = stars.run_bstars(X, grid, beta, 2, solver, seed, workers=1, final_fit=False)
    k = state.report.k_lb
    if k is None:
        raise stars.MissingDataError("two-subsample curve never reaches beta; no lower bound")
    table = stars.EdgeProbabilityTable.from_fits(state.fits, n_pairs(X.shape[1]), grid.K)
    return maxent.priors_from_frequencies(table.column(k), eps=eps), state.report


def _parse_range(text) -> range:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise stars.ConfigError(f"--N-range must look like LO:HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise stars.ConfigError(f"--N-range needs 1 <= LO <= HI, got {text!r}")
    return range(lo, hi + 1)


def cmd_maxent(args) -> int:
    out = _out_dir(args)
    info = {}
    if args.data:
        X = read_data(args.data)
        grid, solver = _grid_and_solver(args, X)
        priors, rep = pilot_priors(X, grid, args.beta, args.seed, solver, args.eps)
        info["lambda_lb"] = rep.lam_lb
    else:
        missing = [n for n in ("qbar", "cap0", "cap2") if getattr(args, n) is None]
        if missing:
            raise stars.ConfigError(f"--{missing[0]} is required without --data")
        eps = args.eps if args.eps is not None else 0.0
        priors = maxent.Priors(args.qbar, eps, args.cap0, args.cap2)
    N_range = _parse_range(args.N_range)
    c_max = maxent.find_c_max(priors.input(args.c_max_N))
    cs = [0.0] + [float(c) for c in (args.c or [])]
    if np.isfinite(c_max):
        cs.append(c_max)
    entries = []
    for c in cs:
        entries.extend(maxent.variance_sequence(priors.input(N_range[0]), c, N_range))
    maxent.write_sequences_csv(out / "sequences.csv", entries)
    info.update(priors=vars(priors), c_max=c_max if np.isfinite(c_max) else None, c_max_N=args.c_max_N)
    _write_json(out / "maxent.json", info)
    _manifest(out, args, ["sequences.csv", "maxent.json"])
    print(f"c_max = {c_max:.6g} -> {out}")
    return EXIT_OK


def cmd_pbd_curves(args) -> int:
    """Total, upper-bound and within variability against N at the pilot lower bound and at lambda_beta."""
    X = read_data(args.data)
    grid, solver = _grid_and_solver(args, X)
    state = stars.run_stars(X, grid, args.beta, args.N, solver, args.seed, args.workers, final_fit=False)
    rep = state.report
    L = n_pairs(X.shape[1])
    rows = ["label,index,lambda,N,D_hat,D_ub,Delta"]
    for label, k in (("lb", rep.k_lb), ("beta", rep.k_beta)):
        if k is None:
            continue
        for N in range(2, args.N + 1):
            t = stars.EdgeProbabilityTable.from_fits(state.fits[:N], L, grid.K).column(k)
            vals = (pbd.total_instability(t)[0], pbd.upper_bound_curve(t)[0], pbd.within_variability(t)[0])
            rows.append(f"{label},{k},{grid[k]:.17g},{N}," + ",".join(f"{v:.17g}" for v in vals))
    out = _out_dir(args)
    (out / "pbd_curves.csv").write_text("\n".join(rows) + "\n")
    (out / "curves.csv").write_text(rep.curves_csv())
    _manifest(out, args, ["pbd_curves.csv", "curves.csv"])
    print(f"lambda_lb = {rep.lam_lb}, lambda_beta = {rep.lam_beta} -> {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = bench.ExperimentConfig.from_file(args.config)
    if args.repetitions is not None:
        cfg.repetitions = args.repetitions
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.validate()
    report = bench.run_benchmark(cfg)
    out = _out_dir(args)
    paths = report.write(out)
    _manifest(out, args, [p.name for p in paths])
    print(f"{len(report.runs)} method runs, {len(report.failures)} failed repetitions -> {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    # later flags win in argparse, so overrides are appended
    if args.workers is not None and manifest["command"] in ("select", "pbd-curves", "bench"):
        argv += ["--workers", str(args.workers)]
    argv += ["--out", args.out or str(Path(args.manifest).resolve().parent)]
    return main(argv)


# -- parser --------------------------------------------------------------------


def _add_grid_args(p):
    p.add_argument("--K", type=int, default=20, help="grid size (default 20)")
    p.add_argument("--ratio", type=float, default=0.01, help="smallest/largest lambda (default 0.01)")
    p.add_argument("--spacing", choices=["log", "linear"], default="log")
    p.add_argument("--tol", type=float, default=glasso.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=glasso.DEFAULT_MAX_ITER)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def _add_out(p):
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./gstars_out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gstars", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="ground-truth model and Gaussian data")
    p.add_argument("family", nargs="?", help="er | hub | neighborhood")
    p.add_argument("--config", help="JSON/YAML generator config (replaces the flags below)")
    p.add_argument("--p", type=int)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--n-hubs", type=int)
    p.add_argument("--hub-weight", type=float)
    p.add_argument("--weight", type=float)
    p.add_argument("--edges-per-node", type=float)
    p.add_argument("--delta", type=float)
    _add_out(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="stability-based lambda selection on a data CSV")
    p.add_argument("data")
    p.add_argument("--method", choices=["stars", "bstars", "gstars"], default="bstars")
    p.add_argument("--N", type=int, default=20, help="number of subsamples")
    p.add_argument("--full-curve", action="store_true", help="gstars: graphlet variability on the whole grid")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    _add_grid_args(p)
    _add_out(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("graphlets", help="orbit counts, GCM and GCV of an edge list")
    p.add_argument("edges")
    p.add_argument("--p", type=int, help="node count (default: largest index in the file)")
    _add_out(p)
    p.set_defaults(func=cmd_graphlets)

    p = sub.add_parser("maxent", help="maximum-entropy variance sequences")
    p.add_argument("--data", help="estimate priors from two subsamples of this data CSV")
    p.add_argument("--qbar", type=float)
    p.add_argument("--eps", type=float, help="mean tolerance (default 3/L with --data)")
    p.add_argument("--cap0", type=float)
    p.add_argument("--cap2", type=float)
    p.add_argument("--c", type=float, nargs="*", help="extra bimodality values besides 0 and c_max")
    p.add_argument("--c-max-N", type=int, default=2, help="N at which c_max is computed (default 2)")
    p.add_argument("--N-range", default="2:50")
    _add_grid_args(p)
    _add_out(p)
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("pbd-curves", help="variability decomposition against the number of subsamples")
    p.add_argument("data")
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--workers", type=int, default=None)
    _add_grid_args(p)
    _add_out(p)
    p.set_defaults(func=cmd_pbd_curves)

    p = sub.add_parser("bench", help="synthetic benchmark from a JSON/YAML experiment config")
    p.add_argument("config")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--workers", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_replay)
    return parser


def _strip_out(argv) -> list:
    """argv without output-directory and worker-count flags, which never change results."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--workers"):
            skip = True
            continue
        if a.startswith(("--out=", "--workers=")) or a in ("-v", "--verbose"):
            continue
        out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = _strip_out(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", stars.BoundWarning)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
