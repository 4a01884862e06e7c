"""Recovery metrics, oracle selection and the synthetic benchmark protocol."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import glasso, graphlets, stars
from .graph_core import ShapeError, UndirectedGraph
from .synth import FAMILIES, ConfigError, GeneratorConfig, sample_mvn

log = logging.getLogger(__name__)

METHODS = ("stars", "bstars", "gstars", "oracle")
DEFAULT_SETTINGS = ((800, 40), (400, 100), (200, 200), (100, 400))


@dataclass(frozen=True)
class RecoveryMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @staticmethod
    def _ratio(a, b) -> float:
        return a / b if b else 0.0

    @property
    def precision(self) -> float:
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return self._ratio(self.tp, self.tp + self.fn)

    tpr = recall

    @property
    def fpr(self) -> float:
        return self._ratio(self.fp, self.fp + self.tn)

    @property
    def f1(self) -> float:
        return self._ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tpr": self.tpr, "fpr": self.fpr}


def recovery_metrics(estimate: UndirectedGraph, truth: UndirectedGraph) -> RecoveryMetrics:
    """Edge confusion counts over the node pairs; the diagonal never counts."""
    if estimate.p != truth.p:
        raise ShapeError(f"graphs have different sizes: {estimate.p} vs {truth.p}")
    e = estimate.edge_vector()
    t = truth.edge_vector()
    tp = int(np.sum(e & t))
    fp = int(np.sum(e & ~t))
    fn = int(np.sum(~e & t))
    return RecoveryMetrics(tp, fp, fn, int(e.size) - tp - fp - fn)


def oracle_select(path: glasso.PathEstimate, truth: UndirectedGraph) -> tuple[int, float, float]:
    """Grid index, lambda and F1 of the best path graph; ties go to the larger lambda."""
    best_k, best_f1 = None, -1.0
    for k, g in enumerate(path.graphs):
        f1 = recovery_metrics(g, truth).f1
        if f1 >= best_f1:
            best_k, best_f1 = k, f1
    return best_k, float(path.grid[best_k]), best_f1


@dataclass
class ExperimentConfig:
    families: list = field(default_factory=lambda: ["neighborhood"])
    settings: list = field(default_factory=lambda: [list(s) for s in DEFAULT_SETTINGS])
    beta: float = 0.1
    N: int = 20
    K: int = 20
    ratio: float = 0.01
    repetitions: int = 50
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    generator: dict = field(default_factory=dict)
    tol: float = 1e-4
    workers: int = 1

    def validate(self) -> None:
        if not self.families or any(f not in FAMILIES for f in self.families):
            raise ConfigError("families", f"each family must be one of {FAMILIES}")
        if not self.settings:
            raise ConfigError("settings", "need at least one (n, p) setting")
        for s in self.settings:
            if len(s) != 2 or int(s[0]) < 4 or int(s[1]) < 2:
                raise ConfigError("settings", f"invalid (n, p) setting {s!r}")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta", "must lie in (0, 1]")
        if self.N < 2:
            raise ConfigError("N", "must be >= 2")
        if self.K < 2:
            raise ConfigError("K", "must be >= 2")
        if not 0 < self.ratio < 1:
            raise ConfigError("ratio", "must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be >= 1")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError("methods", f"each method must be one of {METHODS}")
        bad = set(self.generator) - set(GeneratorConfig.__dataclass_fields__) - {"family", "p", "seed"}
        if bad or {"family", "p", "seed"} & set(self.generator):
            raise ConfigError("generator", "only family-specific generator parameters may be overridden")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown experiment field")
        for name in ("families", "settings", "repetitions"):
            if name not in d:
                raise ConfigError(name, "missing required field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yml", ".yaml"):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        """All fields except ``workers``, which never changes results."""
        d = asdict(self)
        d.pop("workers")
        return d


def repetition_seeds(seed: int, setting_index: int, rep: int) -> tuple[int, int, int]:
    """(graph, data, subsample) seeds for one repetition, from a spawned seed sequence."""
    ss = np.random.SeedSequence(seed, spawn_key=(setting_index, rep))
    g, x, s = ss.generate_state(3)
    return int(g), int(x), int(s)


_RUN_FIELDS = ["family", "n", "p", "rep", "method", "index", "lambda", "tp", "fp", "fn", "tn",
               "precision", "recall", "f1", "tpr", "fpr", "nnz_offdiag", "nnz_with_diag"]
_GAP_FIELDS = ["family", "n", "p", "rep", "lambda_lb", "lambda_ub", "lambda_beta", "lambda_beta_stars",
               "lambda_gamma", "gap_b", "gap_beta", "ub_violated", "selection_match"]


@dataclass
class BenchmarkReport:
    config: ExperimentConfig
    runs: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        groups: dict = {}
        for r in self.runs:
            groups.setdefault((r["family"], r["n"], r["p"], r["method"]), []).append(r)
        out = []
        for (fam, n, p, m), rows in groups.items():
            entry = {"family": fam, "n": n, "p": p, "method": m, "reps": len(rows)}
            for key in ("f1", "precision", "recall", "tpr", "fpr"):
                v = np.array([r[key] for r in rows], dtype=float)
                entry[f"{key}_mean"] = float(v.mean())
                entry[f"{key}_std"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
            out.append(entry)
        return out

    @staticmethod
    def _csv(rows, fields) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})
        return buf.getvalue()

    def runs_csv(self) -> str:
        return self._csv(self.runs, _RUN_FIELDS)

    def gaps_csv(self) -> str:
        return self._csv(self.gaps, _GAP_FIELDS)

    def summary_csv(self) -> str:
        rows = self.summary()
        return self._csv(rows, list(rows[0]) if rows else ["family", "n", "p", "method", "reps"])

    def timings_csv(self) -> str:
        fields = ["family", "n", "p", "rep", "method", "phase", "seconds"]
        return self._csv(self.timings, fields)

    def to_json(self) -> str:
        return json.dumps({"config": self.config.to_dict(), "summary": self.summary(),
                           "failures": self.failures, "n_failures": len(self.failures)},
                          indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> list[Path]:
        """Write the deterministic tables plus a separate (non-deterministic) timing table."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"runs.csv": self.runs_csv(), "gaps.csv": self.gaps_csv(),
                 "summary.csv": self.summary_csv(), "report.json": self.to_json(),
                 "timings.csv": self.timings_csv()}
        paths = []
        for name, text in files.items():
            (out / name).write_text(text)
            paths.append(out / name)
        return paths


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{float(v):.17g}"
    return v


def _metric_row(base, method, k, path, truth):
    if k is None:
        row = dict(base, method=method, index=None, **{"lambda": None})
        row.update(RecoveryMetrics(0, 0, int(truth.edge_vector().sum()),
                                   int((~truth.edge_vector()).sum())).as_dict())
        row.update(nnz_offdiag=None, nnz_with_diag=None)
        return row
    m = recovery_metrics(path.graphs[k], truth)
    theta = path.thetas[k]
    row = dict(base, method=method, index=k, **{"lambda": float(path.grid[k])})
    row.update(m.as_dict())
    row.update(nnz_offdiag=int(path.fits[k].nnz_offdiag), nnz_with_diag=int(np.count_nonzero(theta)))
    return row


def run_repetition(cfg: ExperimentConfig, family: str, n: int, p: int, setting_index: int, rep: int):
    """One data set, every requested method; returns (runs, gap row, timing rows)."""
    g_seed, x_seed, s_seed = repetition_seeds(cfg.seed, setting_index, rep)
    model = GeneratorConfig(family=family, p=p, seed=g_seed, **cfg.generator).build()
    truth = model.graph
    X = sample_mvn(model, n, x_seed)
    S = glasso.sample_covariance(X)
    grid = glasso.RegularizationGrid(glasso.lambda_grid(S, K=cfg.K, ratio=cfg.ratio))
    solver = glasso.SolverConfig(tol=cfg.tol)
    base = {"family": family, "n": n, "p": p, "rep": rep}
    timings = []
    t0 = time.perf_counter()
    path = glasso.fit_path(S, grid, tol=cfg.tol)
    timings.append(dict(base, method="path", phase="total", seconds=time.perf_counter() - t0))

    runs, reports = [], {}
    for method in cfg.methods:
        if method == "oracle":
            k, _, _ = oracle_select(path, truth)
            runs.append(_metric_row(base, "oracle", k, path, truth))
            continue
        if method == "stars":
            st = stars.run_stars(X, grid, cfg.beta, cfg.N, solver, s_seed, cfg.workers, final_fit=False)
        elif method == "bstars":
            st = stars.run_bstars(X, grid, cfg.beta, cfg.N, solver, s_seed, cfg.workers, final_fit=False)
        else:
            st = graphlets.run_gstars(X, grid, cfg.beta, cfg.N, solver, s_seed, cfg.workers, final_fit=False)
        rep_ = st.report
        reports[method] = rep_
        for phase, sec in rep_.timings.items():
            timings.append(dict(base, method=method, phase=phase, seconds=sec))
        runs.append(_metric_row(base, method, rep_.k_selected, path, truth))

    gap = None
    bounded = reports.get("bstars") or reports.get("gstars")
    if bounded is not None:
        st_rep = reports.get("stars")
        g_rep = reports.get("gstars")
        lam_st = st_rep.lam_beta if st_rep is not None else None
        match = None
        if st_rep is not None:
            match = lam_st == bounded.lam_beta
        gap = dict(base, lambda_lb=bounded.lam_lb, lambda_ub=bounded.lam_ub, lambda_beta=bounded.lam_beta,
                   lambda_beta_stars=lam_st, lambda_gamma=g_rep.lam_gamma if g_rep is not None else None,
                   gap_b=bounded.gap_b, gap_beta=bounded.gap_beta, ub_violated=bounded.ub_violated,
                   selection_match=match)
    return runs, gap, timings


def run_benchmark(cfg: ExperimentConfig, progress=None) -> BenchmarkReport:
    """All families x settings x repetitions in a fixed order; failed repetitions are logged and skipped."""
    cfg.validate()
    report = BenchmarkReport(cfg)
    for family in cfg.families:
        for si, (n, p) in enumerate(cfg.settings):
            n, p = int(n), int(p)
            for rep in range(cfg.repetitions):
                try:
                    runs, gap, timings = run_repetition(cfg, family, n, p, si, rep)
                except Exception as exc:  # noqa: BLE001 - recorded and excluded
                    log.warning("repetition failed (%s, n=%d, p=%d, rep=%d): %s", family, n, p, rep, exc)
                    report.failures.append({"family": family, "n": n, "p": p, "rep": rep,
                                            "error": f"{type(exc).__name__}: {exc}"})
                    continue
                report.runs.extend(runs)
                if gap is not None:
                    report.gaps.append(gap)
                report.timings.extend(timings)
                if progress is not None:
                    progress(family, n, p, rep)
    return report


@dataclass(frozen=True)
class SpeedupReport:
    stars_seconds: float
    bstars_seconds: float
    lambda_beta_stars: float | None
    lambda_beta_bstars: float | None
    gap_beta: float | None

    @property
    def ratio(self) -> float:
        return self.stars_seconds / self.bstars_seconds

    @property
    def identical(self) -> bool:
        return self.lambda_beta_stars == self.lambda_beta_bstars

    @property
    def correctness_failure(self) -> bool:
        return (self.gap_beta is not None and self.gap_beta > 0) and not self.identical

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(ratio=self.ratio, identical=self.identical, correctness_failure=self.correctness_failure)
        return d


def _warm_up():
    # compile the solver kernels outside the timed region
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 4))
    glasso.fit(glasso.sample_covariance(X), 0.1)


def speedup_report(family="erdos_renyi", n=200, p=200, N=20, K=20, beta=0.1, seed=0, ratio=0.01,
                   generator=None) -> SpeedupReport:
    """Serial wall-clock of full StARS against B-StARS on one data set with shared seeds."""
    g_seed, x_seed, s_seed = repetition_seeds(seed, 0, 0)
    model = GeneratorConfig(family=family, p=p, seed=g_seed, **(generator or {})).build()
    X = sample_mvn(model, n, x_seed)
    grid = glasso.RegularizationGrid(glasso.lambda_grid(glasso.sample_covariance(X), K=K, ratio=ratio))
    _warm_up()
    t0 = time.perf_counter()
    st = stars.run_stars(X, grid, beta, N, seed=s_seed, workers=1, final_fit=False).report
    t1 = time.perf_counter()
    bs = stars.run_bstars(X, grid, beta, N, seed=s_seed, workers=1, final_fit=False).report
    t2 = time.perf_counter()
    out = SpeedupReport(t1 - t0, t2 - t1, st.lam_beta, bs.lam_beta, bs.gap_beta)
    if out.correctness_failure:
        log.error("B-StARS selection %s differs from StARS %s with gap_beta > 0",
                  out.lambda_beta_bstars, out.lambda_beta_stars)
    return out
