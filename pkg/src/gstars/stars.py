"""Stability-based lambda selection: StARS and its bounded two-phase variant.

Randomness: subsample ``r`` draws its row indices from
``np.random.SeedSequence(seed, spawn_key=(r,))``, so index sets depend only on
``(seed, r)``. Each subsample is fitted along the grid from the largest lambda
downward with warm starts; the bounded variant stops its paths at the lower
bound, which reproduces the full-path estimates bit for bit on the part of
the grid it visits.
"""

from __future__ import annotations

import logging
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import glasso, pbd
from .glasso import RegularizationGrid, SolverConfig
from .graph_core import UndirectedGraph, lower_indices, n_pairs

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class MissingDataError(ValueError):
    pass


class BoundWarning(UserWarning):
    pass


# -- subsampling ------------------------------------------------------------


def default_subsample_size(n: int) -> int:
    return int(min(np.floor(10 * np.sqrt(n)), np.floor(0.8 * n)))


@dataclass(frozen=True)
class SubsamplePlan:
    n: int
    b: int
    N: int
    seed: int
    indices: np.ndarray = field(repr=False)

    def subsample(self, r: int) -> np.ndarray:
        return self.indices[r]


def subsample_indices(n: int, b: int, seed: int, r: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
    return np.sort(rng.choice(n, size=b, replace=False))


def make_plan(n: int, N: int, seed: int = 0, b: int | None = None) -> SubsamplePlan:
    """Draw ``N`` index sets of size ``b`` without replacement.

    ``b`` defaults to ``min(floor(10 sqrt(n)), floor(0.8 n))``.
    """
    if n < 4:
        raise ConfigError(f"need n >= 4 samples, got {n}")
    if N < 1:
        raise ConfigError(f"need N >= 1 subsamples, got {N}")
    if b is None:
        b = default_subsample_size(n)
    if not (1 < b < n):
        raise ConfigError(f"subsample size must satisfy 1 < b < n, got b={b}, n={n}")
    idx = np.stack([subsample_indices(n, b, seed, r) for r in range(N)]) if N else np.empty((0, b), int)
    idx.setflags(write=False)
    return SubsamplePlan(n=n, b=b, N=N, seed=seed, indices=idx)


# -- per-subsample path fits ---------------------------------------------------


@dataclass
class SubsampleFit:
    """Edge indicators of one subsample: ``edges[k]`` is a length-L bool vector or None."""

    r: int
    edges: list
    failures: list = field(default_factory=list)
    seconds: float = 0.0


def fit_subsample(X, rows, r, lambdas, solver: SolverConfig, k_min: int = 0) -> SubsampleFit:
    """Fit grid indices ``K-1 .. k_min`` on ``X[rows]`` with warm starts.

    A failed cell is recorded in ``failures`` and the path restarts cold.
    """
    t0 = time.perf_counter()
    S = glasso.sample_covariance(X[rows]).sigma_hat
    p = S.shape[0]
    rr, cc = lower_indices(p)
    K = len(lambdas)
    edges = [None] * K
    failures = []
    prev = None
    for k in range(K - 1, k_min - 1, -1):
        try:
            prev = glasso.fit(S, lambdas[k], solver.tol, solver.max_iter, warm_start=prev,
                              penalize_diagonal=solver.penalize_diagonal)
        except (glasso.ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
            failures.append((k, str(exc)))
            prev = None
            continue
        edges[k] = prev.theta[rr, cc] != 0
    return SubsampleFit(r, edges, failures, time.perf_counter() - t0)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        return os.cpu_count() or 1
    return max(1, int(workers))


def fit_subsamples(X, plan: SubsamplePlan, grid: RegularizationGrid, solver: SolverConfig,
                   rs, k_min: int = 0, workers: int | None = 1) -> list[SubsampleFit]:
    """Fit the subsamples ``rs``; results come back in the order of ``rs``."""
    X = np.asarray(X, dtype=float)
    lambdas = np.asarray(grid.lambdas)
    rs = list(rs)
    nw = min(resolve_workers(workers), max(1, len(rs)))
    if nw == 1:
        out = [fit_subsample(X, plan.subsample(r), r, lambdas, solver, k_min) for r in rs]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=nw, backend="loky")(
            delayed(fit_subsample)(X, plan.subsample(r), r, lambdas, solver, k_min) for r in rs
        )
    for f in out:
        for k, msg in f.failures:
            warnings.warn(f"subsample {f.r}, lambda index {k}: solver failed ({msg}); cell excluded",
                          RuntimeWarning, stacklevel=2)
    return out


# -- edge frequencies --------------------------------------------------------


class EdgeProbabilityTable:
    """Edge counts per (pair, lambda) with per-column subsample counts.

    ``theta_hat[l, k] = counts[l, k] / n_used[k]``; columns with no
    subsample are NaN.
    """

    def __init__(self, L: int, K: int):
        self.counts = np.zeros((L, K), dtype=np.int64)
        self.n_used = np.zeros(K, dtype=np.int64)

    @property
    def L(self) -> int:
        return self.counts.shape[0]

    @property
    def K(self) -> int:
        return self.counts.shape[1]

    @classmethod
    def from_fits(cls, fits, L: int, K: int) -> "EdgeProbabilityTable":
        table = cls(L, K)
        for f in fits:
            table.add(f)
        return table

    def add(self, fit: SubsampleFit) -> None:
        for k, e in enumerate(fit.edges):
            if e is None:
                continue
            self.counts[:, k] += e
            self.n_used[k] += 1

    def populated(self) -> np.ndarray:
        return self.n_used > 0

    @property
    def theta_hat(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.counts / self.n_used[None, :]
        out[:, ~self.populated()] = np.nan
        return out

    def column(self, k: int) -> np.ndarray:
        if self.n_used[k] == 0:
            raise MissingDataError(f"column {k} has no subsample estimates")
        return self.counts[:, k] / self.n_used[k]


def edge_frequencies(plan: SubsamplePlan, X, grid: RegularizationGrid, solver: SolverConfig | None = None,
                     k_min: int = 0, workers: int | None = 1) -> EdgeProbabilityTable:
    solver = solver or SolverConfig()
    fits = fit_subsamples(X, plan, grid, solver, range(plan.N), k_min, workers)
    p = np.asarray(X).shape[1]
    return EdgeProbabilityTable.from_fits(fits, n_pairs(p), grid.K)


def total_variability(table: EdgeProbabilityTable, k: int) -> float:
    """``(4/L) sum_l theta_l (1 - theta_l)`` at column ``k``."""
    return float(pbd.total_instability(table.column(k))[0])


def _curve(table, func) -> np.ndarray:
    out = np.full(table.K, np.nan)
    mask = table.populated()
    if mask.any():
        out[mask] = func(table.theta_hat[:, mask])
    return out


def variability_curves(table: EdgeProbabilityTable) -> dict:
    """Per-lambda D_hat, D_bar, D_ub, D_ub_bar and Delta (NaN where unpopulated)."""
    D = _curve(table, pbd.total_instability)
    Dub = _curve(table, pbd.upper_bound_curve)
    Delta = _curve(table, pbd.within_variability)
    return {"D_hat": D, "D_bar": monotonize(D), "D_ub": Dub, "D_ub_bar": monotonize(Dub), "Delta": Delta}


def monotonize(curve) -> np.ndarray:
    """Running maximum from the sparse (large lambda) end; NaNs are left in place."""
    c = np.asarray(curve, dtype=float)
    out = np.full_like(c, np.nan)
    run = -np.inf
    for k in range(c.size - 1, -1, -1):
        if np.isnan(c[k]):
            continue
        run = max(run, c[k])
        out[k] = run
    return out


def select_index(curve, beta: float, lo: int = 0) -> int | None:
    """Smallest grid index ``>= lo`` with ``curve <= beta``."""
    c = np.asarray(curve, dtype=float)
    for k in range(lo, c.size):
        if not np.isnan(c[k]) and c[k] <= beta:
            return k
    return None


def select_lambda(curve, beta: float, grid) -> float | None:
    lams = grid.lambdas if isinstance(grid, RegularizationGrid) else np.asarray(grid)
    k = select_index(curve, beta)
    return None if k is None else float(lams[k])


# -- reports -------------------------------------------------------------------


@dataclass
class SelectionReport:
    method: str
    lambdas: np.ndarray
    beta: float
    N: int
    seed: int
    b: int
    k_lb: int | None = None
    k_ub: int | None = None
    k_beta: int | None = None
    k_gamma: int | None = None
    curves: dict = field(default_factory=dict)
    n_used: np.ndarray | None = None
    theta: np.ndarray | None = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    ub_violated: bool = False
    fallback: bool = False

    def _lam(self, k):
        return None if k is None else float(self.lambdas[k])

    @property
    def lam_lb(self):
        return self._lam(self.k_lb)

    @property
    def lam_ub(self):
        return self._lam(self.k_ub)

    @property
    def lam_beta(self):
        return self._lam(self.k_beta)

    @property
    def lam_gamma(self):
        return self._lam(self.k_gamma)

    @property
    def gap_b(self):
        if self.k_lb is None or self.k_ub is None:
            return None
        return self.lam_ub - self.lam_lb

    @property
    def gap_beta(self):
        if self.k_lb is None or self.k_beta is None:
            return None
        return self.lam_beta - self.lam_lb

    @property
    def k_selected(self):
        return self.k_gamma if self.method == "gstars" and self.k_gamma is not None else self.k_beta

    @property
    def graph(self) -> UndirectedGraph | None:
        if self.theta is None:
            return None
        return glasso.support_graph(self.theta)

    def to_dict(self) -> dict:
        def f(x):
            return None if x is None else float(x)

        return {
            "method": self.method,
            "beta": self.beta,
            "N": self.N,
            "b": self.b,
            "seed": self.seed,
            "K": int(len(self.lambdas)),
            "lambda_lb": f(self.lam_lb),
            "lambda_ub": f(self.lam_ub),
            "lambda_beta": f(self.lam_beta),
            "lambda_gamma": f(self.lam_gamma),
            "gap_b": f(self.gap_b),
            "gap_beta": f(self.gap_beta),
            "index_lb": self.k_lb,
            "index_ub": self.k_ub,
            "index_beta": self.k_beta,
            "index_gamma": self.k_gamma,
            "ub_violated": self.ub_violated,
            "fallback": self.fallback,
            "selected_edges": None if self.theta is None else int(self.graph.edge_count),
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
            "notes": list(self.notes),
        }

    def curves_csv(self) -> str:
        """Plot-ready CSV: one row per lambda, one column per available curve."""
        names = [c for c in ("D_hat", "D_bar", "D_ub", "D_ub_bar", "Delta", "D_hat_pilot", "D_bar_pilot",
                                "D_ub_bar_pilot", "d_hat") if c in self.curves]
        lines = [",".join(["lambda", "n_used"] + names)]
        n_used = self.n_used if self.n_used is not None else np.zeros(len(self.lambdas), int)
        for k, lam in enumerate(self.lambdas):
            vals = []
            for c in names:
                v = self.curves[c][k]
                vals.append("" if np.isnan(v) else f"{v:.17g}")
            lines.append(",".join([f"{lam:.17g}", str(int(n_used[k]))] + vals))
        return "\n".join(lines) + "\n"


def _note(report, msg, category=BoundWarning):
    report.notes.append(msg)
    warnings.warn(msg, category, stacklevel=3)


def _final_fit(X, report, solver):
    k = report.k_selected
    if k is None:
        return
    S = glasso.sample_covariance(X).sigma_hat
    report.theta = glasso.fit(S, report.lambdas[k], solver.tol, solver.max_iter,
                              penalize_diagonal=solver.penalize_diagonal).theta


def _prepare(X, grid, beta, N, seed):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ConfigError("data must be a finite 2-d array")
    if not (0.0 < beta <= 1.0):
        raise ConfigError(f"beta must lie in (0, 1], got {beta}")
    if grid is None:
        grid = glasso.lambda_grid(glasso.sample_covariance(X))
    elif not isinstance(grid, RegularizationGrid):
        grid = RegularizationGrid(grid)
    plan = make_plan(X.shape[0], N, seed)
    return X, grid, plan


@dataclass
class RunState:
    """Everything a selection run produced, kept for graphlet post-processing."""

    report: SelectionReport
    fits: list
    grid: RegularizationGrid
    plan: SubsamplePlan


def run_stars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1, final_fit=True) -> RunState:
    solver = solver or SolverConfig()
    X, grid, plan = _prepare(X, grid, beta, N, seed)
    p = X.shape[1]
    t0 = time.perf_counter()
    fits = fit_subsamples(X, plan, grid, solver, range(N), 0, workers)
    t1 = time.perf_counter()
    table = EdgeProbabilityTable.from_fits(fits, n_pairs(p), grid.K)
    curves = variability_curves(table)
    report = SelectionReport("stars", np.array(grid.lambdas), beta, N, seed, plan.b,
                             curves=curves, n_used=table.n_used.copy())
    report.k_beta = select_index(curves["D_bar"], beta)
    if N >= 2:
        pilot = variability_curves(EdgeProbabilityTable.from_fits(fits[:2], n_pairs(p), grid.K))
        report.k_lb = select_index(pilot["D_bar"], beta)
        report.k_ub = select_index(pilot["D_ub_bar"], beta)
        report.curves["D_hat_pilot"] = pilot["D_hat"]
        report.curves["D_bar_pilot"] = pilot["D_bar"]
        report.curves["D_ub_bar_pilot"] = pilot["D_ub_bar"]
    if report.k_beta is None:
        _note(report, f"no grid value reaches D_bar <= {beta}")
    report.timings["subsamples"] = t1 - t0
    if final_fit:
        _final_fit(X, report, solver)
    report.timings["total"] = time.perf_counter() - t0
    return RunState(report, fits, grid, plan)


def stars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1) -> SelectionReport:
    """Full-grid StARS with all ``N`` subsamples."""
    return run_stars(X, grid, beta, N, solver, seed, workers).report


def run_bstars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1, final_fit=True,
               method="bstars") -> RunState:
    solver = solver or SolverConfig()
    X, grid, plan = _prepare(X, grid, beta, N, seed)
    if N < 2:
        raise ConfigError("bounded selection needs N >= 2")
    p = X.shape[1]
    L = n_pairs(p)
    K = grid.K
    t0 = time.perf_counter()

    # phase 1: two pilot subsamples over the whole grid
    fits = fit_subsamples(X, plan, grid, solver, range(2), 0, workers)
    pilot = variability_curves(EdgeProbabilityTable.from_fits(fits, L, K))
    t1 = time.perf_counter()
    report = SelectionReport(method, np.array(grid.lambdas), beta, N, seed, plan.b)
    report.timings["pilot"] = t1 - t0
    report.curves["D_hat_pilot"] = pilot["D_hat"]
    report.curves["D_bar_pilot"] = pilot["D_bar"]
    report.curves["D_ub_bar_pilot"] = pilot["D_ub_bar"]

    # phase 2: bounds
    k_lb = select_index(pilot["D_bar"], beta)
    k_ub = select_index(pilot["D_ub_bar"], beta)
    if k_lb is None:
        _note(report, "no grid value reaches D_bar_2 <= beta; falling back to full-path StARS")
        report.fallback = True
        k_min = 0
    else:
        if k_ub is None:
            _note(report, "upper-bound curve never reaches beta; using the largest grid value")
            k_ub = K - 1
        k_min = k_lb
    report.k_lb, report.k_ub = k_lb, k_ub

    # phase 3: remaining subsamples down to the lower bound
    if k_lb is not None and (k_ub == k_lb or N == 2):
        report.k_beta = k_lb
        table = EdgeProbabilityTable.from_fits(fits, L, K)
    else:
        fits = fits + fit_subsamples(X, plan, grid, solver, range(2, N), k_min, workers)
        table = EdgeProbabilityTable.from_fits(fits, L, K)
        if k_min > 0:
            # pilot columns below the lower bound are outside the restricted range
            table.counts[:, :k_min] = 0
            table.n_used[:k_min] = 0
        curves = variability_curves(table)
        report.k_beta = select_index(curves["D_bar"], beta, lo=k_min)
        if report.k_beta is None:
            _note(report, f"no grid value reaches D_bar <= {beta}")
        elif k_lb is not None and report.k_beta > k_ub:
            report.ub_violated = True
            _note(report, f"selected index {report.k_beta} lies above the upper bound {k_ub}")
    report.curves.update(variability_curves(table))
    report.n_used = table.n_used.copy()
    if report.gap_b is not None and report.gap_b < 0:
        _note(report, "gap_b < 0: lower bound exceeds upper bound")
    report.timings["restricted"] = time.perf_counter() - t1
    if final_fit:
        _final_fit(X, report, solver)
    report.timings["total"] = time.perf_counter() - t0
    return RunState(report, fits, grid, plan)


def bstars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1) -> SelectionReport:
    """Bounded StARS: pilot bounds from two subsamples, remaining fits restricted to lambda >= lambda_lb."""
    return run_bstars(X, grid, beta, N, solver, seed, workers).report
