"""Penalized Gaussian log-likelihood (graphical lasso) at one lambda and along a path.

Minimizes ``-log det(Theta) + tr(S Theta) + lam * ||Theta||_1`` over positive
definite Theta, where the l1 norm covers off-diagonal entries only unless
``penalize_diagonal=True``. The solver is block coordinate descent on the dual
variable W = Theta^{-1}: each row/column update is a lasso problem solved by
coordinate descent, which yields exact zeros in Theta. Problems are split
into the connected components of ``|S_ij| > lam`` and solved block by block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .graph_core import UndirectedGraph, support_graph

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 200


class InsufficientDataError(ValueError):
    pass


class DegenerateGridError(ValueError):
    pass


class UnboundedProblemError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when the sweeps do not reach ``tol`` within ``max_iter``."""

    def __init__(self, message, gap=np.nan, lam=None, index=None):
        self.gap = gap
        self.lam = lam
        self.index = index
        super().__init__(message)


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_hat: np.ndarray
    n: int


@dataclass(frozen=True)
class RegularizationGrid:
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise DegenerateGridError("grid must be a non-empty 1-d array")
        if np.any(lam <= 0):
            raise DegenerateGridError("grid values must be positive")
        if lam.size > 1 and np.any(np.diff(lam) <= 0):
            raise DegenerateGridError("grid must be strictly increasing")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def K(self) -> int:
        return self.lambdas.size

    def __len__(self):
        return self.K

    def __getitem__(self, k):
        return self.lambdas[k]


@dataclass
class SolverConfig:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    penalize_diagonal: bool = False


@dataclass
class FitResult:
    theta: np.ndarray
    lam: float
    n_iter: int
    gap: float
    covariance: np.ndarray = field(repr=False)
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def graph(self) -> UndirectedGraph:
        return support_graph(self.theta)

    @property
    def nnz_offdiag(self) -> int:
        return int(np.count_nonzero(self.theta)) - int(np.count_nonzero(np.diag(self.theta)))


@dataclass
class PathEstimate:
    """Per-lambda fits, ordered like the grid (increasing lambda)."""

    grid: RegularizationGrid
    fits: list

    @property
    def thetas(self) -> list:
        return [f.theta for f in self.fits]

    @property
    def graphs(self) -> list:
        return [f.graph for f in self.fits]

    def nnz(self, diagonal=False) -> np.ndarray:
        """Nonzero count per lambda, off-diagonal entries counted once per pair."""
        out = np.array([f.nnz_offdiag // 2 for f in self.fits])
        if diagonal:
            out = np.array([np.count_nonzero(f.theta) for f in self.fits])
        return out

    def monotone_nnz(self) -> np.ndarray:
        """Running maximum from the sparse end: non-increasing in lambda."""
        return np.maximum.accumulate(self.nnz()[::-1])[::-1]


def sample_covariance(X) -> CovarianceEstimate:
    """Maximum-likelihood covariance ``(1/n) Xc^T Xc`` of column-centered data."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InsufficientDataError(f"data must be 2-d, got shape {X.shape}")
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / n
    S = (S + S.T) / 2
    return CovarianceEstimate(S, n)


def _as_cov(sigma_hat) -> np.ndarray:
    if isinstance(sigma_hat, CovarianceEstimate):
        sigma_hat = sigma_hat.sigma_hat
    S = np.asarray(sigma_hat, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"covariance must be square, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max(initial=0))):
        raise ValueError("covariance must be symmetric")
    return S


def max_offdiag(S) -> float:
    S = _as_cov(S)
    A = np.abs(S).copy()
    np.fill_diagonal(A, 0.0)
    return float(A.max(initial=0.0))


def lambda_grid(sigma_hat, K: int = 20, ratio: float = 0.01, spacing: str = "log") -> RegularizationGrid:
    """K values from ``ratio * lam_max`` to ``lam_max = max |offdiag S|``.

    ``lam_max`` is the smallest penalty giving an empty graph.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if not (0.0 < ratio < 1.0):
        raise ValueError("ratio must lie in (0, 1)")
    lam_max = max_offdiag(sigma_hat)
    if lam_max <= 0:
        raise DegenerateGridError("all off-diagonal covariances are zero")
    if spacing == "log":
        lams = np.exp(np.linspace(np.log(ratio * lam_max), np.log(lam_max), K))
    elif spacing == "linear":
        lams = np.linspace(ratio * lam_max, lam_max, K)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    lams[-1] = lam_max
    return RegularizationGrid(lams)


def screen_components(sigma_hat, lam: float) -> list[np.ndarray]:
    """Connected components of the graph with edges ``|S_ij| > lam``.

    Components are returned as sorted index arrays ordered by their smallest node.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    S = _as_cov(sigma_hat)
    A = np.abs(S) > lam
    np.fill_diagonal(A, False)
    n_comp, labels = connected_components(csr_matrix(A), directed=False)
    comps = [np.flatnonzero(labels == c) for c in range(n_comp)]
    comps.sort(key=lambda idx: idx[0])
    return comps


def objective(theta, S, lam, penalize_diagonal=False) -> float:
    """Penalized negative log-likelihood; +inf outside the PD cone."""
    theta = np.asarray(theta, dtype=float)
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        return np.inf
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    pen = np.abs(theta).sum()
    if not penalize_diagonal:
        pen -= np.abs(np.diag(theta)).sum()
    return float(-logdet + np.sum(S * theta) + lam * pen)


def kkt_residual(theta, S, lam, penalize_diagonal=False) -> float:
    """Largest violation of the stationarity conditions, using W = inv(theta)."""
    theta = np.asarray(theta, dtype=float)
    W = np.linalg.inv(theta)
    G = W - S
    p = theta.shape[0]
    off = ~np.eye(p, dtype=bool)
    on = off & (theta != 0)
    zero = off & (theta == 0)
    res = 0.0
    if on.any():
        res = max(res, float(np.abs(G[on] - lam * np.sign(theta[on])).max()))
    if zero.any():
        res = max(res, float(np.maximum(np.abs(G[zero]) - lam, 0.0).max()))
    d = np.diag(G) - (lam if penalize_diagonal else 0.0)
    res = max(res, float(np.abs(d).max()))
    return res


# -- numba kernels ----------------------------------------------------------


@njit(cache=True)
def _lasso_column(W, S, B, j, lam, tol, max_pass):
    """Coordinate descent for column j: min 1/2 b'V b - s'b + lam |b|_1, V = W without j."""
    m = W.shape[0]
    beta = B[:, j]
    r = np.zeros(m)
    for k in range(m):
        bk = beta[k]
        if k != j and bk != 0.0:
            for i in range(m):
                r[i] += W[i, k] * bk
    active = np.zeros(m, dtype=np.bool_)
    full = True
    for _ in range(max_pass):
        max_delta = 0.0
        for k in range(m):
            if k == j:
                continue
            if not full and not active[k]:
                continue
            vkk = W[k, k]
            old = beta[k]
            z = S[k, j] - (r[k] - vkk * old)
            if z > lam:
                new = (z - lam) / vkk
            elif z < -lam:
                new = (z + lam) / vkk
            else:
                new = 0.0
            if new != old:
                d = new - old
                beta[k] = new
                for i in range(m):
                    r[i] += W[i, k] * d
                ad = abs(d) * vkk
                if ad > max_delta:
                    max_delta = ad
            active[k] = new != 0.0
        if max_delta < tol:
            if full:
                break
            full = True
        else:
            full = False
    return r


@njit(cache=True)
def _theta_from_state(W, B):
    m = W.shape[0]
    T = np.zeros((m, m))
    for j in range(m):
        acc = 0.0
        for k in range(m):
            if k != j:
                acc += W[k, j] * B[k, j]
        tjj = 1.0 / (W[j, j] - acc)
        T[j, j] = tjj
        for k in range(m):
            if k != j:
                T[k, j] = -B[k, j] * tjj
    for i in range(m):
        for j in range(i):
            a = T[i, j]
            b = T[j, i]
            if a == 0.0 or b == 0.0:
                v = 0.0
            else:
                v = 0.5 * (a + b)
            T[i, j] = v
            T[j, i] = v
    return T


@njit(cache=True)
def _sweeps(S, W, B, lam, pen_diag, tol, n_sweeps, inner_max):
    """Run up to n_sweeps row/column sweeps in place; return (sweeps, gap, converged)."""
    m = S.shape[0]
    dscale = 0.0
    for j in range(m):
        W[j, j] = S[j, j] + lam * pen_diag
        if S[j, j] > dscale:
            dscale = S[j, j]
    inner_tol = tol * dscale * 0.1
    gap = np.inf
    for it in range(n_sweeps):
        max_dw = 0.0
        for j in range(m):
            r = _lasso_column(W, S, B, j, lam, inner_tol, inner_max)
            for k in range(m):
                if k != j:
                    dw = abs(r[k] - W[k, j])
                    if dw > max_dw:
                        max_dw = dw
                    W[k, j] = r[k]
                    W[j, k] = r[k]
        T = _theta_from_state(W, B)
        g = 0.0
        pen = 0.0
        for i in range(m):
            for k in range(m):
                g += S[i, k] * T[i, k]
                if i != k or pen_diag != 0.0:
                    pen += abs(T[i, k])
        gap = abs(g - m + lam * pen) / m
        if gap < tol and max_dw < tol * dscale:
            return it + 1, gap, True
    return n_sweeps, gap, False


# -- python driver ------------------------------------------------------------


def _cold_state(S, lam, pen):
    W = S * 0.95
    np.fill_diagonal(W, np.diag(S) + lam * pen)
    B = np.zeros_like(S)
    return W, B


def _state_from_theta(theta, W):
    d = np.diag(theta)
    B = -theta / d[None, :]
    np.fill_diagonal(B, 0.0)
    return W.copy(), B


def _solve_block(S, lam, pen, tol, max_iter, W0, B0, track):
    W = np.ascontiguousarray(W0, dtype=float)
    B = np.ascontiguousarray(B0, dtype=float)
    trace = []
    if track:
        n_done, gap, ok = 0, np.inf, False
        while n_done < max_iter and not ok:
            _, gap, ok = _sweeps(S, W, B, lam, float(pen), tol, 1, 1000)
            n_done += 1
            trace.append(objective(_theta_from_state(W, B), S, lam, pen))
    else:
        n_done, gap, ok = _sweeps(S, W, B, lam, float(pen), tol, max_iter, 1000)
    # the stopping rule is scale-relative; refine until the absolute KKT residual is within tol
    inner = tol
    while ok and n_done < max_iter and kkt_residual(_theta_from_state(W, B), S, lam, pen) > tol:
        inner /= 10
        it, gap, ok = _sweeps(S, W, B, lam, float(pen), inner, max_iter - n_done, 1000)
        n_done += it
        if track:
            trace.append(objective(_theta_from_state(W, B), S, lam, pen))
    if not ok:
        raise ConvergenceError(
            f"graphical lasso did not converge in {max_iter} sweeps (gap {gap:.3e})", gap=gap, lam=lam
        )
    return _theta_from_state(W, B), W, n_done, gap, trace


def fit(sigma_hat, lam: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
        warm_start: FitResult | None = None, penalize_diagonal: bool = False,
        screen: bool = True, track_objective: bool = False) -> FitResult:
    """Solve the penalized problem at a single ``lam``."""
    S = _as_cov(sigma_hat)
    p = S.shape[0]
    pen = 1.0 if penalize_diagonal else 0.0
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    diag = np.diag(S)
    if lam == 0:
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise UnboundedProblemError("sample covariance is singular and lam = 0") from None
    if np.any(diag + lam * pen <= 0):
        raise UnboundedProblemError("sample covariance has a zero diagonal entry")
    if lam == 0:
        theta = np.linalg.inv(S)
        theta = (theta + theta.T) / 2
        return FitResult(theta, 0.0, 0, 0.0, S.copy())

    comps = screen_components(S, lam) if screen else [np.arange(p)]
    theta = np.zeros((p, p))
    W = np.zeros((p, p))
    n_iter = 0
    gap = 0.0
    trace = []
    for idx in comps:
        if idx.size == 1:
            i = idx[0]
            W[i, i] = diag[i] + lam * pen
            theta[i, i] = 1.0 / W[i, i]
            continue
        Sb = np.ascontiguousarray(S[np.ix_(idx, idx)])
        if warm_start is not None:
            W0, B0 = _state_from_theta(warm_start.theta[np.ix_(idx, idx)],
                                       warm_start.covariance[np.ix_(idx, idx)])
        else:
            W0, B0 = _cold_state(Sb, lam, pen)
        try:
            tb, wb, it, g, tr = _solve_block(Sb, lam, pen, tol, max_iter, W0, B0, track_objective)
        except ConvergenceError:
            if warm_start is None:
                raise
            # warm starts can occasionally stall; retry cold
            log.debug("warm start stalled at lam=%g; retrying cold", lam)
            W0, B0 = _cold_state(Sb, lam, pen)
            tb, wb, it, g, tr = _solve_block(Sb, lam, pen, tol, max_iter, W0, B0, track_objective)
        theta[np.ix_(idx, idx)] = tb
        W[np.ix_(idx, idx)] = wb
        n_iter = max(n_iter, it)
        gap = max(gap, g)
        trace.extend(tr)
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise ConvergenceError(f"estimate at lam={lam:g} is not positive definite", gap=gap, lam=lam) from None
    return FitResult(theta, float(lam), n_iter, gap, W, trace)


def fit_path(sigma_hat, grid: RegularizationGrid, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, penalize_diagonal: bool = False,
             lam_min: float | None = None) -> PathEstimate:
    """Fit every grid value from the largest down, warm-starting each from the previous.

    With ``lam_min`` set, values below it are skipped and their slots hold ``None``.
    """
    S = _as_cov(sigma_hat)
    if not isinstance(grid, RegularizationGrid):
        grid = RegularizationGrid(grid)
    fits = [None] * grid.K
    prev = None
    for k in range(grid.K - 1, -1, -1):
        lam = grid[k]
        if lam_min is not None and lam < lam_min:
            break
        try:
            prev = fit(S, lam, tol, max_iter, warm_start=prev, penalize_diagonal=penalize_diagonal)
        except ConvergenceError as exc:
            exc.index = k
            exc.args = (f"lambda index {k} ({lam:g}): {exc.args[0]}",)
            raise
        fits[k] = prev
    path = PathEstimate(grid, fits)
    done = [f for f in fits if f is not None]
    nnz = [f.nnz_offdiag for f in done]
    if any(a < b for a, b in zip(nnz, nnz[1:])):
        log.info("support size is not monotone along the path: %s", nnz)
    return path


def write_path_summary(path, estimate: PathEstimate) -> None:
    """CSV with columns lambda, nnz_offdiag, nnz_with_diag, iterations, gap."""
    lines = ["lambda,nnz_offdiag,nnz_with_diag,iterations,gap"]
    for lam, f in zip(estimate.grid.lambdas, estimate.fits):
        if f is None:
            continue
        lines.append(f"{lam:.17g},{f.nnz_offdiag // 2},{np.count_nonzero(f.theta)},{f.n_iter},{f.gap:.6g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

