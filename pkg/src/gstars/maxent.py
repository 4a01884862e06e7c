"""Maximum-entropy models for the distribution of edge probabilities.

For ``N`` subsamples edge frequencies live on ``alpha_i = i / N``. Given a
target mean ``qbar`` (up to ``eps``), caps on the mass at 0 and at 1 and a
bimodality parameter ``c``, the model is::

    max  -sum q_i log q_i
    s.t. |sum alpha_i q_i - qbar| <= eps
         q_0 <= cap0,  q_N <= cap2
         sum (alpha_i^3 - c alpha_i) q_i >= 0
         q on the probability simplex

All constraints are linear, written below as ``G q <= h``. The solver works
on the dual ``min_{mu >= 0} log sum_i exp(-(G^T mu)_i) + h . mu`` whose
minimizer gives ``q_i ∝ exp(-(G^T mu)_i)``. Coordinates that every feasible
point must set to zero are removed first with linear programs; on the
remaining support the dual minimum is attained. Inequalities that cannot
be made slack (for example at ``c = c_max``) are handled the same way and
get a free-sign multiplier.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

log = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-6
STATIONARITY_TOL = 1e-5
_ZERO_SUPPORT = 1e-10
# rows that can never have more slack than this are solved as equalities
_THIN_SLACK = 1e-9


class MaxEntError(RuntimeError):
    """The solver failed on a feasible problem."""


class InconsistentPriorsError(ValueError):
    """The program is infeasible even at c = 0."""


@dataclass(frozen=True)
class MaxEntInput:
    N: int
    qbar: float
    eps: float
    cap0: float = 1.0
    cap2: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not 0.0 <= self.qbar <= 1.0:
            raise ValueError(f"qbar must lie in [0, 1], got {self.qbar!r}")
        if not self.eps >= 0.0:
            raise ValueError(f"eps must be nonnegative, got {self.eps!r}")
        for name in ("cap0", "cap2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not self.c >= 0.0:
            raise ValueError(f"c must be nonnegative, got {self.c!r}")

    @property
    def alpha(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    def with_(self, **kw) -> "MaxEntInput":
        return replace(self, **kw)


@dataclass(frozen=True)
class MaxEntModel:
    N: int
    c: float
    alpha: np.ndarray
    q: np.ndarray
    entropy: float
    mean: float
    variance: float
    multipliers: np.ndarray = field(repr=False)
    constraint_residual: float = 0.0
    stationarity_residual: float = 0.0
    feasible: bool = True


@dataclass(frozen=True)
class Infeasible:
    N: int
    c: float
    reason: str
    feasible: bool = False


def constraint_system(inp: MaxEntInput) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``G q <= h`` for the five inequality constraints."""
    a = inp.alpha
    n1 = inp.N + 1
    e0 = np.zeros(n1)
    e0[0] = 1.0
    eN = np.zeros(n1)
    eN[-1] = 1.0
    g = a ** 3 - inp.c * a
    G = np.vstack([a, -a, e0, eN, -g])
    h = np.array([inp.qbar + inp.eps, -(inp.qbar - inp.eps), inp.cap0, inp.cap2, 0.0])
    return G, h


def constraint_residual(inp: MaxEntInput, q) -> float:
    """Largest violation of the inequality and simplex constraints."""
    q = np.asarray(q, dtype=float)
    G, h = constraint_system(inp)
    viol = max(0.0, float(np.max(G @ q - h)))
    return max(viol, abs(float(q.sum()) - 1.0), float(max(0.0, -q.min())))


def entropy(q) -> float:
    q = np.asarray(q, dtype=float)
    nz = q[q > 0]
    return float(-np.sum(nz * np.log(nz)))


def _lp(obj, G, h, E=None, e=None):
    n1 = G.shape[1]
    A_eq = np.ones((1, n1))
    b_eq = [1.0]
    if E is not None and len(E):
        A_eq = np.vstack([A_eq, E])
        b_eq = np.concatenate([b_eq, e])
    return linprog(obj, A_ub=G, b_ub=h, A_eq=A_eq, b_eq=b_eq,
                   bounds=[(0, None)] * n1, method="highs",
                   options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})


def is_feasible(inp: MaxEntInput) -> bool:
    """LP feasibility oracle for the constraint set."""
    G, h = constraint_system(inp)
    res = _lp(np.zeros(G.shape[1]), G, h)
    return res.status == 0


def _reduce(G, h):
    """Facial reduction of ``{q in simplex : G q <= h}``.

    Returns ``(support, tight, q_ref)``: the coordinates some feasible point
    makes positive, the rows whose slack can never exceed ``_THIN_SLACK``
    (treated as equalities at ``q_ref``), and a feasible reference point
    that is the average of the LP solutions visited. None if infeasible.
    """
    n1 = G.shape[1]
    res = _lp(np.zeros(n1), G, h)
    if res.status != 0:
        return None
    points = [res.x]
    tight = np.zeros(G.shape[0], dtype=bool)
    for j in range(G.shape[0]):
        res = _lp(G[j], G, h)
        if res.status == 0:
            points.append(res.x)
            tight[j] = h[j] - G[j] @ res.x <= _THIN_SLACK
    q_ref = np.mean(points, axis=0)
    E, e = G[tight], G[tight] @ q_ref
    free = np.zeros(n1, dtype=bool)
    for x in points:
        free |= x > _ZERO_SUPPORT
    for i in range(n1):
        if free[i]:
            continue
        obj = np.zeros(n1)
        obj[i] = -1.0
        res = _lp(obj, G[~tight], h[~tight], E, e)
        if res.status == 0:
            free |= res.x > _ZERO_SUPPORT
    return free, tight, q_ref


def _dual_parts(mu, Gs, hs):
    z = -(Gs.T @ mu)
    lse = logsumexp(z)
    q = np.exp(z - lse)
    return lse + hs @ mu, hs - Gs @ q, q


def _projected_gradient(mu, grad, eq) -> float:
    pg = np.where((mu > 0) | eq, grad, np.minimum(grad, 0.0))
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def _newton_polish(mu, Gs, hs, eq, n_iter=30):
    """Newton steps on the active multipliers; keeps inequality multipliers >= 0."""
    lower = np.where(eq, -np.inf, 0.0)
    for _ in range(n_iter):
        f, grad, q = _dual_parts(mu, Gs, hs)
        pg = _projected_gradient(mu, grad, eq)
        if pg < 1e-13:
            break
        act = (mu > 0) | (grad < 0) | eq
        Ga = Gs[act]
        m = Ga @ q
        H = (Ga * q) @ Ga.T - np.outer(m, m)
        step = np.zeros_like(mu)
        step[act] = -np.linalg.lstsq(H + 1e-14 * np.eye(H.shape[0]), grad[act], rcond=None)[0]
        # stop at the first bound instead of clipping, so the step keeps its direction
        # (needed when paired mean rows make H singular and the step is huge)
        hit = (step < 0) & np.isfinite(lower)
        t = min(1.0, float(np.min((mu[hit] - lower[hit]) / -step[hit]))) if hit.any() else 1.0
        if t <= 0.0:
            t = 1.0
        t_min = 1e-10 * t
        while t > t_min:
            cand = np.maximum(mu + t * step, lower)
            fc, gc, _ = _dual_parts(cand, Gs, hs)
            if fc <= f + 1e-15 * max(1.0, abs(f)) and _projected_gradient(cand, gc, eq) <= pg:
                break
            t /= 2
        else:
            break
        mu = cand
    return mu


def solve_maxent(inp: MaxEntInput) -> MaxEntModel | Infeasible:
    """Entropy maximizer of the constrained program, or :class:`Infeasible`."""
    G, h = constraint_system(inp)
    red = _reduce(G, h)
    if red is None:
        return Infeasible(inp.N, inp.c, "constraint set is empty")
    support, tight, q_ref = red
    hh = np.where(tight, G @ q_ref, h)
    Gs = G[:, support]
    # rows without coefficients on the support are constant
    rows = np.any(Gs != 0, axis=1)
    Gs, hs, eq = Gs[rows], hh[rows], tight[rows]

    mu = np.zeros(Gs.shape[0])
    if Gs.shape[0]:
        bounds = [(None, None) if e_ else (0, None) for e_ in eq]
        res = minimize(lambda m: _dual_parts(m, Gs, hs)[:2], mu, jac=True, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": 5000, "ftol": 1e-16, "gtol": 1e-12})
        lower = np.where(eq, -np.inf, 0.0)
        mu = _newton_polish(np.maximum(res.x, lower), Gs, hs, eq)
    _, grad, qs = _dual_parts(mu, Gs, hs)
    q = np.zeros(inp.N + 1)
    q[support] = qs
    stat = _projected_gradient(mu, grad, eq)
    resid = constraint_residual(inp, q)
    if resid > CONSTRAINT_TOL or stat > STATIONARITY_TOL:
        raise MaxEntError(f"dual solve did not converge (constraint residual {resid:.2e}, "
                          f"stationarity {stat:.2e}) at N={inp.N}, c={inp.c}")
    full_mu = np.zeros(G.shape[0])
    full_mu[rows] = mu
    a = inp.alpha
    mean = float(a @ q)
    return MaxEntModel(N=inp.N, c=inp.c, alpha=a, q=q, entropy=entropy(q), mean=mean,
                       variance=float(max(q @ a ** 2 - mean ** 2, 0.0)), multipliers=full_mu,
                       constraint_residual=resid, stationarity_residual=stat)


def find_c_max(inp: MaxEntInput, tol: float = 1e-7, c_limit: float = 2.0 ** 30) -> float:
    """Largest c keeping the program feasible, by bisection on an LP feasibility check.

    Returns ``inf`` when feasibility never breaks, which happens when a point
    with zero mean is admissible.
    """
    if not is_feasible(inp.with_(c=0.0)):
        raise InconsistentPriorsError("program is infeasible at c = 0; priors are inconsistent")
    lo, hi = 0.0, 1.0
    while is_feasible(inp.with_(c=hi)):
        lo, hi = hi, 2 * hi
        if hi > c_limit:
            log.info("feasible for every c up to %g; reporting c_max = inf", c_limit)
            return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(inp.with_(c=mid)):
            lo = mid
        else:
            hi = mid
    return lo


def predicted_within_variability(model: MaxEntModel) -> float:
    """``4 sigma_q^2``, on the same scale as the within-probability variability."""
    return 4.0 * model.variance


@dataclass(frozen=True)
class SequenceEntry:
    N: int
    c: float
    model: MaxEntModel | None
    reason: str = ""

    @property
    def feasible(self) -> bool:
        return self.model is not None

    @property
    def variance(self) -> float:
        return self.model.variance if self.model is not None else math.nan


def variance_sequence(inp: MaxEntInput, c: float, N_range) -> list[SequenceEntry]:
    """Solve at each N with fixed priors; infeasible entries carry the reason."""
    out = []
    for N in N_range:
        r = solve_maxent(inp.with_(N=int(N), c=float(c)))
        if isinstance(r, Infeasible):
            out.append(SequenceEntry(int(N), float(c), None, r.reason))
        else:
            out.append(SequenceEntry(int(N), float(c), r))
    return out


@dataclass(frozen=True)
class Priors:
    qbar: float
    eps: float
    cap0: float
    cap2: float

    def input(self, N: int, c: float = 0.0) -> MaxEntInput:
        return MaxEntInput(N=N, qbar=self.qbar, eps=self.eps, cap0=self.cap0, cap2=self.cap2, c=c)


def priors_from_frequencies(theta2, eps: float | None = None) -> Priors:
    """Priors from edge frequencies after two subsamples (values in {0, 1/2, 1}).

    ``eps`` defaults to ``3 / L``.
    """
    t = np.asarray(theta2, dtype=float).ravel()
    L = t.size
    return Priors(qbar=float(t.mean()), eps=3.0 / L if eps is None else float(eps),
                  cap0=float(np.mean(t == 0.0)), cap2=float(np.mean(t == 1.0)))


def write_sequences_csv(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "c", "mean", "variance", "entropy", "feasible"])
        for e in entries:
            if e.model is None:
                w.writerow([e.N, repr(e.c), "", "", "", 0])
            else:
                m = e.model
                w.writerow([e.N, repr(e.c), repr(m.mean), repr(m.variance), repr(m.entropy), 1])
