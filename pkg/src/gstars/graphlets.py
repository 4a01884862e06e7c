"""Graphlet orbit counts, graphlet correlation vectors and graphlet-stable selection.

Orbits follow the usual numbering for graphlets on 2-4 nodes::

    G0 edge            0
    G1 path P3         1 (end), 2 (middle)
    G2 triangle        3
    G3 path P4         4 (end), 5 (inner)
    G4 star K1,3       6 (leaf), 7 (center)
    G5 cycle C4        8
    G6 tailed triangle 9 (tail), 10 (degree-2 triangle node), 11 (degree-3 node)
    G7 diamond         12 (degree-2 node), 13 (degree-3 node)
    G8 clique K4       14

The fast counter evaluates, for every node, a handful of non-induced
pattern counts built from degrees and common-neighbor counts, and converts
them to induced orbit counts by subtracting the contributions of denser
graphlets. Only diamonds and 4-cliques are enumerated explicitly, through
the common neighborhoods of edges.
"""

from __future__ import annotations

import itertools
import logging
import warnings

import numpy as np
from numba import njit
from scipy.stats import rankdata

from . import stars as _stars
from .graph_core import UndirectedGraph

log = logging.getLogger(__name__)

N_ORBITS = 15
NON_REDUNDANT_ORBITS = (0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11)
GCV_LENGTH = 55


class InsufficientNodesError(ValueError):
    pass


@njit(cache=True)
def _count_orbits(A):
    p = A.shape[0]
    deg = np.zeros(p, dtype=np.int64)
    for i in range(p):
        for j in range(p):
            if A[i, j]:
                deg[i] += 1
    maxd = 0
    for i in range(p):
        if deg[i] > maxd:
            maxd = deg[i]
    nbr = np.zeros((p, max(maxd, 1)), dtype=np.int64)
    for i in range(p):
        c = 0
        for j in range(p):
            if A[i, j]:
                nbr[i, c] = j
                c += 1

    # common-neighbor counts for every pair (two-hop walk counts)
    M = np.zeros((p, p), dtype=np.int64)
    for a in range(p):
        for s in range(deg[a]):
            x = nbr[a, s]
            for t in range(deg[a]):
                y = nbr[a, t]
                if x != y:
                    M[x, y] += 1

    tri = np.zeros(p, dtype=np.int64)
    for x in range(p):
        acc = 0
        for s in range(deg[x]):
            acc += M[x, nbr[x, s]]
        tri[x] = acc // 2

    # S_a = sum over neighbors b of (d_b - 1)
    s_nb = np.zeros(p, dtype=np.int64)
    for a in range(p):
        acc = 0
        for s in range(deg[a]):
            acc += deg[nbr[a, s]] - 1
        s_nb[a] = acc

    # K4 count per edge: edges inside the common neighborhood
    k4e = np.zeros((p, p), dtype=np.int64)
    common = np.zeros(max(maxd, 1), dtype=np.int64)
    for x in range(p):
        for s in range(deg[x]):
            y = nbr[x, s]
            if y <= x:
                continue
            nc = 0
            for t in range(deg[x]):
                z = nbr[x, t]
                if A[y, z]:
                    common[nc] = z
                    nc += 1
            e = 0
            for u in range(nc):
                cu = common[u]
                for v in range(u + 1, nc):
                    if A[cu, common[v]]:
                        e += 1
            k4e[x, y] = e
            k4e[y, x] = e

    out = np.zeros((p, 15), dtype=np.int64)
    for x in range(p):
        dx = deg[x]
        tx = tri[x]
        f14 = 0
        f13 = 0
        tri_c = 0  # sum over triangles x,a,b of (c_ab - 1), doubled
        t2 = 0
        f9 = 0
        star_leaf = 0
        p_mid = 0
        p_end = 0
        for s in range(dx):
            a = nbr[x, s]
            cxa = M[x, a]
            da = deg[a]
            f14 += k4e[x, a]
            f13 += cxa * (cxa - 1) // 2 - k4e[x, a]
            t2 += cxa * (da - 2)
            f9 += tri[a] - cxa
            star_leaf += (da - 1) * (da - 2) // 2
            p_mid += (dx - 1) * (da - 1) - cxa
            p_end += s_nb[a] - (dx - 1) - cxa
            for t in range(deg[a]):
                b = nbr[a, t]
                if b != x and A[x, b]:
                    tri_c += M[a, b] - 1
        o14 = f14 // 3
        o13 = f13
        o12 = tri_c // 2 - 3 * o14
        cyc = 0
        for y in range(p):
            if y != x:
                m = M[x, y]
                cyc += m * (m - 1) // 2
        o11 = tx * (dx - 2) - 2 * o13 - 3 * o14
        o7 = dx * (dx - 1) * (dx - 2) // 6 - o11 - o13 - o14
        o10 = t2 - 2 * o12 - 2 * o13 - 6 * o14
        o9 = f9 - 2 * o12 - 3 * o14
        o8 = cyc - o12 - o13 - 3 * o14
        o6 = star_leaf - o9 - o10 - 2 * o12 - o13 - 3 * o14
        o5 = p_mid - 2 * o8 - o10 - 2 * o11 - 2 * o12 - 4 * o13 - 6 * o14
        o4 = p_end - 2 * o8 - 2 * o9 - o10 - 4 * o12 - 2 * o13 - 6 * o14
        out[x, 0] = dx
        out[x, 1] = s_nb[x] - 2 * tx
        out[x, 2] = dx * (dx - 1) // 2 - tx
        out[x, 3] = tx
        out[x, 4] = o4
        out[x, 5] = o5
        out[x, 6] = o6
        out[x, 7] = o7
        out[x, 8] = o8
        out[x, 9] = o9
        out[x, 10] = o10
        out[x, 11] = o11
        out[x, 12] = o12
        out[x, 13] = o13
        out[x, 14] = o14
    return out


def _adjacency(graph) -> np.ndarray:
    if isinstance(graph, UndirectedGraph):
        return np.ascontiguousarray(graph.adjacency)
    A = np.asarray(graph, dtype=bool)
    return np.ascontiguousarray(A)


def count_orbits(graph) -> np.ndarray:
    """p x 15 integer matrix of orbit counts (the graphlet degree matrix)."""
    A = _adjacency(graph)
    if A.shape[0] == 0:
        return np.zeros((0, N_ORBITS), dtype=np.int64)
    return _count_orbits(A)


# orbit of each node inside a connected induced subgraph, keyed by the
# sorted degree sequence (which identifies graphlets on <= 4 nodes)
_DEGREE_SIGNATURES = {
    (1, 1): {1: 0},
    (1, 1, 2): {1: 1, 2: 2},
    (2, 2, 2): {2: 3},
    (1, 1, 2, 2): {1: 4, 2: 5},
    (1, 1, 1, 3): {1: 6, 3: 7},
    (2, 2, 2, 2): {2: 8},
    (1, 2, 2, 3): {1: 9, 2: 10, 3: 11},
    (2, 2, 3, 3): {2: 12, 3: 13},
    (3, 3, 3, 3): {3: 14},
}


def count_orbits_exhaustive(graph) -> np.ndarray:
    """Orbit counts by visiting every 2-, 3- and 4-node subset; for small graphs."""
    A = _adjacency(graph)
    p = A.shape[0]
    if p > 30:
        raise ValueError("exhaustive counting is limited to p <= 30")
    out = np.zeros((p, N_ORBITS), dtype=np.int64)
    for size in (2, 3, 4):
        for nodes in itertools.combinations(range(p), size):
            sub = A[np.ix_(nodes, nodes)]
            d = sub.sum(axis=1)
            # disconnected subsets never match: their degree sequences
            # (0,..), (1,1,1,1) and (0,2,2,2) are absent from the table
            table = _DEGREE_SIGNATURES.get(tuple(sorted(d.tolist())))
            if table is None:
                continue
            for v, dv in zip(nodes, d):
                out[v, table[int(dv)]] += 1
    return out


def gcm(M) -> np.ndarray:
    """11 x 11 Spearman correlation of the non-redundant orbit columns.

    Average ranks for ties. A constant column correlates 0 with every other
    column; the diagonal is always 1.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] not in (N_ORBITS, len(NON_REDUNDANT_ORBITS)):
        raise ValueError(f"expected a p x 15 or p x 11 matrix, got shape {M.shape}")
    if M.shape[0] < 2:
        raise InsufficientNodesError("need at least two nodes")
    if M.shape[1] == N_ORBITS:
        M = M[:, NON_REDUNDANT_ORBITS]
    R = rankdata(M, axis=0, method="average")
    R = R - R.mean(axis=0)
    norm = np.sqrt((R * R).sum(axis=0))
    const = norm == 0
    norm[const] = 1.0
    Z = R / norm
    C = Z.T @ Z
    C[const, :] = 0.0
    C[:, const] = 0.0
    C = np.clip(C, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return (C + C.T) / 2


def gcv(R) -> np.ndarray:
    """Strictly lower triangle of an 11 x 11 correlation matrix, column-wise (55 entries)."""
    R = np.asarray(R)
    cols, rows = np.triu_indices(R.shape[0], k=1)
    return R[rows, cols].copy()


def gcv_to_matrix(rho, size: int = 11) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    cols, rows = np.triu_indices(size, k=1)
    if rho.size != rows.size:
        raise ValueError(f"expected {rows.size} entries, got {rho.size}")
    R = np.eye(size)
    R[rows, cols] = rho
    R[cols, rows] = rho
    return R


def graph_gcv(graph) -> np.ndarray:
    return gcv(gcm(count_orbits(graph)))


def gcd(rho_a, rho_b) -> float:
    """Euclidean distance between two graphlet correlation vectors."""
    a = np.asarray(rho_a, dtype=float)
    b = np.asarray(rho_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _mean_pairwise(V: np.ndarray) -> float:
    N = V.shape[0]
    total = 0.0
    for r in range(1, N):
        d = np.sqrt(((V[:r] - V[r]) ** 2).sum(axis=1))
        total += d.sum()
    return 2.0 * total / (N * (N - 1))


def graphlet_variability(graphs) -> float:
    """Mean pairwise graphlet correlation distance over a list of graphs (or GCVs)."""
    graphs = list(graphs)
    if len(graphs) < 2:
        raise ValueError("need at least two graphs")
    V = np.stack([g if isinstance(g, np.ndarray) and g.ndim == 1 else graph_gcv(g) for g in graphs])
    return _mean_pairwise(V)


def variability_curve(fits, p: int, ks) -> np.ndarray:
    """d_hat at each grid index in ``ks`` from subsample fits; NaN when fewer than two graphs."""
    K = max((len(f.edges) for f in fits), default=0)
    out = np.full(K, np.nan)
    for k in ks:
        vecs = []
        for f in fits:
            e = f.edges[k]
            if e is not None:
                vecs.append(graph_gcv(UndirectedGraph.from_edge_vector(p, e)))
        if len(vecs) >= 2:
            out[k] = _mean_pairwise(np.stack(vecs))
    return out


def argmin_larger(values, ks) -> int | None:
    """Index in ``ks`` minimizing ``values``; ties go to the largest index."""
    best = None
    for k in ks:
        v = values[k]
        if np.isnan(v):
            continue
        if best is None or v <= values[best]:
            best = k
    return best


def run_gstars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1, final_fit=True,
               full_curve=False) -> _stars.RunState:
    solver = solver or _stars.SolverConfig()
    state = _stars.run_bstars(X, grid, beta, N, solver, seed, workers, final_fit=False, method="gstars")
    rep = state.report
    p = np.asarray(X).shape[1]
    if rep.k_lb is None:
        warnings.warn("empty bounded interval; falling back to lambda_beta", _stars.BoundWarning, stacklevel=2)
        rep.notes.append("empty bounded interval; lambda_gamma set to lambda_beta")
        rep.k_gamma = rep.k_beta
        ks = range(state.grid.K) if full_curve else []
    else:
        ks = range(rep.k_lb, state.grid.K) if full_curve else range(rep.k_lb, rep.k_ub + 1)
    d_hat = variability_curve(state.fits, p, ks)
    rep.curves["d_hat"] = d_hat
    if rep.k_lb is not None:
        rep.k_gamma = argmin_larger(d_hat, range(rep.k_lb, rep.k_ub + 1))
        if rep.k_gamma is None:
            rep.k_gamma = rep.k_beta
    if final_fit:
        _stars._final_fit(np.asarray(X, dtype=float), rep, solver)
    return state


def gstars(X, grid=None, beta=0.1, N=20, solver=None, seed=0, workers=1) -> _stars.SelectionReport:
    """Bounded interval from the two-phase procedure, then the lambda of least graphlet variability in it."""
    return run_gstars(X, grid, beta, N, solver, seed, workers).report
