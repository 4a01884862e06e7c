"""Undirected graphs, lower-triangular edge indexing and matrix/graph conversion.

Nodes are 0-based internally. The public ``edge_index``/``index_to_pair``
pair uses the 1-based convention of the column-wise lower-triangular order:
(2,1) -> 1, (3,1) -> 2, ..., (p,1) -> p-1, (3,2) -> p, ..., (p,p-1) -> L.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InvalidPairError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class EdgeListParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def n_pairs(p: int) -> int:
    """Number of unordered node pairs L = p(p-1)/2."""
    return p * (p - 1) // 2


def edge_index(i: int, j: int, p: int) -> int:
    """1-based single index of the node pair (i, j) with 1 <= j < i <= p."""
    if not (1 <= j < i <= p):
        raise InvalidPairError(f"invalid pair ({i}, {j}) for p={p}; need 1 <= j < i <= p")
    return (j - 1) * p - j * (j - 1) // 2 + (i - j)


def index_to_pair(l: int, p: int) -> tuple[int, int]:
    """Inverse of :func:`edge_index`."""
    L = n_pairs(p)
    if not (1 <= l <= L):
        raise InvalidPairError(f"index {l} out of range 1..{L}")
    j = 1
    # column j holds p - j pairs
    while l > p - j:
        l -= p - j
        j += 1
    return j + l, j


def lower_indices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based (row, col) arrays of the strictly lower triangle in column-wise order.

    Position ``k`` of the returned arrays is the pair with 1-based index k+1.
    """
    cols, rows = np.triu_indices(p, k=1)
    # triu_indices enumerates row-major over the upper triangle, which is the
    # column-major order of the transposed (lower) triangle
    return rows, cols


@dataclass(frozen=True, eq=False)
class UndirectedGraph:
    """Simple undirected graph on nodes 0..p-1 stored as a dense boolean adjacency."""

    adjacency: np.ndarray
    p: int = field(init=False)
    edge_count: int = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"adjacency must be square, got shape {A.shape}")
        if not np.array_equal(A, A.T):
            raise ShapeError("adjacency must be symmetric")
        if A.diagonal().any():
            raise ShapeError("self-loops are not allowed")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "p", A.shape[0])
        object.__setattr__(self, "edge_count", int(A.sum()) // 2)

    @classmethod
    def empty(cls, p: int) -> "UndirectedGraph":
        return cls(np.zeros((p, p), dtype=bool))

    @classmethod
    def from_edges(cls, p: int, edges) -> "UndirectedGraph":
        """Build from 0-based ``(i, j)`` pairs."""
        A = np.zeros((p, p), dtype=bool)
        for i, j in edges:
            if i == j:
                raise ShapeError(f"self-loop at node {i}")
            A[i, j] = A[j, i] = True
        return cls(A)

    @classmethod
    def from_edge_vector(cls, p: int, vec) -> "UndirectedGraph":
        """Build from a length-L indicator vector in edge-index order."""
        vec = np.asarray(vec, dtype=bool)
        if vec.shape != (n_pairs(p),):
            raise ShapeError(f"edge vector must have length {n_pairs(p)}")
        A = np.zeros((p, p), dtype=bool)
        r, c = lower_indices(p)
        A[r, c] = vec
        A |= A.T
        return cls(A)

    def edge_vector(self) -> np.ndarray:
        """Length-L boolean indicator in edge-index order."""
        r, c = lower_indices(self.p)
        return self.adjacency[r, c]

    def edges(self) -> list[tuple[int, int]]:
        """0-based ``(i, j)`` pairs with i > j, in edge-index order."""
        r, c = lower_indices(self.p)
        mask = self.adjacency[r, c]
        return list(zip(r[mask].tolist(), c[mask].tolist()))

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def relabel(self, perm) -> "UndirectedGraph":
        """Graph with node ``perm[v]`` in place of node ``v``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return UndirectedGraph(self.adjacency[np.ix_(inv, inv)])

    def __eq__(self, other):
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())

    def __repr__(self):
        return f"UndirectedGraph(p={self.p}, edge_count={self.edge_count})"


def support_graph(theta, tol: float = 0.0) -> UndirectedGraph:
    """Graph with an edge (i, j) wherever ``|theta_ij| > tol`` off the diagonal."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ShapeError(f"theta must be square, got shape {theta.shape}")
    if not np.allclose(theta, theta.T, rtol=0, atol=1e-12 * max(1.0, np.abs(theta).max(initial=0))):
        raise ShapeError("theta must be symmetric")
    A = np.abs(theta) > tol
    A = A & A.T
    np.fill_diagonal(A, False)
    return UndirectedGraph(A)


@dataclass(frozen=True, eq=False)
class PrecisionModel:
    """Symmetric positive-definite precision matrix together with its support graph."""

    theta: np.ndarray
    graph: UndirectedGraph = field(init=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ShapeError(f"theta must be square, got shape {theta.shape}")
        if not np.array_equal(theta, theta.T):
            raise ShapeError("theta must be exactly symmetric")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "graph", support_graph(theta, 0.0))

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.theta)[0])

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.theta)


# -- text formats ---------------------------------------------------------


def write_edge_list(path, theta_or_graph, weights=True) -> None:
    """Write "i j weight" lines (1-based, i > j) in edge-index order.

    For a :class:`UndirectedGraph` the weight column is 1.
    """
    if isinstance(theta_or_graph, UndirectedGraph):
        g, theta = theta_or_graph, None
    else:
        theta = np.asarray(theta_or_graph, dtype=float)
        g = support_graph(theta)
    buf = io.StringIO()
    for i, j in g.edges():
        w = 1.0 if theta is None else theta[i, j]
        if weights:
            buf.write(f"{i + 1} {j + 1} {w:.17g}\n")
        else:
            buf.write(f"{i + 1} {j + 1}\n")
    Path(path).write_text(buf.getvalue())


def read_edge_list(path, p: int | None = None) -> tuple[UndirectedGraph, dict]:
    """Parse an edge-list file of "i j [weight]" lines.

    Blank lines and ``#`` comments are skipped. Node count defaults to the
    largest node id seen. Returns the graph and a ``{(i, j): weight}`` map
    with 0-based keys, i > j.
    """
    pairs = {}
    max_node = 0
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) not in (2, 3):
            raise EdgeListParseError(f"expected 'i j [weight]', got {raw!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise EdgeListParseError(f"non-numeric field in {raw!r}", lineno) from None
        if i < 1 or j < 1:
            raise EdgeListParseError("node ids are 1-based", lineno)
        if i == j:
            raise EdgeListParseError(f"self-loop on node {i}", lineno)
        if i < j:
            i, j = j, i
        pairs[(i - 1, j - 1)] = w
        max_node = max(max_node, i)
    if p is None:
        p = max_node
    elif max_node > p:
        raise EdgeListParseError(f"node id {max_node} exceeds p={p}")
    return UndirectedGraph.from_edges(p, pairs.keys()), pairs


def write_matrix_csv(path, M, fmt="%.17g") -> None:
    np.savetxt(path, np.asarray(M), delimiter=",", fmt=fmt)


def write_precision(prefix, theta) -> tuple[Path, Path]:
    """Write ``<prefix>_edges.txt`` and ``<prefix>_diag.csv``."""
    prefix = Path(prefix)
    edges = prefix.with_name(prefix.name + "_edges.txt")
    diag = prefix.with_name(prefix.name + "_diag.csv")
    write_edge_list(edges, theta)
    np.savetxt(diag, np.diag(theta), delimiter=",", fmt="%.17g")
    return edges, diag


def read_precision(prefix) -> np.ndarray:
    prefix = Path(prefix)
    d = np.atleast_1d(np.loadtxt(prefix.with_name(prefix.name + "_diag.csv"), delimiter=","))
    theta = np.diag(d)
    _, weights = read_edge_list(prefix.with_name(prefix.name + "_edges.txt"), p=len(d))
    for (i, j), w in weights.items():
        theta[i, j] = theta[j, i] = w
    return theta
