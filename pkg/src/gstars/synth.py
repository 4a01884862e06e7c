"""Ground-truth precision models and Gaussian sampling.

All generators build a precision matrix whose diagonal is the row-wise
absolute off-diagonal sum plus ``delta`` (strict diagonal dominance), which
certifies positive definiteness. With ``unit_variance`` (the default) the
matrix is then rescaled as ``D^{1/2} theta D^{1/2}``, ``D = diag(theta^{-1})``,
so the implied covariance is a correlation matrix. The rescaling is a
congruence and keeps both the support and positive definiteness.

The neighborhood generator is an approximation of the geometric
nearest-neighbor construction common in the StARS literature; its constants
are calibrated so that the mean edge count is about 1.65 p.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph_core import PrecisionModel, lower_indices, n_pairs

FAMILIES = ("erdos_renyi", "hub", "neighborhood")

# acceptance rate of exp(-k u), u ~ U(0, 1), is (1 - e^-k)/k; k = 1.6 gives ~1/2
_NEIGHBORHOOD_DECAY = 1.6


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class GeneratorConfig:
    family: str
    p: int
    seed: int = 0
    sparsity: float | None = None
    weight_range: tuple[float, float] = (-1.0, 1.0)
    n_hubs: int = 2
    hub_weight: float = 0.245
    edges_per_node: float = 1.65
    weight: float = 0.245
    delta: float = 0.1
    unit_variance: bool = True

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError("family", f"must be one of {FAMILIES}, got {self.family!r}")
        if not isinstance(self.p, (int, np.integer)) or self.p < 2:
            raise ConfigError("p", f"must be an integer >= 2, got {self.p!r}")
        if self.sparsity is not None and not (0.0 < self.sparsity < 1.0):
            raise ConfigError("sparsity", f"must lie in (0, 1), got {self.sparsity!r}")
        lo, hi = self.weight_range
        if not (-1.0 <= lo <= hi <= 1.0):
            raise ConfigError("weight_range", f"must be a sub-interval of [-1, 1], got {self.weight_range!r}")
        if self.delta <= 0:
            raise ConfigError("delta", "must be positive")
        if self.family == "hub":
            if self.n_hubs < 1 or self.p // self.n_hubs < 2:
                raise ConfigError("n_hubs", f"group size p // n_hubs must be >= 2 (p={self.p}, n_hubs={self.n_hubs})")
            if self.hub_weight == 0:
                raise ConfigError("hub_weight", "must be nonzero")
        if self.family == "neighborhood" and self.edges_per_node <= 0:
            raise ConfigError("edges_per_node", "must be positive")

    def build(self) -> PrecisionModel:
        self.validate()
        if self.family == "erdos_renyi":
            sparsity = self.sparsity if self.sparsity is not None else 3.0 / self.p
            return gen_erdos_renyi(self.p, sparsity, self.weight_range, self.seed, delta=self.delta,
                                   unit_variance=self.unit_variance)
        if self.family == "hub":
            return gen_hub(self.p, self.n_hubs, self.hub_weight, self.seed, delta=self.delta,
                           unit_variance=self.unit_variance)
        return gen_neighborhood(self.p, self.seed, edges_per_node=self.edges_per_node,
                                weight=self.weight, delta=self.delta, unit_variance=self.unit_variance)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown generator field")
        for name in ("family", "p"):
            if name not in d:
                raise ConfigError(name, "missing required field")
        d = dict(d)
        if "weight_range" in d:
            d["weight_range"] = tuple(d["weight_range"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "GeneratorConfig":
        """Read a JSON (or YAML, by extension) generator config."""
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yml", ".yaml"):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weight_range"] = list(self.weight_range)
        return d


def _dominant_diagonal(W: np.ndarray, delta: float) -> np.ndarray:
    theta = W.copy()
    np.fill_diagonal(theta, 0.0)
    theta = (theta + theta.T) / 2  # exact symmetry
    np.fill_diagonal(theta, np.abs(theta).sum(axis=1) + delta)
    return theta


def unit_variance_scaling(theta: np.ndarray) -> np.ndarray:
    """Rescale a precision matrix so its inverse has unit diagonal."""
    s = np.sqrt(np.diag(np.linalg.inv(theta)))
    out = theta * np.outer(s, s)
    return (out + out.T) / 2


def _model(W, delta, unit_variance) -> PrecisionModel:
    theta = _dominant_diagonal(W, delta)
    return PrecisionModel(unit_variance_scaling(theta) if unit_variance else theta)


def gen_erdos_renyi(p, sparsity, weight_range=(-1.0, 1.0), seed=0, delta=0.1,
                    unit_variance=True) -> PrecisionModel:
    """Erdos-Renyi support with i.i.d. Bernoulli(sparsity) pairs and uniform weights."""
    if not (0.0 < sparsity < 1.0):
        raise ConfigError("sparsity", f"must lie in (0, 1), got {sparsity!r}")
    lo, hi = weight_range
    if not (-1.0 <= lo <= hi <= 1.0):
        raise ConfigError("weight_range", f"must be a sub-interval of [-1, 1], got {weight_range!r}")
    rng = np.random.default_rng(seed)
    L = n_pairs(p)
    present = rng.random(L) < sparsity
    w = rng.uniform(lo, hi, size=L)
    # a zero draw would silently drop an edge
    w[present & (w == 0.0)] = hi if hi != 0 else lo
    r, c = lower_indices(p)
    W = np.zeros((p, p))
    W[r[present], c[present]] = w[present]
    W = W + W.T
    return _model(W, delta, unit_variance)


def gen_hub(p, n_hubs, hub_weight, seed=0, delta=0.1, unit_variance=True) -> PrecisionModel:
    """Disjoint stars: nodes split into ``n_hubs`` contiguous groups, the first node of each is the hub.

    ``seed`` is accepted for interface uniformity; the construction is deterministic.
    """
    if n_hubs < 1 or p // n_hubs < 2:
        raise ConfigError("n_hubs", f"group size p // n_hubs must be >= 2 (p={p}, n_hubs={n_hubs})")
    if hub_weight == 0:
        raise ConfigError("hub_weight", "must be nonzero")
    W = np.zeros((p, p))
    groups = np.array_split(np.arange(p), n_hubs)
    for g in groups:
        hub, leaves = g[0], g[1:]
        W[hub, leaves] = hub_weight
        W[leaves, hub] = hub_weight
    return _model(W, delta, unit_variance)


def gen_neighborhood(p, seed=0, edges_per_node=1.65, weight=0.245, delta=0.1,
                     unit_variance=True) -> PrecisionModel:
    """Geometric random graph on the unit square.

    The ``2 * edges_per_node * p`` closest pairs form the candidate pool; each
    candidate at squared distance ``d2`` is kept with probability
    ``exp(-1.6 * d2 / d2_max)`` where ``d2_max`` is the largest candidate
    distance, which keeps about half of them.
    """
    if p < 2:
        raise ConfigError("p", "must be >= 2")
    rng = np.random.default_rng(seed)
    xy = rng.random((p, 2))
    r, c = lower_indices(p)
    d2 = ((xy[r] - xy[c]) ** 2).sum(axis=1)
    L = len(d2)
    n_cand = min(L, max(1, int(round(2 * edges_per_node * p))))
    order = np.argsort(d2, kind="stable")[:n_cand]
    scale = d2[order[-1]] if d2[order[-1]] > 0 else 1.0
    keep = rng.random(n_cand) < np.exp(-_NEIGHBORHOOD_DECAY * d2[order] / scale)
    chosen = order[keep]
    W = np.zeros((p, p))
    W[r[chosen], c[chosen]] = weight
    W = W + W.T
    return _model(W, delta, unit_variance)


class FactorizationError(np.linalg.LinAlgError):
    pass


def sample_mvn(model: PrecisionModel | np.ndarray, n: int, seed=0) -> np.ndarray:
    """Draw ``n`` rows from N(0, theta^{-1}).

    Uses the Cholesky factor of the precision, ``theta = R^T R``: if z ~ N(0, I)
    then ``R^{-1} z`` has covariance ``theta^{-1}``.
    """
    theta = model.theta if isinstance(model, PrecisionModel) else np.asarray(model, dtype=float)
    if n < 1:
        raise ConfigError("n", "must be >= 1")
    try:
        R = np.linalg.cholesky(theta).T  # upper, theta = R^T R
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"precision matrix is not positive definite: {exc}") from None
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, theta.shape[0]))
    from scipy.linalg import solve_triangular

    # rows x = R^{-1} z  <=>  X^T = R^{-1} Z^T
    return solve_triangular(R, Z.T, lower=False).T
