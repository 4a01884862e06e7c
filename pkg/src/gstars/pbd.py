"""Poisson-Binomial model of edge instability.

For a vector of trial probabilities ``p`` (one per node pair) the variance of
the success count splits as ``sum p(1-p) = L pbar(1-pbar) - L var(p)``. Applied
to a column of subsample edge frequencies this gives the identity
``D = D_ub - Delta`` between the total instability, its mean-probability
upper bound and the within-probability variability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    pass


def _check_probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if p.size < 1:
        raise DomainError("need at least one trial probability")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("trial probabilities must lie in [0, 1]")
    return p


@dataclass(frozen=True)
class VarianceDecomposition:
    total: float
    mean_term: float
    within_term: float


def pbd_pmf(p) -> np.ndarray:
    """Exact PMF of the number of successes, over {0, ..., L}.

    Built by adding one trial at a time: ``f_new[y] = f[y] (1 - p_l) + f[y-1] p_l``.
    """
    p = _check_probs(p)
    f = np.zeros(p.size + 1)
    f[0] = 1.0
    for l, pl in enumerate(p, start=1):
        f[1:l + 1] = f[1:l + 1] * (1.0 - pl) + f[:l] * pl
        f[0] *= 1.0 - pl
    return f


def variance_decomposition(p) -> VarianceDecomposition:
    p = _check_probs(p)
    L = p.size
    pbar = p.mean()
    return VarianceDecomposition(
        total=float(np.sum(p * (1.0 - p))),
        mean_term=float(L * pbar * (1.0 - pbar)),
        within_term=float(np.sum((p - pbar) ** 2)),
    )


def chebyshev_bound(L: int, eps: float) -> float:
    """Upper bound ``1/(4 L eps^2)`` on P(|Ybar - pbar| > eps)."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    if L < 1:
        raise DomainError("L must be >= 1")
    return 1.0 / (4.0 * L * eps * eps)


def _columns(theta_hat) -> np.ndarray:
    t = np.asarray(theta_hat, dtype=float)
    return t[:, None] if t.ndim == 1 else t


def total_instability(theta_hat) -> np.ndarray:
    """Per column ``(4/L) sum theta(1 - theta)``; columns are lambdas, rows node pairs."""
    t = _columns(theta_hat)
    return 4.0 * np.mean(t * (1.0 - t), axis=0)


def upper_bound_curve(theta_hat) -> np.ndarray:
    """Per column ``4 tbar (1 - tbar)`` with ``tbar`` the mean edge frequency."""
    t = _columns(theta_hat)
    tbar = t.mean(axis=0)
    return 4.0 * tbar * (1.0 - tbar)


def within_variability(theta_hat) -> np.ndarray:
    """Per column ``(4/L) sum (theta - tbar)^2``."""
    t = _columns(theta_hat)
    return 4.0 * np.mean((t - t.mean(axis=0)) ** 2, axis=0)
