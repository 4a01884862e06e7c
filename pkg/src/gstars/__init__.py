"""Stability-based regularization selection for sparse Gaussian graphical models.

StARS, its bounded two-phase variant B-StARS and the graphlet-stable G-StARS,
together with a graphical lasso solver, graphlet orbit counting, Poisson-Binomial
instability analysis and maximum-entropy models of edge-probability spread.
"""

__version__ = "0.1.0"

from .glasso import RegularizationGrid, SolverConfig, fit, fit_path, lambda_grid, sample_covariance
from .graph_core import PrecisionModel, UndirectedGraph
from .graphlets import count_orbits, gcd, gcm, gcv, graphlet_variability
from .stars import SelectionReport

__all__ = [
    "PrecisionModel", "RegularizationGrid", "SelectionReport", "SolverConfig", "UndirectedGraph",
    "count_orbits", "fit", "fit_path", "gcd", "gcm", "gcv", "graphlet_variability", "lambda_grid",
    "sample_covariance",
]
