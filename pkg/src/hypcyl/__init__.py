"""Poisson cylinder processes in hyperbolic space: geometry, line measure,
connectivity, branching analytics and particle-system simulation."""
from . import branching, cylproc, hypgeo, linemeasure, mc, particles
from .hypgeo import Geodesic, Point, dist, dist_geodesics, dist_point_geodesic
from .mc import Estimate, RngStream

__version__ = "0.1.0"

__all__ = [
    "branching", "cylproc", "hypgeo", "linemeasure", "mc", "particles",
    "Geodesic", "Point", "dist", "dist_geodesics", "dist_point_geodesic", "Estimate", "RngStream",
]
