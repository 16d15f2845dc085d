"""Globally optimal curve extraction via coherence-penalized Riemannian
minimal paths: vesselness-derived tensor metrics, anisotropic fast
marching on feature-lifted grids, geodesic backtracking, and a benchmark
harness for centerline evaluation."""

__version__ = "0.1.0"
