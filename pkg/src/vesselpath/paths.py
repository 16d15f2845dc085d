"""Polyline containers for spatial and feature-lifted curves."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def _check_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ParameterError(f"expected (N, {dim}) point array, got shape {pts.shape}")
    if pts.shape[0] < 1:
        raise ParameterError("polyline needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("polyline contains non-finite coordinates")
    return pts


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered (x, y) samples of a spatial curve, in pixel units."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _check_points(self.points, 2))

    def __len__(self) -> int:
        return self.points.shape[0]

    def length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def to_json(self) -> str:
        return json.dumps([[float(x), float(y)] for x, y in self.points])

    def to_geojson(self) -> str:
        return json.dumps(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(x), float(y)] for x, y in self.points],
                },
                "properties": {},
            }
        )


@dataclass(frozen=True, eq=False)
class LiftedPolyline:
    """Ordered (x, y, feature) samples of a curve on the lifted grid."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _check_points(self.points, 3))

    def __len__(self) -> int:
        return self.points.shape[0]

    def spatial(self) -> Polyline:
        return Polyline(self.points[:, :2].copy())

    def to_json(self) -> str:
        return json.dumps([[float(x), float(y), float(t)] for x, y, t in self.points])
