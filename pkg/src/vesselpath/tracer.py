"""Geodesic extraction from solved action maps.

Backtracks the descent ODE  d/dt rho = -T^{-1} grad U / |T^{-1} grad U|
from the end point to the seed with a two-stage (Heun) integrator over
interpolated upwind gradients, projects lifted curves to the image
plane, and refines paths by re-solving a 2D anisotropic problem inside a
distance-transform tube around the input path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _fm_kernels as fmk
from .eikonal import ActionMap, SolverOptions, solve_masked
from .errors import (
    ParameterError,
    PropagationExhaustedError,
    StationaryPointError,
    TraceDivergedError,
    TraceError,
)
from .fields import SymMat2Field, bilinear_sample_array
from .metrics import (
    DenseLiftedTensors,
    LiftedTensorField,
    ResolvedMetricParams,
    floor_potential,
    path_energy,
    potential,
    spatial_tensor,
)
from .oof import OofResult
from .paths import LiftedPolyline, Polyline


@dataclass(frozen=True)
class TracerOptions:
    """Descent integration controls (pixel / grid-index units)."""

    step: float = 0.25
    max_steps: int = 50000
    capture_radius: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("step must be > 0")
        if self.capture_radius < self.step / 2:
            raise ParameterError("capture_radius must be at least step/2")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be >= 1")


def _interp3(planes: np.ndarray, x: float, y: float, l: float) -> float:
    L = planes.shape[0]
    l = min(max(l, 0.0), L - 1.0)
    l0 = min(int(l), L - 2) if L > 1 else 0
    fl = l - l0
    lo = bilinear_sample_array(planes[l0], np.array([x]), np.array([y]))[0]
    hi = bilinear_sample_array(planes[min(l0 + 1, L - 1)], np.array([x]), np.array([y]))[0]
    return float(lo * (1 - fl) + hi * fl)


def backtrack(action: ActionMap, tensors, end, seed, opts: TracerOptions | None = None):
    """Integrate the descent ODE from ``end`` back to ``seed``.

    Returns a :class:`Polyline` for 2D action maps and a
    :class:`LiftedPolyline` (third coordinate in feature units) for
    lifted maps.  The output runs seed -> end with the exact seed point
    appended at the start.
    """
    opts = opts or TracerOptions()
    if action.u.ndim == 2:
        return _backtrack_2d(action, tensors, end, seed, opts)
    return _backtrack_3d(action, tensors, end, seed, opts)


def _finite_big(u: np.ndarray) -> float:
    fin = np.isfinite(u)
    if not fin.any():
        raise ParameterError("action map has no finite values")
    return 2.0 * float(u[fin].max()) + 10.0


def _backtrack_2d(action, tensors, end, seed, opts) -> Polyline:
    if isinstance(tensors, LiftedTensorField) or isinstance(tensors, DenseLiftedTensors):
        raise ParameterError("2D action map needs a 2D tensor field")
    u = action.u
    h, w = u.shape
    ex, ey = float(end[0]), float(end[1])
    sx, sy = float(seed[0]), float(seed[1])
    if not np.isfinite(u[int(round(ey)), int(round(ex))]):
        raise ParameterError("end point was not reached by the solve")
    # delegate to the lifted tracer on a duplicated plane: the level
    # gradient is zero, so the trajectory never leaves it
    u3 = np.ascontiguousarray(np.stack([u, u]))
    ones = np.ones(h * w)
    plane = np.stack(
        [tensors.m11.ravel(), tensors.m12.ravel(), tensors.m22.ravel(), ones], axis=-1
    )
    interleaved = np.ascontiguousarray(np.concatenate([plane, plane], axis=0))
    u_end = float(u[int(round(ey)), int(round(ex))])
    pts, status, lx, ly, _ = fmk.trace_descent_3d(
        u3, interleaved,
        w, h, 2, 1.0,
        ex, ey, 0.0, sx, sy, 0.0,
        opts.step, opts.max_steps, opts.capture_radius,
        1e-6 * max(u_end, 1e-12), _finite_big(u),
    )
    if status == fmk.TRACE_STATIONARY:
        raise StationaryPointError(
            f"action-map gradient vanished at ({lx:.2f}, {ly:.2f}) away from the seed"
        )
    if status == fmk.TRACE_STALLED:
        raise TraceDivergedError(
            f"descent stalled near ({lx:.2f}, {ly:.2f}): interpolated local minimum off-seed"
        )
    if status == fmk.TRACE_MAX_STEPS:
        raise TraceDivergedError(
            f"exceeded {opts.max_steps} steps without reaching the seed "
            f"(stopped at ({lx:.2f}, {ly:.2f}))"
        )
    return Polyline(pts[::-1, :2].copy())


def _backtrack_3d(action, tensors, end, seed, opts) -> LiftedPolyline:
    if isinstance(tensors, LiftedTensorField):
        dense = tensors.materialize()
    elif isinstance(tensors, DenseLiftedTensors):
        dense = tensors
    else:
        raise ParameterError("lifted action map needs lifted tensors")
    u = action.u
    depth, h, w = u.shape
    dz = action.axis_spacing
    origin = action.axis_origin

    def to_level(theta):
        return (float(theta) - origin) / dz

    ex, ey, el = float(end[0]), float(end[1]), to_level(end[2])
    sx, sy, sl = float(seed[0]), float(seed[1]), to_level(seed[2])
    if not np.isfinite(u[int(round(el)), int(round(ey)), int(round(ex))]):
        raise ParameterError("end point was not reached by the solve")
    interleaved = getattr(dense, "_interleaved", None)
    if interleaved is None:
        interleaved = np.ascontiguousarray(
            np.stack([dense.t11, dense.t12, dense.t22, dense.t33], axis=-1).reshape(-1, 4)
        )
        dense._interleaved = interleaved

    # Positions run in (pixel, pixel, level-index) coordinates; the
    # lifted-axis tensor entry absorbs the level spacing so descent per
    # index step traces the same curve as in physical units.
    u_end = float(u[int(round(el)), int(round(ey)), int(round(ex))])
    pts, status, lx, ly, ll = fmk.trace_descent_3d(
        np.ascontiguousarray(u), interleaved,
        w, h, depth, dz,
        ex, ey, el, sx, sy, sl,
        opts.step, opts.max_steps, opts.capture_radius,
        1e-6 * max(u_end, 1e-12), _finite_big(u),
    )
    if status == fmk.TRACE_STATIONARY:
        raise StationaryPointError(
            f"action-map gradient vanished at ({lx:.2f}, {ly:.2f}, level {ll:.2f})"
        )
    if status == fmk.TRACE_STALLED:
        raise TraceDivergedError(
            f"descent stalled near ({lx:.2f}, {ly:.2f}, level {ll:.2f})"
        )
    if status == fmk.TRACE_MAX_STEPS:
        raise TraceDivergedError(
            f"exceeded {opts.max_steps} steps without reaching the seed "
            f"(stopped at ({lx:.2f}, {ly:.2f}, level {ll:.2f}))"
        )
    arr = pts[::-1].copy()
    arr[:, 2] = origin + arr[:, 2] * dz
    return LiftedPolyline(arr)


def project(gamma: LiftedPolyline) -> Polyline:
    """Drop the feature coordinate of a lifted curve."""
    return gamma.spatial()


def rasterize_path(path: Polyline, shape: tuple[int, int]) -> np.ndarray:
    """Boolean image of the pixels the polyline passes through."""
    h, w = shape
    raster = np.zeros((h, w), dtype=bool)
    pts = path.points
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / 0.5)) + 1)
        for t in np.linspace(0.0, 1.0, n):
            p = (1 - t) * a + t * b
            ix = int(round(min(max(p[0], 0), w - 1)))
            iy = int(round(min(max(p[1], 0), h - 1)))
            raster[iy, ix] = True
    if len(pts) == 1:
        raster[int(round(pts[0, 1])), int(round(pts[0, 0]))] = True
    return raster


@dataclass(eq=False)
class RefinementResult:
    path: Polyline
    refined: bool
    message: str | None = None


def refine_path(
    path: Polyline,
    oof: OofResult,
    params: ResolvedMetricParams,
    tube_radius: float | None = None,
    tracer_opts: TracerOptions | None = None,
) -> RefinementResult:
    """Region-constrained second pass.

    Re-solves the plain 2D anisotropic problem restricted to the pixels
    within ``tube_radius`` of the input path (default: 2 px plus the
    largest filter scale along the path) and re-traces the geodesic
    between the same endpoints.  When the tube does not connect the
    endpoints the input path is returned with ``refined=False``; the
    returned path never has higher 2D energy than the input.
    """
    if len(path) < 2:
        return RefinementResult(path, False, "path too short to refine")
    shape = oof.vesselness.spec.shape
    if tube_radius is None:
        scales = bilinear_sample_array(
            oof.scale_map.values, path.points[:, 0], path.points[:, 1]
        )
        tube_radius = 2.0 + float(scales.max())
    if tube_radius <= 0:
        raise ParameterError("tube_radius must be positive")

    raster = rasterize_path(path, shape)
    dist = ndimage.distance_transform_edt(~raster)
    mask = dist <= tube_radius

    omega = floor_potential(potential(oof.vesselness, params.alpha), params.omega_min)
    tensors = spatial_tensor(omega, oof.q1, oof.q2)

    src = (int(round(path.points[0, 0])), int(round(path.points[0, 1])))
    end = (int(round(path.points[-1, 0])), int(round(path.points[-1, 1])))
    try:
        amap = solve_masked(tensors, [src], mask, SolverOptions(stop_at=end))
    except PropagationExhaustedError:
        return RefinementResult(
            path, False, f"endpoints disconnected within tube radius {tube_radius:.1f}"
        )
    try:
        traced = backtrack(amap, tensors, end, src, tracer_opts)
    except TraceError as exc:
        return RefinementResult(
            path, False, f"refinement trace failed in tube radius {tube_radius:.1f}: {exc}"
        )
    if path_energy(traced, tensors) <= path_energy(path, tensors):
        return RefinementResult(traced, True)
    return RefinementResult(path, True, "input already optimal within the tube")
