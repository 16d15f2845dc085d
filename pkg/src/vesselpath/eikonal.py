"""Minimal action maps by causal front propagation.

Solves the anisotropic Eikonal problem on 2D image grids and lifted 3D
grids: single-pass label-setting propagation with a min-priority queue
(ties broken by node index) and semi-Lagrangian updates over the
simplices of the 8- or 26-neighborhood.  Tensors are frozen at the node
being updated, so a pure single-neighbor propagation reproduces exactly
the grid-graph shortest path with head-node edge weights; interpolated
simplex updates can only lower values, which makes that graph distance a
certified upper bound on the returned action map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fm_kernels as fmk
from .errors import ConstructionError, ParameterError, PropagationExhaustedError
from .fields import SymMat2Field, write_gfld
from .metrics import DenseLiftedTensors


@dataclass(frozen=True)
class SolverOptions:
    """Propagation controls.

    ``stop_at`` terminates the solve as soon as that node is accepted;
    ``max_nodes`` bounds the number of acceptances.  The neighborhood is
    implied by the tensor field (8 neighbors in 2D, 26 on lifted grids).
    """

    stop_at: tuple | None = None
    max_nodes: int | None = None
    drain_rel: float = 0.02
    drain_abs: float = 1.0

    def __post_init__(self):
        if self.max_nodes is not None and self.max_nodes <= 0:
            raise ParameterError("max_nodes must be positive")
        if self.drain_rel < 0 or self.drain_abs < 0:
            raise ParameterError("drain margins must be >= 0")


@dataclass(eq=False)
class ActionMap:
    """Minimal action values plus propagation diagnostics.

    ``u`` is +inf on nodes the front never reached.  ``parent`` holds,
    per node, the direction indices of the simplex that realized its
    final update (-1 padded).  ``monotone_violation`` is the largest
    decrease observed in the acceptance sequence; zero whenever the
    stencil is causal for the supplied tensors.
    """

    u: np.ndarray
    parent: np.ndarray
    accepted: int
    monotone_violation: float
    reached_stop: bool
    axis_spacing: float = 1.0
    axis_origin: float = 0.0
    seeds: list = field(default_factory=list)

    @property
    def shape(self) -> tuple:
        return self.u.shape

    def value_at_node(self, node) -> float:
        if len(node) == 2:
            return float(self.u[node[1], node[0]])
        return float(self.u[node[2], node[1], node[0]])

    def dump_gfld(self, path) -> None:
        """Write the action map in the raw float sidecar format; lifted
        maps are stored one channel per level."""
        u = self.u
        planes = u[None] if u.ndim == 2 else u
        write_gfld(path, np.where(np.isfinite(planes), planes, np.float32(np.inf)))


def _as_seed_list(seeds) -> list[tuple]:
    if isinstance(seeds, tuple) and seeds and np.isscalar(seeds[0]):
        return [seeds]
    return [tuple(s) for s in seeds]


def _validate_2d(tensors: SymMat2Field) -> None:
    if tensors.min_eigenvalue() <= 0:
        raise ConstructionError("2D tensor field is not strictly positive definite")


def _validate_3d(tensors: DenseLiftedTensors) -> None:
    if tensors.min_eigenvalue() <= 0:
        raise ConstructionError("lifted tensor field is not strictly positive definite")


def solve(tensors, seeds, opts: SolverOptions | None = None) -> ActionMap:
    """Propagate the front from the seed nodes over the whole grid (or
    until ``opts.stop_at`` is accepted / ``opts.max_nodes`` exhausted).

    ``tensors`` is a :class:`SymMat2Field` (2D solve, seeds are (x, y)
    integer nodes) or a :class:`DenseLiftedTensors` (3D solve, seeds are
    (x, y, level)).  An optional boolean ``mask`` attribute restricts the
    2D solve; see :func:`solve_masked`.
    """
    return _solve_impl(tensors, seeds, opts, mask=None)


def solve_masked(tensors: SymMat2Field, seeds, mask: np.ndarray, opts: SolverOptions | None = None) -> ActionMap:
    """2D solve restricted to a boolean region mask."""
    return _solve_impl(tensors, seeds, opts, mask=mask)


def _solve_impl(tensors, seeds, opts, mask) -> ActionMap:
    opts = opts or SolverOptions()
    seed_list = _as_seed_list(seeds)
    if not seed_list:
        raise ParameterError("at least one seed is required")

    if isinstance(tensors, SymMat2Field):
        _validate_2d(tensors)
        h, w = tensors.spec.shape
        for s in seed_list:
            if len(s) != 2 or not (0 <= s[0] < w and 0 <= s[1] < h):
                raise ParameterError(f"seed {s} outside 2D grid {w}x{h}")
        seed_idx = np.array([s[1] * w + s[0] for s in seed_list], dtype=np.int64)
        stop_idx = -1
        if opts.stop_at is not None:
            sx, sy = opts.stop_at[:2]
            if not (0 <= sx < w and 0 <= sy < h):
                raise ParameterError(f"stop point {opts.stop_at} outside grid")
            stop_idx = int(sy) * w + int(sx)
        max_nodes = opts.max_nodes or w * h
        if mask is not None:
            mask_arr = np.ascontiguousarray(mask, dtype=np.uint8).ravel()
            if mask_arr.size != w * h:
                raise ParameterError("mask shape does not match the grid")
            for s in seed_list:
                if not mask_arr[s[1] * w + s[0]]:
                    raise ParameterError(f"seed {s} is outside the mask")
            use_mask = True
        else:
            mask_arr = np.zeros(1, dtype=np.uint8)
            use_mask = False
        u, parent, accepted, violation, reached = fmk.fm_solve_2d(
            np.ascontiguousarray(tensors.m11).ravel(),
            np.ascontiguousarray(tensors.m12).ravel(),
            np.ascontiguousarray(tensors.m22).ravel(),
            w, h, seed_idx, stop_idx, mask_arr, use_mask, max_nodes,
            opts.drain_rel, opts.drain_abs,
        )
        amap = ActionMap(
            u=u.reshape(h, w),
            parent=parent.reshape(h, w, 2),
            accepted=accepted,
            monotone_violation=violation,
            reached_stop=reached,
            seeds=seed_list,
        )
    elif isinstance(tensors, DenseLiftedTensors):
        _validate_3d(tensors)
        depth, h, w = tensors.shape
        for s in seed_list:
            if len(s) != 3 or not (
                0 <= s[0] < w and 0 <= s[1] < h and 0 <= s[2] < depth
            ):
                raise ParameterError(f"seed {s} outside lifted grid {w}x{h}x{depth}")
        seed_idx = np.array(
            [(s[2] * h + s[1]) * w + s[0] for s in seed_list], dtype=np.int64
        )
        stop_idx = -1
        if opts.stop_at is not None:
            sx, sy, sl = opts.stop_at
            if not (0 <= sx < w and 0 <= sy < h and 0 <= sl < depth):
                raise ParameterError(f"stop point {opts.stop_at} outside lifted grid")
            stop_idx = (int(sl) * h + int(sy)) * w + int(sx)
        max_nodes = opts.max_nodes or depth * h * w
        interleaved = getattr(tensors, "_interleaved", None)
        if interleaved is None:
            interleaved = np.ascontiguousarray(
                np.stack(
                    [tensors.t11, tensors.t12, tensors.t22, tensors.t33], axis=-1
                ).reshape(-1, 4)
            )
            tensors._interleaved = interleaved
        u, parent, accepted, violation, reached = fmk.fm_solve_3d(
            interleaved,
            w, h, depth, tensors.axis_spacing,
            seed_idx, stop_idx, max_nodes,
            fmk.OFFS_3D, fmk.OPP_3D,
            fmk.EDGE_PTR_3D, fmk.EDGE_FLAT_3D,
            fmk.TRI_PTR_3D, fmk.TRI_FLAT_3D,
            opts.drain_rel, opts.drain_abs,
        )
        amap = ActionMap(
            u=u.reshape(depth, h, w),
            parent=parent.reshape(depth, h, w, 3),
            accepted=accepted,
            monotone_violation=violation,
            reached_stop=reached,
            axis_spacing=tensors.axis_spacing,
            axis_origin=tensors.axis_origin,
            seeds=seed_list,
        )
    else:
        raise ParameterError(f"unsupported tensor field type {type(tensors).__name__}")

    if opts.stop_at is not None and not amap.reached_stop:
        raise PropagationExhaustedError(
            f"front propagation exhausted before reaching {opts.stop_at}"
        )
    return amap


def min_action_between(tensors, source, end, opts: SolverOptions | None = None) -> tuple[ActionMap, float]:
    """Solve from ``source`` with early exit at ``end``; returns the map
    and the action value at ``end``."""
    base = opts or SolverOptions()
    if tuple(source) == tuple(end):
        run = solve(tensors, [source], SolverOptions(max_nodes=1))
        return run, 0.0
    run = solve(
        tensors,
        [source],
        SolverOptions(stop_at=tuple(end), max_nodes=base.max_nodes),
    )
    return run, run.value_at_node(tuple(end))


def hopf_lax_update(offsets, values, tensor) -> float:
    """One causal update from explicit accepted-neighbor data.

    ``offsets`` are the (k, 2) or (k, 3) physical displacement vectors
    from the node to its accepted neighbors, ``values`` their action
    values, and ``tensor`` the metric tensor at the node (block-diagonal
    in 3D).  Minimizes over every vertex, every neighbor pair, and in 3D
    every neighbor triple; degenerate simplices fall back to their best
    edge or vertex.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if offsets.ndim != 2 or offsets.shape[0] != values.shape[0] or offsets.shape[0] == 0:
        raise ParameterError("offsets and values must be matching nonempty arrays")
    tensor = np.asarray(tensor, dtype=np.float64)
    dim = offsets.shape[1]
    if dim == 2:
        t11, t12, t22, t33 = tensor[0, 0], tensor[0, 1], tensor[1, 1], 0.0
        offs3 = np.zeros((offsets.shape[0], 3))
        offs3[:, :2] = offsets
    elif dim == 3:
        if abs(tensor[0, 2]) > 0 or abs(tensor[1, 2]) > 0:
            raise ParameterError("3D tensors must be block-diagonal in the lifted axis")
        t11, t12, t22, t33 = tensor[0, 0], tensor[0, 1], tensor[1, 1], tensor[2, 2]
        offs3 = offsets
    else:
        raise ParameterError("offsets must be 2D or 3D")

    k = offs3.shape[0]
    best = np.inf
    for i in range(k):
        vx, vy, vz = offs3[i]
        best = min(best, values[i] + np.sqrt(fmk._q3(t11, t12, t22, t33, vx, vy, vz)))
    for i in range(k):
        for j in range(i + 1, k):
            v1, v2 = offs3[i], offs3[j]
            e = v2 - v1
            cand = fmk._edge_interior(
                values[i],
                values[j],
                fmk._q3(t11, t12, t22, t33, e[0], e[1], e[2]),
                fmk._dot3(t11, t12, t22, t33, v1[0], v1[1], v1[2], e[0], e[1], e[2]),
                fmk._q3(t11, t12, t22, t33, v1[0], v1[1], v1[2]),
            )
            best = min(best, cand)
    if dim == 3:
        for i in range(k):
            for j in range(i + 1, k):
                for m in range(j + 1, k):
                    v1, v2, v3 = offs3[i], offs3[j], offs3[m]
                    cand = fmk._tri_interior(
                        values[i], values[j], values[m],
                        v1[0], v1[1], v1[2],
                        v2[0], v2[1], v2[2],
                        v3[0], v3[1], v3[2],
                        t11, t12, t22, t33,
                    )
                    best = min(best, cand)
    return float(best)
