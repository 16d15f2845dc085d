"""Numba kernels for causal front propagation on 2D and lifted 3D grids.

The propagation is label-setting in Dijkstra order with semi-Lagrangian
updates: a trial value is the minimum, over the simplices of its accepted
neighborhood (single neighbors, neighbor pairs, and in 3D neighbor
triangles), of the linearly interpolated neighbor value plus the metric
length of the connecting segment, with the tensor frozen at the node
being updated.  Interior simplex minima are solved in closed form;
boundary minima are covered by the lower-dimensional simplices, each of
which is evaluated when its last vertex is accepted.

Flattened index conventions: 2D ``idx = y * width + x``; 3D
``idx = (level * height + y) * width + x`` with the third axis carrying a
physical spacing passed alongside the tensor planes.
"""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

FAR, TRIAL, ACCEPTED = 0, 1, 2

# 8-neighborhood in ring order so that opposite(d) = (d + 4) % 8 and the
# pair simplices are the ring-adjacent direction pairs.
RING_2D = np.array(
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)],
    dtype=np.int64,
)


def build_tables_3d():
    """26-neighborhood with its simplex incidence tables.

    Triangles are the corner paths (axis, axis+axis, axis+axis+axis) of
    every octant/permutation; edges are the deduplicated triangle sides.
    Returns per-direction flattened lookup tables.
    """
    offsets = [
        (dx, dy, dl)
        for dl in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
        if (dx, dy, dl) != (0, 0, 0)
    ]
    index = {off: k for k, off in enumerate(offsets)}
    opposite = np.array(
        [index[(-dx, -dy, -dl)] for dx, dy, dl in offsets], dtype=np.int64
    )

    triangles = set()
    axes = np.eye(3, dtype=np.int64)
    for signs in itertools.product((-1, 1), repeat=3):
        for perm in itertools.permutations(range(3)):
            v1 = signs[perm[0]] * axes[perm[0]]
            v2 = v1 + signs[perm[1]] * axes[perm[1]]
            v3 = v2 + signs[perm[2]] * axes[perm[2]]
            tri = tuple(sorted(index[tuple(v)] for v in (v1, v2, v3)))
            triangles.add(tri)
    edges = set()
    for tri in triangles:
        for a, b in itertools.combinations(tri, 2):
            edges.add((a, b))

    n = len(offsets)
    edge_lists = [[] for _ in range(n)]
    for a, b in sorted(edges):
        edge_lists[a].append(b)
        edge_lists[b].append(a)
    tri_lists = [[] for _ in range(n)]
    for tri in sorted(triangles):
        for v in tri:
            others = tuple(w for w in tri if w != v)
            tri_lists[v].append(others)

    edge_ptr = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        edge_ptr[k + 1] = edge_ptr[k] + len(edge_lists[k])
    edge_flat = np.array(
        [b for lst in edge_lists for b in lst], dtype=np.int64
    )
    tri_ptr = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        tri_ptr[k + 1] = tri_ptr[k] + len(tri_lists[k])
    tri_flat = np.array(
        [pair for lst in tri_lists for pair in lst], dtype=np.int64
    ).reshape(-1, 2)

    return (
        np.array(offsets, dtype=np.int64),
        opposite,
        edge_ptr,
        edge_flat,
        tri_ptr,
        tri_flat,
    )


OFFS_3D, OPP_3D, EDGE_PTR_3D, EDGE_FLAT_3D, TRI_PTR_3D, TRI_FLAT_3D = build_tables_3d()


# ---------------------------------------------------------------------------
# Binary heap with (value, node-index) lexicographic ordering
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _heap_less(hv, hi, a, b):
    if hv[a] != hv[b]:
        return hv[a] < hv[b]
    return hi[a] < hi[b]


@njit(cache=True, nogil=True)
def _heap_push(hv, hi, size, val, idx):
    if size >= hv.shape[0]:
        nhv = np.empty(hv.shape[0] * 2, np.float64)
        nhi = np.empty(hv.shape[0] * 2, np.int64)
        nhv[:size] = hv[:size]
        nhi[:size] = hi[:size]
        hv, hi = nhv, nhi
    hv[size] = val
    hi[size] = idx
    i = size
    size += 1
    while i > 0:
        p = (i - 1) >> 1
        if _heap_less(hv, hi, i, p):
            hv[p], hv[i] = hv[i], hv[p]
            hi[p], hi[i] = hi[i], hi[p]
            i = p
        else:
            break
    return hv, hi, size


@njit(cache=True, nogil=True)
def _heap_pop(hv, hi, size):
    val = hv[0]
    idx = hi[0]
    size -= 1
    hv[0] = hv[size]
    hi[0] = hi[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _heap_less(hv, hi, right, left):
            best = right
        if _heap_less(hv, hi, best, i):
            hv[best], hv[i] = hv[i], hv[best]
            hi[best], hi[i] = hi[i], hi[best]
            i = best
        else:
            break
    return val, idx, size


# ---------------------------------------------------------------------------
# Closed-form simplex minimizers (tensor frozen at the updated node)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _edge_interior(u1, u2, e_t_e, v1_t_e, v1_t_v1):
    """Interior minimum of (1-t) u1 + t u2 + |v1 + t (v2 - v1)|_T over
    t in (0, 1); +inf when the minimum sits on the boundary."""
    g = u2 - u1
    denom = e_t_e - g * g
    if denom <= 1e-300:
        return np.inf
    disc = (e_t_e * v1_t_v1 - v1_t_e * v1_t_e) / denom
    if disc < 0.0:
        return np.inf
    t = (-v1_t_e - g * np.sqrt(disc)) / e_t_e
    if t <= 0.0 or t >= 1.0:
        return np.inf
    s2 = v1_t_v1 + 2.0 * v1_t_e * t + e_t_e * t * t
    if s2 <= 0.0:
        return np.inf
    return u1 + g * t + np.sqrt(s2)


@njit(cache=True, nogil=True, inline="always")
def _q2(t11, t12, t22, vx, vy):
    return t11 * vx * vx + 2.0 * t12 * vx * vy + t22 * vy * vy


@njit(cache=True, nogil=True, inline="always")
def _q3(t11, t12, t22, t33, vx, vy, vz):
    return t11 * vx * vx + 2.0 * t12 * vx * vy + t22 * vy * vy + t33 * vz * vz


@njit(cache=True, nogil=True, inline="always")
def _dot3(t11, t12, t22, t33, ax, ay, az, bx, by, bz):
    return (
        t11 * ax * bx
        + t12 * (ax * by + ay * bx)
        + t22 * ay * by
        + t33 * az * bz
    )


@njit(cache=True, nogil=True, inline="always")
def _tri_interior(
    u1, u2, u3,
    v1x, v1y, v1z, v2x, v2y, v2z, v3x, v3y, v3z,
    t11, t12, t22, t33,
):
    """Interior minimum over the triangle with vertices v1, v2, v3 and
    values u1, u2, u3; +inf when the stationary point leaves the
    barycentric interior (edge and vertex minima are handled by the
    lower-dimensional simplices)."""
    d1x, d1y, d1z = v1x - v3x, v1y - v3y, v1z - v3z
    d2x, d2y, d2z = v2x - v3x, v2y - v3y, v2z - v3z
    g1 = u1 - u3
    g2 = u2 - u3
    G11 = _dot3(t11, t12, t22, t33, d1x, d1y, d1z, d1x, d1y, d1z)
    G12 = _dot3(t11, t12, t22, t33, d1x, d1y, d1z, d2x, d2y, d2z)
    G22 = _dot3(t11, t12, t22, t33, d2x, d2y, d2z, d2x, d2y, d2z)
    det = G11 * G22 - G12 * G12
    if det <= 1e-300:
        return np.inf
    h1 = _dot3(t11, t12, t22, t33, d1x, d1y, d1z, v3x, v3y, v3z)
    h2 = _dot3(t11, t12, t22, t33, d2x, d2y, d2z, v3x, v3y, v3z)
    c = _q3(t11, t12, t22, t33, v3x, v3y, v3z)
    hGh = (G22 * h1 * h1 - 2.0 * G12 * h1 * h2 + G11 * h2 * h2) / det
    gGg = (G22 * g1 * g1 - 2.0 * G12 * g1 * g2 + G11 * g2 * g2) / det
    denom = 1.0 - gGg
    if denom <= 0.0:
        return np.inf
    num = c - hGh
    if num < 0.0:
        return np.inf
    s = np.sqrt(num / denom)
    r1 = h1 + s * g1
    r2 = h2 + s * g2
    lam1 = -(G22 * r1 - G12 * r2) / det
    lam2 = -(G11 * r2 - G12 * r1) / det
    if lam1 <= 0.0 or lam2 <= 0.0 or lam1 + lam2 >= 1.0:
        return np.inf
    return u3 + g1 * lam1 + g2 * lam2 + s


# ---------------------------------------------------------------------------
# 2D propagation
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def fm_solve_2d(
    m11, m12, m22, width, height, seeds, stop_idx, mask, use_mask, max_nodes,
    drain_rel, drain_abs,
):
    n = width * height
    u = np.full(n, np.inf)
    state = np.zeros(n, np.uint8)
    parent = np.full((n, 2), -1, np.int16)
    offx = np.empty(8, np.int64)
    offy = np.empty(8, np.int64)
    for k in range(8):
        offx[k] = RING_2D[k, 0]
        offy[k] = RING_2D[k, 1]

    hv = np.empty(max(n, 64), np.float64)
    hi = np.empty(max(n, 64), np.int64)
    size = 0
    for k in range(seeds.shape[0]):
        s = seeds[k]
        u[s] = 0.0
        state[s] = TRIAL
        hv, hi, size = _heap_push(hv, hi, size, 0.0, s)

    accepted = 0
    last = -np.inf
    violation = 0.0
    reached = False
    drain_limit = np.inf

    while size > 0:
        val, idx, size = _heap_pop(hv, hi, size)
        if state[idx] == ACCEPTED:
            continue
        if val > u[idx] + 1e-12:
            continue
        if val > drain_limit:
            break
        state[idx] = ACCEPTED
        accepted += 1
        if val < last:
            violation = max(violation, last - val)
        else:
            last = val
        if idx == stop_idx:
            # keep accepting slightly past the target so interpolation
            # cells around it are fully populated for backtracking
            reached = True
            drain_limit = val * (1.0 + drain_rel) + drain_abs
        if accepted >= max_nodes:
            break

        ax = idx % width
        ay = idx // width
        for dd in range(8):
            nx = ax + offx[dd]
            ny = ay + offy[dd]
            if nx < 0 or nx >= width or ny < 0 or ny >= height:
                continue
            nidx = ny * width + nx
            if state[nidx] == ACCEPTED:
                continue
            if use_mask and mask[nidx] == 0:
                continue
            if u[idx] >= u[nidx]:
                continue
            rd = (dd + 4) % 8
            ta = m11[nidx]
            tb = m12[nidx]
            tc = m22[nidx]
            v1x = float(offx[rd])
            v1y = float(offy[rd])
            ua = u[idx]
            best = ua + np.sqrt(_q2(ta, tb, tc, v1x, v1y))
            p0 = rd
            p1 = -1
            for step in range(2):
                e = (rd + 1) % 8 if step == 0 else (rd + 7) % 8
                zx = nx + offx[e]
                zy = ny + offy[e]
                if zx < 0 or zx >= width or zy < 0 or zy >= height:
                    continue
                zidx = zy * width + zx
                if state[zidx] != ACCEPTED:
                    continue
                if use_mask and mask[zidx] == 0:
                    continue
                v2x = float(offx[e])
                v2y = float(offy[e])
                ex = v2x - v1x
                ey = v2y - v1y
                cand = _edge_interior(
                    ua,
                    u[zidx],
                    _q2(ta, tb, tc, ex, ey),
                    ta * v1x * ex + tb * (v1x * ey + v1y * ex) + tc * v1y * ey,
                    _q2(ta, tb, tc, v1x, v1y),
                )
                if cand < best:
                    best = cand
                    p1 = e
            if best < u[nidx] - 1e-15:
                u[nidx] = best
                state[nidx] = TRIAL
                parent[nidx, 0] = p0
                parent[nidx, 1] = p1
                hv, hi, size = _heap_push(hv, hi, size, best, nidx)

    return u, parent, accepted, violation, reached


# ---------------------------------------------------------------------------
# 3D propagation on lifted grids (block-diagonal tensors)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def fm_solve_3d(
    tens,
    width, height, depth, dz,
    seeds, stop_idx, max_nodes,
    offs, opp, edge_ptr, edge_flat, tri_ptr, tri_flat,
    drain_rel, drain_abs,
):
    # tens is (n, 4) node-interleaved (t11, t12, t22, t33): one cache
    # line serves a whole tensor, which dominates solve throughput
    n = width * height * depth
    u = np.full(n, np.inf)
    state = np.zeros(n, np.uint8)
    parent = np.full((n, 3), -1, np.int16)
    ndirs = offs.shape[0]
    vx = np.empty(ndirs)
    vy = np.empty(ndirs)
    vz = np.empty(ndirs)
    for k in range(ndirs):
        vx[k] = float(offs[k, 0])
        vy[k] = float(offs[k, 1])
        vz[k] = float(offs[k, 2]) * dz

    hv = np.empty(max(n, 64), np.float64)
    hi = np.empty(max(n, 64), np.int64)
    size = 0
    for k in range(seeds.shape[0]):
        s = seeds[k]
        u[s] = 0.0
        state[s] = TRIAL
        hv, hi, size = _heap_push(hv, hi, size, 0.0, s)

    accepted = 0
    last = -np.inf
    violation = 0.0
    reached = False
    drain_limit = np.inf
    plane = width * height

    while size > 0:
        val, idx, size = _heap_pop(hv, hi, size)
        if state[idx] == ACCEPTED:
            continue
        if val > u[idx] + 1e-12:
            continue
        if val > drain_limit:
            break
        state[idx] = ACCEPTED
        accepted += 1
        if val < last:
            violation = max(violation, last - val)
        else:
            last = val
        if idx == stop_idx:
            reached = True
            drain_limit = val * (1.0 + drain_rel) + drain_abs
        if accepted >= max_nodes:
            break

        al = idx // plane
        rem = idx - al * plane
        ay = rem // width
        ax = rem - ay * width

        for dd in range(ndirs):
            nx = ax + offs[dd, 0]
            ny = ay + offs[dd, 1]
            nl = al + offs[dd, 2]
            if (
                nx < 0 or nx >= width
                or ny < 0 or ny >= height
                or nl < 0 or nl >= depth
            ):
                continue
            nidx = (nl * height + ny) * width + nx
            if state[nidx] == ACCEPTED:
                continue
            if u[idx] >= u[nidx]:
                continue
            rd = opp[dd]
            ta = float(tens[nidx, 0])
            tb = float(tens[nidx, 1])
            tc = float(tens[nidx, 2])
            td = float(tens[nidx, 3])
            ua = u[idx]
            best = ua + np.sqrt(_q3(ta, tb, tc, td, vx[rd], vy[rd], vz[rd]))
            p0 = rd
            p1 = -1
            p2 = -1

            for k in range(edge_ptr[rd], edge_ptr[rd + 1]):
                e = edge_flat[k]
                zx = nx + offs[e, 0]
                zy = ny + offs[e, 1]
                zl = nl + offs[e, 2]
                if (
                    zx < 0 or zx >= width
                    or zy < 0 or zy >= height
                    or zl < 0 or zl >= depth
                ):
                    continue
                zidx = (zl * height + zy) * width + zx
                if state[zidx] != ACCEPTED:
                    continue
                ex = vx[e] - vx[rd]
                ey = vy[e] - vy[rd]
                ez = vz[e] - vz[rd]
                cand = _edge_interior(
                    ua,
                    u[zidx],
                    _q3(ta, tb, tc, td, ex, ey, ez),
                    _dot3(ta, tb, tc, td, vx[rd], vy[rd], vz[rd], ex, ey, ez),
                    _q3(ta, tb, tc, td, vx[rd], vy[rd], vz[rd]),
                )
                if cand < best:
                    best = cand
                    p1 = e
                    p2 = -1

            for k in range(tri_ptr[rd], tri_ptr[rd + 1]):
                e1 = tri_flat[k, 0]
                e2 = tri_flat[k, 1]
                z1x = nx + offs[e1, 0]
                z1y = ny + offs[e1, 1]
                z1l = nl + offs[e1, 2]
                if (
                    z1x < 0 or z1x >= width
                    or z1y < 0 or z1y >= height
                    or z1l < 0 or z1l >= depth
                ):
                    continue
                z1idx = (z1l * height + z1y) * width + z1x
                if state[z1idx] != ACCEPTED:
                    continue
                z2x = nx + offs[e2, 0]
                z2y = ny + offs[e2, 1]
                z2l = nl + offs[e2, 2]
                if (
                    z2x < 0 or z2x >= width
                    or z2y < 0 or z2y >= height
                    or z2l < 0 or z2l >= depth
                ):
                    continue
                z2idx = (z2l * height + z2y) * width + z2x
                if state[z2idx] != ACCEPTED:
                    continue
                cand = _tri_interior(
                    ua, u[z1idx], u[z2idx],
                    vx[rd], vy[rd], vz[rd],
                    vx[e1], vy[e1], vz[e1],
                    vx[e2], vy[e2], vz[e2],
                    ta, tb, tc, td,
                )
                if cand < best:
                    best = cand
                    p1 = e1
                    p2 = e2
            if best < u[nidx] - 1e-15:
                u[nidx] = best
                state[nidx] = TRIAL
                parent[nidx, 0] = p0
                parent[nidx, 1] = p1
                parent[nidx, 2] = p2
                hv, hi, size = _heap_push(hv, hi, size, best, nidx)

    return u, parent, accepted, violation, reached


# ---------------------------------------------------------------------------
# Descent backtracking (lifted grids)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _grad_at(u, ix, iy, il, axis, width, height, depth, big):
    """Unit-spacing upwind derivative at a node, ignoring unreached
    (+inf) neighbors."""
    c = u[il, iy, ix]
    if not np.isfinite(c):
        return 0.0
    if axis == 0:
        fi, bi = ix + 1, ix - 1
        f_ok = fi < width and np.isfinite(u[il, iy, fi])
        b_ok = bi >= 0 and np.isfinite(u[il, iy, bi])
        fv = u[il, iy, fi] if f_ok else big
        bv = u[il, iy, bi] if b_ok else big
    elif axis == 1:
        fi, bi = iy + 1, iy - 1
        f_ok = fi < height and np.isfinite(u[il, fi, ix])
        b_ok = bi >= 0 and np.isfinite(u[il, bi, ix])
        fv = u[il, fi, ix] if f_ok else big
        bv = u[il, bi, ix] if b_ok else big
    else:
        fi, bi = il + 1, il - 1
        f_ok = fi < depth and np.isfinite(u[fi, iy, ix])
        b_ok = bi >= 0 and np.isfinite(u[bi, iy, ix])
        fv = u[fi, iy, ix] if f_ok else big
        bv = u[bi, iy, ix] if b_ok else big
    if f_ok and b_ok:
        return 0.5 * (fv - bv)
    if f_ok:
        return fv - c
    if b_ok:
        return c - bv
    return 0.0


@njit(cache=True, nogil=True, inline="always")
def _tri_weights(x, y, l, width, height, depth):
    if x < 0.0:
        x = 0.0
    if x > width - 1.0:
        x = width - 1.0
    if y < 0.0:
        y = 0.0
    if y > height - 1.0:
        y = height - 1.0
    if l < 0.0:
        l = 0.0
    if l > depth - 1.0:
        l = depth - 1.0
    ix = min(int(x), width - 2) if width > 1 else 0
    iy = min(int(y), height - 2) if height > 1 else 0
    il = min(int(l), depth - 2) if depth > 1 else 0
    return ix, iy, il, x - ix, y - iy, l - il


@njit(cache=True, nogil=True, inline="always")
def _corner_weights(fx, fy, fl, cx, cy, cl):
    wx = fx if cx else 1.0 - fx
    wy = fy if cy else 1.0 - fy
    wl = fl if cl else 1.0 - fl
    return wx * wy * wl


@njit(cache=True, nogil=True, inline="always")
def _tri_interp_u(u, ix, iy, il, fx, fy, fl, big):
    out = 0.0
    for cl in range(2):
        for cy in range(2):
            for cx in range(2):
                v = u[il + cl, iy + cy, ix + cx]
                if not np.isfinite(v):
                    v = big
                out += v * _corner_weights(fx, fy, fl, cx, cy, cl)
    return out


@njit(cache=True, nogil=True, inline="always")
def _cell_finite(u, ix, iy, il):
    for cl in range(2):
        for cy in range(2):
            for cx in range(2):
                if not np.isfinite(u[il + cl, iy + cy, ix + cx]):
                    return False
    return True


@njit(cache=True, nogil=True, inline="always")
def _tri_interp_grad(u, axis, ix, iy, il, fx, fy, fl, width, height, depth, big):
    out = 0.0
    for cl in range(2):
        for cy in range(2):
            for cx in range(2):
                g = _grad_at(u, ix + cx, iy + cy, il + cl, axis, width, height, depth, big)
                out += g * _corner_weights(fx, fy, fl, cx, cy, cl)
    return out


@njit(cache=True, nogil=True, inline="always")
def _tri_interp_tens(tens, col, width, height, ix, iy, il, fx, fy, fl):
    out = 0.0
    for cl in range(2):
        for cy in range(2):
            for cx in range(2):
                v = tens[((il + cl) * height + iy + cy) * width + ix + cx, col]
                out += v * _corner_weights(fx, fy, fl, cx, cy, cl)
    return out


TRACE_OK, TRACE_MAX_STEPS, TRACE_STATIONARY, TRACE_STALLED = 0, 1, 2, 3


@njit(cache=True, nogil=True, inline="always")
def _descent_direction(u, tens, x, y, l, width, height, depth, dz, big):
    ix, iy, il, fx, fy, fl = _tri_weights(x, y, l, width, height, depth)
    g1 = _tri_interp_grad(u, 0, ix, iy, il, fx, fy, fl, width, height, depth, big)
    g2 = _tri_interp_grad(u, 1, ix, iy, il, fx, fy, fl, width, height, depth, big)
    g3 = _tri_interp_grad(u, 2, ix, iy, il, fx, fy, fl, width, height, depth, big)
    a = _tri_interp_tens(tens, 0, width, height, ix, iy, il, fx, fy, fl)
    b = _tri_interp_tens(tens, 1, width, height, ix, iy, il, fx, fy, fl)
    c = _tri_interp_tens(tens, 2, width, height, ix, iy, il, fx, fy, fl)
    t3 = _tri_interp_tens(tens, 3, width, height, ix, iy, il, fx, fy, fl) * dz * dz
    det = a * c - b * b
    dx = -(c * g1 - b * g2) / det
    dy = -(-b * g1 + a * g2) / det
    dl = -g3 / t3
    norm = np.sqrt(dx * dx + dy * dy + dl * dl)
    gmag = np.sqrt(g1 * g1 + g2 * g2 + g3 * g3)
    return dx, dy, dl, norm, gmag


@njit(cache=True, nogil=True)
def trace_descent_3d(
    u, tens,
    width, height, depth, dz,
    ex, ey, el, sx, sy, sl,
    step, max_steps, capture, descent_tol, big,
):
    """Heun integration of the normalized descent field from (ex, ey, el)
    toward (sx, sy, sl), all in (pixel, pixel, level-index) coordinates.
    Gradients fall back to one-sided differences at unreached (+inf)
    neighbors.  Returns the traversed points (end first, exact seed
    appended) and a status code."""
    pts = np.empty((max_steps + 2, 3))
    x, y, l = ex, ey, el
    pts[0, 0] = x
    pts[0, 1] = y
    pts[0, 2] = l
    count = 1
    ix, iy, il, fx, fy, fl = _tri_weights(x, y, l, width, height, depth)
    u_prev = _tri_interp_u(u, ix, iy, il, fx, fy, fl, big)
    stall = 0
    status = TRACE_MAX_STEPS
    for _ in range(max_steps):
        dxs = x - sx
        dys = y - sy
        dls = l - sl
        if np.sqrt(dxs * dxs + dys * dys + dls * dls) <= capture:
            pts[count, 0] = sx
            pts[count, 1] = sy
            pts[count, 2] = sl
            count += 1
            status = TRACE_OK
            break
        dx, dy, dl, norm, gmag = _descent_direction(
            u, tens, x, y, l, width, height, depth, dz, big
        )
        if gmag < 1e-12 or norm < 1e-12:
            status = TRACE_STATIONARY
            break
        x1 = min(max(x + step * dx / norm, 0.0), width - 1.0)
        y1 = min(max(y + step * dy / norm, 0.0), height - 1.0)
        l1 = min(max(l + step * dl / norm, 0.0), depth - 1.0)
        dx2, dy2, dl2, norm2, gmag2 = _descent_direction(
            u, tens, x1, y1, l1, width, height, depth, dz, big
        )
        if gmag2 < 1e-12 or norm2 < 1e-12:
            nx, ny, nl = x1, y1, l1
        else:
            nx = min(max(x + 0.5 * step * (dx / norm + dx2 / norm2), 0.0), width - 1.0)
            ny = min(max(y + 0.5 * step * (dy / norm + dy2 / norm2), 0.0), height - 1.0)
            nl = min(max(l + 0.5 * step * (dl / norm + dl2 / norm2), 0.0), depth - 1.0)
        ix, iy, il, fx, fy, fl = _tri_weights(nx, ny, nl, width, height, depth)
        u_here = _tri_interp_u(u, ix, iy, il, fx, fy, fl, big)
        if u_here > u_prev + descent_tol and _cell_finite(u, ix, iy, il):
            stall += 1
            if stall > 25:
                status = TRACE_STALLED
                break
        elif u_here <= u_prev + descent_tol:
            stall = 0
        if u_here < u_prev:
            u_prev = u_here
        x, y, l = nx, ny, nl
        pts[count, 0] = x
        pts[count, 1] = y
        pts[count, 2] = l
        count += 1
    return pts[:count], status, x, y, l
