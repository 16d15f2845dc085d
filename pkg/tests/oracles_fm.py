"""Independent shortest-path oracles for solver tests.

Grid-graph Dijkstra via scipy.sparse.csgraph with edges weighted by the
metric length of the step measured in the tensor at the edge head (the
same convention the solver's single-neighbor updates use, which makes
the graph distance a strict upper bound on the solver's values).
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

OFFS_2D_8 = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def dijkstra_2d(m11, m12, m22, source_xy):
    h, w = m11.shape
    n = w * h
    a11, a12, a22 = m11.ravel(), m12.ravel(), m22.ravel()
    rows, cols, ws = [], [], []
    ys, xs = np.mgrid[0:h, 0:w]
    for dx, dy in OFFS_2D_8:
        ok = (xs + dx >= 0) & (xs + dx < w) & (ys + dy >= 0) & (ys + dy < h)
        a = ys[ok] * w + xs[ok]
        b = (ys[ok] + dy) * w + (xs[ok] + dx)
        wgt = np.sqrt(a11[b] * dx * dx + 2 * a12[b] * dx * dy + a22[b] * dy * dy)
        rows.append(a)
        cols.append(b)
        ws.append(wgt)
    g = csr_matrix(
        (np.concatenate(ws), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    src = source_xy[1] * w + source_xy[0]
    return dijkstra(g, indices=src).reshape(h, w)


def dijkstra_3d(t11, t12, t22, t33, dz, source_xyl, offsets):
    depth, h, w = t11.shape
    n = w * h * depth
    a11, a12, a22, a33 = (x.ravel() for x in (t11, t12, t22, t33))
    rows, cols, ws = [], [], []
    X, Y, Z = np.meshgrid(np.arange(w), np.arange(h), np.arange(depth), indexing="ij")
    for dx, dy, dl in offsets:
        vx, vy, vz = float(dx), float(dy), float(dl) * dz
        ok = (
            (X + dx >= 0) & (X + dx < w)
            & (Y + dy >= 0) & (Y + dy < h)
            & (Z + dl >= 0) & (Z + dl < depth)
        )
        a = (Z[ok] * h + Y[ok]) * w + X[ok]
        b = ((Z[ok] + dl) * h + (Y[ok] + dy)) * w + (X[ok] + dx)
        wgt = np.sqrt(
            a11[b] * vx * vx + 2 * a12[b] * vx * vy + a22[b] * vy * vy + a33[b] * vz * vz
        )
        rows.append(a)
        cols.append(b)
        ws.append(wgt)
    g = csr_matrix(
        (np.concatenate(ws), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    sx, sy, sl = source_xyl
    src = (sl * h + sy) * w + sx
    return dijkstra(g, indices=src).reshape(depth, h, w)


def random_lifted_tensors(seed, shape=(16, 32, 32), max_sqrt_ratio=4.0):
    """I.i.d. random block tensors whose per-node anisotropy (sqrt of the
    ratio of extreme 3x3 eigenvalues, lifted axis included) stays within
    ``max_sqrt_ratio``."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.5, 2.0, size=shape)
    factors = rng.uniform(1.0, max_sqrt_ratio, size=(3,) + shape)
    ang = rng.uniform(0, np.pi, size=shape)
    spatial = np.sort(factors[:2], axis=0)
    lam1 = (base * spatial[0]) ** 2
    lam2 = (base * spatial[1]) ** 2
    c, s = np.cos(ang), np.sin(ang)
    t11 = lam1 * c * c + lam2 * s * s
    t22 = lam1 * s * s + lam2 * c * c
    t12 = (lam1 - lam2) * c * s
    t33 = (base * factors[2]) ** 2
    return t11, t12, t22, t33
