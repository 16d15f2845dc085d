"""Dense 2D grid fields plus the sampling, differential and filtering
primitives the rest of the toolkit is built on.

Conventions:
  * grid spacing is one pixel; all lengths are in pixel units
  * arrays are row-major with shape (height, width), indexed [y, x]
  * points are (x, y) pairs in pixel coordinates, node (i, j) at (i, j)
  * filtering replicates edge values; gradients fall back to one-sided
    differences on the boundary
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DomainError, IngestionError, ParameterError

GFLD_MAGIC = b"GFLD"


@dataclass(frozen=True)
class GridSpec:
    """Shape of a uniform pixel grid."""

    width: int
    height: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ParameterError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not self.spacing > 0:
            raise ParameterError(f"grid spacing must be positive, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width - 1 and 0.0 <= y <= self.height - 1


def _check_values(spec: GridSpec, arr: np.ndarray, ncomp: int | None = None) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    expected = spec.shape if ncomp is None else spec.shape + (ncomp,)
    if arr.shape != expected:
        raise ParameterError(f"field shape {arr.shape} does not match grid {expected}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("field contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    """One real value per grid node."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.spec, self.values))

    @classmethod
    def from_array(cls, arr) -> "ScalarField2D":
        arr = np.asarray(arr, dtype=np.float64)
        h, w = arr.shape
        return cls(GridSpec(w, h), arr)


@dataclass(frozen=True, eq=False)
class VectorField2D:
    """One (x, y) vector per grid node, stored as an (H, W, 2) array."""

    spec: GridSpec
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vectors", _check_values(self.spec, self.vectors, 2))

    @property
    def x(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.vectors[..., 1]


@dataclass(frozen=True, eq=False)
class SymMat2Field:
    """A symmetric 2x2 matrix per node, stored as (m11, m12, m22) planes.

    Index 1 is the x axis, index 2 the y axis.
    """

    spec: GridSpec
    m11: np.ndarray
    m12: np.ndarray
    m22: np.ndarray

    def __post_init__(self):
        for name in ("m11", "m12", "m22"):
            object.__setattr__(self, name, _check_values(self.spec, getattr(self, name)))

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-node eigenvalues (smaller, larger) in closed form."""
        mean = 0.5 * (self.m11 + self.m22)
        disc = np.hypot(0.5 * (self.m11 - self.m22), self.m12)
        return mean - disc, mean + disc

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0].min())

    def matrix_at(self, ix: int, iy: int) -> np.ndarray:
        a = self.m11[iy, ix]
        b = self.m12[iy, ix]
        c = self.m22[iy, ix]
        return np.array([[a, b], [b, c]])


def bilinear_sample(field: ScalarField2D, point) -> float:
    """Bilinear interpolation of ``field`` at a continuous point.

    Exact at grid nodes.  Raises :class:`DomainError` outside
    [0, width-1] x [0, height-1].
    """
    x, y = float(point[0]), float(point[1])
    spec = field.spec
    if not spec.contains(x, y):
        raise DomainError(f"point ({x}, {y}) outside grid {spec.width}x{spec.height}")
    x0 = min(int(np.floor(x)), spec.width - 2)
    y0 = min(int(np.floor(y)), spec.height - 2)
    fx = x - x0
    fy = y - y0
    v = field.values
    return float(
        v[y0, x0] * (1 - fx) * (1 - fy)
        + v[y0, x0 + 1] * fx * (1 - fy)
        + v[y0 + 1, x0] * (1 - fx) * fy
        + v[y0 + 1, x0 + 1] * fx * fy
    )


def bilinear_sample_array(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear interpolation; coordinates are clamped to the grid."""
    h, w = values.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    fx = xs - x0
    fy = ys - y0
    return (
        values[y0, x0] * (1 - fx) * (1 - fy)
        + values[y0, x0 + 1] * fx * (1 - fy)
        + values[y0 + 1, x0] * (1 - fx) * fy
        + values[y0 + 1, x0 + 1] * fx * fy
    )


def gradient_central(field: ScalarField2D) -> VectorField2D:
    """Spacing-normalized gradient: central differences in the interior,
    one-sided on the boundary."""
    dy, dx = np.gradient(field.values, field.spec.spacing)
    return VectorField2D(field.spec, np.stack([dx, dy], axis=-1))


def smooth(field: ScalarField2D, kind: str, size: float) -> ScalarField2D:
    """Filter a field with a mean (box) or Gaussian kernel.

    ``size`` is the box radius in pixels for ``kind='mean'`` (radius 0 is
    the identity) and the standard deviation for ``kind='gaussian'``
    (kernel truncated at four standard deviations).  Edges replicate.
    """
    if kind == "mean":
        if size < 0:
            raise ParameterError(f"mean filter radius must be >= 0, got {size}")
        radius = int(round(size))
        if radius == 0:
            return ScalarField2D(field.spec, field.values.copy())
        out = ndimage.uniform_filter(field.values, size=2 * radius + 1, mode="nearest")
    elif kind == "gaussian":
        if not size > 0:
            raise ParameterError(f"gaussian sigma must be > 0, got {size}")
        out = ndimage.gaussian_filter(field.values, sigma=size, mode="nearest", truncate=4.0)
    else:
        raise ParameterError(f"unknown filter kind {kind!r} (expected 'mean' or 'gaussian')")
    return ScalarField2D(field.spec, out)


# ---------------------------------------------------------------------------
# Image and sidecar I/O
# ---------------------------------------------------------------------------

def read_image_png(path) -> ScalarField2D:
    """Load an 8- or 16-bit grayscale PNG as a float field in [0, 1].

    RGB images are reduced to their green channel, the conventional
    high-contrast channel for fundus photographs.
    """
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read image {path}: {exc}") from exc
    if img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img)[:, :, 1].astype(np.float64) / 255.0
    elif img.mode == "L":
        arr = np.asarray(img).astype(np.float64) / 255.0
    elif img.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(img).astype(np.float64) / 65535.0
    elif img.mode == "I":
        arr = np.asarray(img).astype(np.float64)
        if arr.max() > 255:
            arr /= 65535.0
        else:
            arr /= 255.0
    else:
        arr = np.asarray(img.convert("L")).astype(np.float64) / 255.0
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise IngestionError(f"image {path} is not a usable 2D grayscale image")
    return ScalarField2D.from_array(arr)


def write_image_png(path, values: np.ndarray, normalize: bool = True) -> None:
    """Write a float array as an 8-bit grayscale PNG (scaled to [0, 255])."""
    arr = np.asarray(values, dtype=np.float64)
    if normalize:
        lo, hi = float(arr.min()), float(arr.max())
        arr = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    arr = np.clip(arr * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_gfld(path, arrays) -> None:
    """Dump float maps in the raw sidecar format.

    Layout: 16-byte header (magic ``GFLD``, u32 width, u32 height,
    u32 channels, little-endian) followed by row-major float32 planes.
    """
    arrays = np.asarray(arrays, dtype=np.float32)
    if arrays.ndim == 2:
        arrays = arrays[None]
    channels, h, w = arrays.shape
    with open(path, "wb") as fh:
        fh.write(GFLD_MAGIC)
        fh.write(struct.pack("<III", w, h, channels))
        fh.write(arrays.tobytes(order="C"))


def read_gfld(path) -> np.ndarray:
    """Read a ``GFLD`` sidecar back as a (channels, height, width) array."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != GFLD_MAGIC:
            raise IngestionError(f"{path} is not a GFLD sidecar")
        w, h, channels = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != w * h * channels:
        raise IngestionError(f"{path}: truncated GFLD payload")
    return data.reshape(channels, h, w).astype(np.float32)
