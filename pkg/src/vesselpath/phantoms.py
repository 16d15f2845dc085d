"""Synthetic tube images with known centerlines and masks.

Used by the test suite and by the benchmark harness as a desk-scale
stand-in for annotated retinal patches: two crossing sinusoidal tubes
with distinct contrasts reproduce the geometry in which pointwise
vesselness metrics hop onto the stronger vessel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import ScalarField2D, write_image_png

LN2 = float(np.log(2.0))


@dataclass(eq=False)
class Tube:
    """A curvilinear tube: centerline samples, half-width and contrast."""

    centerline: np.ndarray  # (N, 2) points, x ascending
    half_width: float
    contrast: float

    def distance_map(self, width: int, height: int) -> np.ndarray:
        tree = cKDTree(self.centerline)
        xs, ys = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
        d, _ = tree.query(pts)
        return d.reshape(height, width)


def sine_centerline(width: int, mid_y: float, amplitude: float, cycles: float, phase: float, n: int = 2048) -> np.ndarray:
    xs = np.linspace(0.0, width - 1.0, n)
    ys = mid_y + amplitude * np.sin(2.0 * np.pi * cycles * xs / (width - 1.0) + phase)
    return np.stack([xs, ys], axis=1)


def straight_centerline(width: int, y: float, n: int = 1024) -> np.ndarray:
    xs = np.linspace(0.0, width - 1.0, n)
    return np.stack([xs, np.full(n, float(y))], axis=1)


def render_tubes(
    width: int,
    height: int,
    tubes: list[Tube],
    background: float = 0.9,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    profile: str = "cos",
) -> tuple[ScalarField2D, list[np.ndarray]]:
    """Draw dark tubes over a bright background in painter's order.

    Returns the image field and, per tube, the boolean mask of pixels
    within the tube half-width.  Later tubes occlude earlier ones where
    their supports overlap, the way the front vessel hides the back one
    at a crossing; a crossing therefore carries the front tube's
    intensity, not a combined deeper dip.
    """
    image = np.full((height, width), background)
    masks = []
    for tube in tubes:
        d = tube.distance_map(width, height)
        masks.append(d <= tube.half_width)
        if profile == "hard":
            dip = tube.contrast * (d <= tube.half_width)
            support = d <= tube.half_width
        elif profile == "gauss":
            sp = tube.half_width / np.sqrt(2.0 * LN2)
            dip = tube.contrast * np.exp(-(d**2) / (2.0 * sp**2))
            support = d <= 3.0 * tube.half_width
        else:  # raised cosine, half depth at the nominal half-width
            dip = tube.contrast * np.cos(np.clip(d / tube.half_width, 0, 2) * np.pi / 4.0) ** 2
            support = d <= 2.0 * tube.half_width
        image = np.where(support, background - dip, image)
    if noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        image = image + rng.normal(0.0, noise_sigma, size=image.shape)
    return ScalarField2D.from_array(np.clip(image, 0.0, 1.0)), masks


def straight_tube_case(
    width: int = 64,
    height: int = 48,
    half_width: float = 2.0,
    contrast: float = 0.5,
    profile: str = "cos",
) -> tuple[ScalarField2D, Tube]:
    tube = Tube(straight_centerline(width, height / 2.0), half_width, contrast)
    image, _ = render_tubes(width, height, [tube], profile=profile)
    return image, tube


@dataclass(eq=False)
class CrossingPhantom:
    """A weak-contrast target tube crossed by a stronger distractor."""

    case_id: str
    image: ScalarField2D
    artery_mask: np.ndarray
    vein_mask: np.ndarray
    overlap_mask: np.ndarray
    source: tuple[int, int]
    end: tuple[int, int]
    artery: Tube
    vein: Tube


def _snap_to_centerline(tube: Tube, x: float) -> tuple[int, int]:
    idx = int(np.argmin(np.abs(tube.centerline[:, 0] - x)))
    px, py = tube.centerline[idx]
    return int(round(px)), int(round(py))


def crossing_phantom(
    case_id: str,
    seed: int,
    width: int = 96,
    height: int = 96,
    noise_sigma: float = 0.02,
    artery_contrast: float = 0.30,
    vein_contrast: float = 0.55,
) -> CrossingPhantom:
    """One benchmark case: extract the weaker tube between two endpoints.

    The stronger tube crosses it twice and runs roughly parallel in
    between, so a pointwise vesselness metric saves cost by hopping onto
    it; the contrast gap (>= 20% of the intensity range) keeps the two
    tubes separable in feature value.
    """
    rng = np.random.default_rng(seed)
    mid = 0.58 * height + rng.uniform(-2.0, 2.0)
    amp_a = rng.uniform(4.5, 6.5)
    amp_gap = rng.uniform(22.0, 26.0)
    rho = rng.uniform(0.42, 0.48)
    offset = rho * amp_gap
    wiggle = rng.uniform(2.5, 3.5)
    wiggle_cycles = rng.integers(3, 5)
    wiggle_phase = rng.uniform(0, 2 * np.pi)
    # Both tubes arch upward over half a period.  The stronger, smoother
    # tube starts below the target, crosses it near 15% of the span,
    # runs above it through the middle and crosses back near 85%.  The
    # target is tortuous between the crossings, so hopping onto the
    # smooth strong tube is the cheaper route for any metric that only
    # reads pointwise tube strength.
    xs = np.linspace(0.0, width - 1.0, 2048)
    theta = np.pi * xs / (width - 1.0)
    ys = (
        mid
        - amp_a * np.sin(theta)
        + wiggle * np.sin(2 * np.pi * wiggle_cycles * xs / (width - 1.0) + wiggle_phase)
        * np.sin(theta) ** 2
    )
    artery = Tube(
        np.stack([xs, ys], axis=1),
        half_width=2.2,
        contrast=artery_contrast,
    )
    vein = Tube(
        sine_centerline(width, mid + offset, -(amp_a + amp_gap), cycles=0.5, phase=0.0),
        half_width=2.6,
        contrast=vein_contrast,
    )
    # target rendered last: it passes in front at the crossings
    image, (mask_v, mask_a) = render_tubes(
        width, height, [vein, artery], noise_sigma=noise_sigma, rng=rng
    )
    overlap = mask_a & mask_v
    source = _snap_to_centerline(artery, 4.0)
    end = _snap_to_centerline(artery, width - 5.0)
    return CrossingPhantom(
        case_id=case_id,
        image=image,
        artery_mask=mask_a & ~overlap,
        vein_mask=mask_v & ~overlap,
        overlap_mask=overlap,
        source=source,
        end=end,
        artery=artery,
        vein=vein,
    )


def crossing_suite(n_cases: int = 10, base_seed: int = 7, **kwargs) -> list[CrossingPhantom]:
    return [
        crossing_phantom(f"crossing_{k:02d}", base_seed + k, **kwargs)
        for k in range(n_cases)
    ]


def save_case_dir(phantom: CrossingPhantom, root) -> None:
    """Write a phantom in the benchmark input layout:
    ``<root>/<id>/{image.png, av.png, points.json}``."""
    from pathlib import Path

    from PIL import Image

    case_dir = Path(root) / phantom.case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    write_image_png(case_dir / "image.png", phantom.image.values, normalize=False)
    h, w = phantom.image.spec.shape
    av = np.zeros((h, w, 3), dtype=np.uint8)
    av[phantom.artery_mask, 0] = 255
    av[phantom.vein_mask, 2] = 255
    av[phantom.overlap_mask, 1] = 255
    Image.fromarray(av).save(case_dir / "av.png")
    points = {"source": list(phantom.source), "end": list(phantom.end)}
    (case_dir / "points.json").write_text(json.dumps(points))
