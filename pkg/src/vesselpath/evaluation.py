"""Centerline evaluation: patch ingestion, path digitization, overlap
scoring and the batch comparison harness.

A case is an image patch with artery/vein/overlap ground-truth masks and
a source/end point pair on the target artery.  Extracted paths are
digitized to 4-connected pixel chains and scored by the fraction of
pixels inside the artery (overlap pixels count as artery: the target
vessel legitimately passes through crossings).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .eikonal import SolverOptions, solve
from .errors import IngestionError, ParameterError, VesselPathError
from .fields import ScalarField2D, read_image_png
from .metrics import METRIC_KINDS
from .paths import Polyline
from .pipeline import ImagePipeline, PipelineConfig
from .tracer import backtrack, project


@dataclass(eq=False)
class PatchCase:
    """One evaluation unit: patch, ground truth and endpoint pair."""

    case_id: str
    dataset: str
    image: ScalarField2D
    artery_mask: np.ndarray
    vein_mask: np.ndarray
    overlap_mask: np.ndarray
    source: tuple[int, int]
    end: tuple[int, int]

    def __post_init__(self):
        shape = self.image.spec.shape
        for name in ("artery_mask", "vein_mask", "overlap_mask"):
            m = getattr(self, name)
            if m.shape != shape or m.dtype != np.bool_:
                raise IngestionError(f"{name} must be a boolean mask of shape {shape}")
        target = self.artery_mask | self.overlap_mask
        for name, pt in (("source", self.source), ("end", self.end)):
            x, y = pt
            if not (0 <= x < shape[1] and 0 <= y < shape[0]):
                raise IngestionError(f"{name} point {pt} outside the patch")
            if not target[y, x]:
                raise IngestionError(f"{name} point {pt} is not on the target vessel")

    @property
    def target_mask(self) -> np.ndarray:
        """Artery including crossings."""
        return self.artery_mask | self.overlap_mask

    @classmethod
    def from_phantom(cls, phantom, dataset: str = "phantom") -> "PatchCase":
        return cls(
            case_id=phantom.case_id,
            dataset=dataset,
            image=phantom.image,
            artery_mask=phantom.artery_mask,
            vein_mask=phantom.vein_mask,
            overlap_mask=phantom.overlap_mask,
            source=tuple(phantom.source),
            end=tuple(phantom.end),
        )


@dataclass(frozen=True, eq=False)
class DigitalPath:
    """4-connected pixel chain: consecutive pixels differ by one unit in
    exactly one coordinate and never immediately backtrack."""

    pixels: np.ndarray  # (N, 2) int

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[1] != 2 or px.shape[0] < 1:
            raise ParameterError("digital path needs an (N, 2) pixel array")
        object.__setattr__(self, "pixels", px.astype(np.int64))

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def check_connectivity(self) -> bool:
        px = self.pixels
        if len(px) < 2:
            return True
        d = np.abs(np.diff(px, axis=0))
        four = np.all(d.sum(axis=1) == 1)
        no_backtrack = True
        if len(px) >= 3:
            no_backtrack = not np.any(np.all(px[2:] == px[:-2], axis=1))
        return bool(four and no_backtrack)


def digitize(path: Polyline) -> DigitalPath:
    """Convert a continuous path to a 4-connected pixel chain.

    Segments are supersampled at half-pixel spacing and rounded;
    consecutive duplicates collapse, immediate backtracks cancel, and
    diagonal steps are bridged through the horizontal-first pixel.
    """
    pts = path.points
    samples = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / 0.5)))
        for t in np.linspace(0.0, 1.0, n + 1)[1:]:
            samples.append((1 - t) * a + t * b)
    rounded = [(int(round(p[0])), int(round(p[1]))) for p in samples]

    out: list[tuple[int, int]] = []

    def push(p):
        while True:
            if not out:
                out.append(p)
                return
            last = out[-1]
            if p == last:
                return
            if len(out) >= 2 and out[-2] == p:
                out.pop()
                return
            dx = p[0] - last[0]
            dy = p[1] - last[1]
            if abs(dx) == 1 and abs(dy) == 1:
                # bridge the diagonal, horizontal move first
                push((last[0] + dx, last[1]))
                continue
            out.append(p)
            return

    for p in rounded:
        push(p)
    return DigitalPath(np.array(out, dtype=np.int64))


def overlap_ratio(path: DigitalPath, target_mask: np.ndarray) -> float:
    """Fraction of the path's pixel collection inside the target mask."""
    px = path.pixels
    if len(px) < 1:
        raise ParameterError("empty digital path")
    unique = np.unique(px, axis=0)
    xs = np.clip(unique[:, 0], 0, target_mask.shape[1] - 1)
    ys = np.clip(unique[:, 1], 0, target_mask.shape[0] - 1)
    inside = (
        (unique[:, 0] >= 0)
        & (unique[:, 0] < target_mask.shape[1])
        & (unique[:, 1] >= 0)
        & (unique[:, 1] < target_mask.shape[0])
        & target_mask[ys, xs]
    )
    return float(inside.sum() / unique.shape[0])


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def load_av_masks(av_path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split an RGB ground-truth image into artery / vein / overlap masks
    by strict channel dominance (red / blue / green)."""
    try:
        img = Image.open(av_path)
        img.load()
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read ground truth {av_path}: {exc}") from exc
    if img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img).astype(np.int32)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    artery = (r > g) & (r > b)
    vein = (b > r) & (b > g)
    overlap = (g > r) & (g > b)
    return artery, vein, overlap


def load_patch(image_path, av_path, points_path, case_id: str = "case", dataset: str = "default") -> PatchCase:
    """Assemble a case from its three files.

    ``points_path`` holds ``{"source": [x, y], "end": [x, y]}``.
    """
    image = read_image_png(image_path)
    artery, vein, overlap = load_av_masks(av_path)
    if artery.shape != image.spec.shape:
        raise IngestionError(
            f"ground truth shape {artery.shape} does not match image {image.spec.shape}"
        )
    try:
        text = open(points_path).read()
        points = json.loads(text)
    except OSError as exc:
        raise IngestionError(f"cannot read points file {points_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(
            f"malformed points file {points_path} at line {exc.lineno}: {exc.msg}"
        ) from exc
    for key in ("source", "end"):
        if key not in points or len(points[key]) != 2:
            raise IngestionError(f"points file {points_path} is missing a valid {key!r} entry")
    return PatchCase(
        case_id=case_id,
        dataset=dataset,
        image=image,
        artery_mask=artery,
        vein_mask=vein,
        overlap_mask=overlap,
        source=tuple(int(v) for v in points["source"]),
        end=tuple(int(v) for v in points["end"]),
    )


def load_cases_dir(root, dataset: str | None = None, strict: bool = True):
    """Read every ``<root>/<id>/{image.png, av.png, points.json}`` case.

    With ``strict=False`` unreadable cases do not abort the scan; a
    ``(cases, failures)`` pair is returned instead, failures being
    ``(case_id, message)`` tuples for the harness to record as zeros.
    """
    from pathlib import Path

    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"cases directory {root} does not exist")
    cases = []
    failures: list[tuple[str, str]] = []
    for case_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        image = case_dir / "image.png"
        av = case_dir / "av.png"
        points = case_dir / "points.json"
        if not (image.exists() and av.exists() and points.exists()):
            continue
        try:
            cases.append(
                load_patch(image, av, points, case_id=case_dir.name,
                           dataset=dataset or root.name)
            )
        except IngestionError as exc:
            if strict:
                raise
            failures.append((case_dir.name, str(exc)))
    if not cases and not failures:
        raise IngestionError(f"no cases found under {root}")
    if strict:
        return cases
    return cases, failures


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseScore:
    dataset: str
    case_id: str
    metric: str
    theta: float
    error: str | None = None


@dataclass(eq=False)
class ScoreTable:
    """Per-case scores plus the aggregated per-(dataset, metric) stats."""

    rows: list[CaseScore]
    metrics: tuple[str, ...]

    def stats(self) -> dict[tuple[str, str], dict[str, float]]:
        out: dict[tuple[str, str], dict[str, float]] = {}
        keys = sorted({(r.dataset, r.metric) for r in self.rows})
        for dataset, metric in keys:
            vals = np.array(
                [r.theta for r in self.rows if r.dataset == dataset and r.metric == metric]
            )
            out[(dataset, metric)] = {
                "avg": float(vals.mean()),
                "max": float(vals.max()),
                "min": float(vals.min()),
                "std": float(vals.std()),
            }
        return out


def _extract_with_metric(pipeline: ImagePipeline, case: PatchCase, metric: str) -> Polyline:
    if metric == "proposed":
        return pipeline.extract(case.source, case.end).path
    tensors = pipeline.baseline(metric)
    src, dst = case.source, case.end
    if metric == "IR":
        amap = solve(tensors, [src], SolverOptions(stop_at=dst))
        return backtrack(amap, tensors, dst, src, pipeline.config.tracer)
    if metric == "ArR":
        radii = np.asarray(pipeline.config.oof.radii)
        scale = pipeline.oof.scale_map.values

        def level(pt):
            return int(np.argmin(np.abs(radii - scale[pt[1], pt[0]])))

        amap = solve(
            tensors,
            [(src[0], src[1], level(src))],
            SolverOptions(stop_at=(dst[0], dst[1], level(dst))),
        )
        gamma = backtrack(
            amap,
            tensors,
            end=(dst[0], dst[1], radii[level(dst)]),
            seed=(src[0], src[1], radii[level(src)]),
            opts=pipeline.config.tracer,
        )
        return project(gamma)
    raise ParameterError(f"unknown metric kind {metric!r} (expected one of {METRIC_KINDS})")


def run_benchmark(
    cases: list[PatchCase],
    metrics: tuple[str, ...] = METRIC_KINDS,
    config: PipelineConfig | None = None,
    paths_out: dict | None = None,
) -> ScoreTable:
    """Score every case under every metric.

    Case failures never abort the batch: the case scores 0 under that
    metric with the error recorded.  Results are deterministic for fixed
    inputs; cases run in case-id order.  When ``paths_out`` is given it
    collects the extracted spatial paths keyed by (case_id, metric).
    """
    if not cases:
        raise ParameterError("benchmark needs at least one case")
    config = config or PipelineConfig()
    rows: list[CaseScore] = []
    for case in sorted(cases, key=lambda c: (c.dataset, c.case_id)):
        pipeline = ImagePipeline(case.image, config)
        for metric in metrics:
            try:
                path = _extract_with_metric(pipeline, case, metric)
                theta = overlap_ratio(digitize(path), case.target_mask)
                error = None
                if paths_out is not None:
                    paths_out[(case.case_id, metric)] = path
            except VesselPathError as exc:
                theta = 0.0
                error = f"{type(exc).__name__}: {exc}"
                path = None
            rows.append(
                CaseScore(case.dataset, case.case_id, metric, theta, error)
            )
    return ScoreTable(rows=rows, metrics=tuple(metrics))
