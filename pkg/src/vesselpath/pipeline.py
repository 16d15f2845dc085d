"""End-to-end extraction pipeline with per-image caching.

Chains filtering, metric construction, front propagation, backtracking
and refinement behind one object so interactive callers (CLI, service)
pay the filter and tensor cost once per image/parameter set and only the
solve/trace per extraction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .eikonal import SolverOptions, solve
from .errors import ParameterError
from .fields import ScalarField2D
from .metrics import (
    LiftedGrid,
    MetricParams,
    baseline_tensor,
    floor_potential,
    lifted_tensor_field,
    path_energy,
    potential,
    spatial_tensor,
)
from .oof import OofParams, feature_map, oof_multiscale
from .paths import LiftedPolyline, Polyline
from .tracer import TracerOptions, backtrack, project, refine_path

# Flag threshold for energy per unit length: floored-vessel travel costs
# about sqrt(omega_min) per pixel, background travel costs 1.
HIGH_ENERGY_RATIO = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the extraction pipeline, serializable as one block."""

    oof: OofParams = OofParams()
    metric: MetricParams = MetricParams()
    tracer: TracerOptions = TracerOptions()
    feature_filter: str = "gaussian"
    feature_size: float = 2.0
    refine: bool = True
    tube_radius: float | None = None

    def __post_init__(self):
        if self.feature_filter not in ("mean", "gaussian"):
            raise ParameterError(
                f"feature_filter must be 'mean' or 'gaussian', got {self.feature_filter!r}"
            )
        if self.feature_size < 0:
            raise ParameterError("feature_size must be >= 0")
        if self.tube_radius is not None and self.tube_radius <= 0:
            raise ParameterError("tube_radius must be positive")

    def to_dict(self) -> dict:
        return {
            "oof": {
                "radii": list(self.oof.radii),
                "sigma": self.oof.sigma,
                "dark_on_bright": self.oof.dark_on_bright,
            },
            "metric": {
                "alpha": self.metric.alpha,
                "beta": self.metric.beta,
                "lambda": self.metric.lam,
                "p": self.metric.p_exponent,
                "levels": self.metric.levels,
                "kappa_max": self.metric.kappa_max,
                "theta_floor": self.metric.theta_floor,
            },
            "tracer": {
                "step": self.tracer.step,
                "max_steps": self.tracer.max_steps,
                "capture_radius": self.tracer.capture_radius,
            },
            "feature_filter": self.feature_filter,
            "feature_size": self.feature_size,
            "refine": self.refine,
            "tube_radius": self.tube_radius,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        known_top = {"oof", "metric", "tracer", "feature_filter", "feature_size", "refine", "tube_radius"}
        known_blocks = {
            "oof": {"radii", "sigma", "dark_on_bright"},
            "metric": {"alpha", "beta", "lambda", "p", "levels", "kappa_max", "theta_floor"},
            "tracer": {"step", "max_steps", "capture_radius"},
        }
        for key in data:
            if key not in known_top:
                raise ParameterError(f"unknown config key {key!r}")
        for block, keys in known_blocks.items():
            for key in data.get(block, {}):
                if key not in keys:
                    raise ParameterError(f"unknown config key {block}.{key}")
        oof_d = data.get("oof", {})
        metric_d = data.get("metric", {})
        tracer_d = data.get("tracer", {})
        oof = OofParams(
            radii=tuple(oof_d.get("radii", cfg.oof.radii)),
            sigma=oof_d.get("sigma", cfg.oof.sigma),
            dark_on_bright=oof_d.get("dark_on_bright", cfg.oof.dark_on_bright),
        )
        metric = MetricParams(
            alpha=metric_d.get("alpha", cfg.metric.alpha),
            beta=metric_d.get("beta", cfg.metric.beta),
            lam=metric_d.get("lambda", cfg.metric.lam),
            p_exponent=metric_d.get("p", cfg.metric.p_exponent),
            levels=metric_d.get("levels", cfg.metric.levels),
            kappa_max=metric_d.get("kappa_max", cfg.metric.kappa_max),
            theta_floor=metric_d.get("theta_floor", cfg.metric.theta_floor),
        )
        tracer = TracerOptions(
            step=tracer_d.get("step", cfg.tracer.step),
            max_steps=tracer_d.get("max_steps", cfg.tracer.max_steps),
            capture_radius=tracer_d.get("capture_radius", cfg.tracer.capture_radius),
        )
        return cls(
            oof=oof,
            metric=metric,
            tracer=tracer,
            feature_filter=data.get("feature_filter", cfg.feature_filter),
            feature_size=data.get("feature_size", cfg.feature_size),
            refine=data.get("refine", cfg.refine),
            tube_radius=data.get("tube_radius", cfg.tube_radius),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_updates(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


@dataclass(eq=False)
class ExtractionOutcome:
    """One extraction: the spatial path plus diagnostics."""

    path: Polyline
    lifted_path: LiftedPolyline | None
    action_value: float
    energy: float
    steps: int
    refined: bool
    high_energy: bool
    warnings: list[str] = field(default_factory=list)


class ImagePipeline:
    """Per-image caches: filter outputs, resolved metric, tensors.

    Construction runs the expensive filtering and tensor assembly;
    :meth:`extract` then costs one solve plus one trace.  The config
    hash stamps every cache for session bookkeeping.
    """

    def __init__(self, image: ScalarField2D, config: PipelineConfig | None = None):
        self.image = image
        self.config = config or PipelineConfig()
        self.config_hash = self.config.config_hash()
        self.oof = oof_multiscale(image, self.config.oof)
        self.feature = feature_map(
            self.oof.vesselness, self.config.feature_filter, self.config.feature_size
        )
        self.theta_max = float(self.feature.values.max())
        self.params = self.config.metric.resolve(self.oof.vesselness, self.theta_max)
        self.omega = floor_potential(
            potential(self.oof.vesselness, self.params.alpha), self.params.omega_min
        )
        self.spatial = spatial_tensor(self.omega, self.oof.q1, self.oof.q2)
        if self.theta_max > 0:
            self.grid = LiftedGrid.build(image.spec, self.theta_max, self.params.levels)
            self.lifted = lifted_tensor_field(
                self.spatial, self.omega, self.feature, self.grid, self.params
            )
        else:
            self.grid = None
            self.lifted = None

    def _check_point(self, pt, name: str) -> tuple[int, int]:
        x, y = int(round(pt[0])), int(round(pt[1]))
        if not self.image.spec.contains(x, y):
            raise ParameterError(f"{name} point {tuple(pt)} outside the image")
        return x, y

    def baseline(self, kind: str):
        return baseline_tensor(kind, self.oof, self.params)

    def extract(self, source, end) -> ExtractionOutcome:
        src = self._check_point(source, "source")
        dst = self._check_point(end, "end")
        warnings: list[str] = []
        if src == dst:
            pt = Polyline(np.array([[float(src[0]), float(src[1])]], dtype=float))
            warnings.append("source equals end: degenerate single-point path")
            return ExtractionOutcome(
                path=pt, lifted_path=None, action_value=0.0, energy=0.0,
                steps=0, refined=False, high_energy=False, warnings=warnings,
            )

        if self.lifted is None:
            warnings.append("flat feature map: coherence disabled, plain 2D solve")
            amap = solve(self.spatial, [src], SolverOptions(stop_at=dst))
            action_value = amap.value_at_node(dst)
            path = backtrack(amap, self.spatial, dst, src, self.config.tracer)
            lifted_path = None
        else:
            grid = self.grid
            src_l = grid.level_of(self.feature.values[src[1], src[0]])
            dst_l = grid.level_of(self.feature.values[dst[1], dst[0]])
            dense = self.lifted.materialize()
            amap = solve(
                dense,
                [(src[0], src[1], src_l)],
                SolverOptions(stop_at=(dst[0], dst[1], dst_l)),
            )
            action_value = amap.value_at_node((dst[0], dst[1], dst_l))
            lifted_path = backtrack(
                amap,
                self.lifted,
                end=(dst[0], dst[1], grid.theta_values[dst_l]),
                seed=(src[0], src[1], grid.theta_values[src_l]),
                opts=self.config.tracer,
            )
            path = project(lifted_path)

        refined = False
        if self.config.refine:
            result = refine_path(
                path, self.oof, self.params,
                tube_radius=self.config.tube_radius,
                tracer_opts=self.config.tracer,
            )
            if result.refined:
                path = result.path
                refined = True
            elif result.message:
                warnings.append(result.message)

        energy = path_energy(path, self.spatial)
        length = max(path.length(), 1e-9)
        high_energy = energy / length > HIGH_ENERGY_RATIO
        if high_energy:
            warnings.append(
                f"high energy per unit length ({energy / length:.3f}): "
                "endpoints may lie off any vessel"
            )
        return ExtractionOutcome(
            path=path,
            lifted_path=lifted_path,
            action_value=float(action_value),
            energy=float(energy),
            steps=len(path),
            refined=refined,
            high_energy=high_energy,
            warnings=warnings,
        )
