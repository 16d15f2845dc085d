"""Config file loading: TOML or JSON, nested or flat metric blocks."""

from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import IngestionError, ParameterError
from .pipeline import PipelineConfig

FLAT_METRIC_KEYS = ("alpha", "beta", "lambda", "p", "levels", "kappa_max", "theta_floor")
FLAT_OOF_KEYS = ("radii", "sigma", "dark_on_bright")
FLAT_TRACER_KEYS = ("step", "max_steps", "capture_radius")
FLAT_TOP_KEYS = ("feature_filter", "feature_size", "refine", "tube_radius")


def _flat_to_nested(data: dict) -> dict:
    nested: dict = {"oof": {}, "metric": {}, "tracer": {}}
    for key, value in data.items():
        if key in FLAT_METRIC_KEYS:
            nested["metric"][key] = value
        elif key in FLAT_OOF_KEYS:
            nested["oof"][key] = value
        elif key in FLAT_TRACER_KEYS:
            nested["tracer"][key] = value
        elif key in FLAT_TOP_KEYS:
            nested[key] = value
        elif key in ("oof", "metric", "tracer"):
            nested[key].update(value)
        else:
            raise ParameterError(f"unknown config key {key!r}")
    return nested


def parse_config(data: dict) -> PipelineConfig:
    """Build a pipeline config from a nested or flat mapping."""
    if any(k in data for k in FLAT_METRIC_KEYS + FLAT_OOF_KEYS + FLAT_TRACER_KEYS):
        data = _flat_to_nested(data)
    return PipelineConfig.from_dict(data)


def load_config(path) -> PipelineConfig:
    """Read a ``.toml`` or ``.json`` config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        try:
            data = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise IngestionError(f"malformed TOML config {path}: {exc}") from exc
    elif path.suffix.lower() == ".json":
        try:
            data = json.loads(raw.decode())
        except json.JSONDecodeError as exc:
            raise IngestionError(
                f"malformed JSON config {path} at line {exc.lineno}: {exc.msg}"
            ) from exc
    else:
        raise ParameterError(f"config {path} must be .toml or .json")
    if not isinstance(data, dict):
        raise IngestionError(f"config {path} must hold a table/object at top level")
    return parse_config(data)


def emit_config(config: PipelineConfig) -> str:
    """Canonical JSON for the parse -> emit -> parse round trip."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
