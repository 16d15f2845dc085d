"""Command-line entry points.

Subcommands:
  extract     one centerline between two points, with overlay and summary
  benchmark   score metric variants over a cases directory (or phantoms)
  vesselness  filter maps as PNG (optionally with raw float sidecars)
  serve       HTTP service backing the interactive client

Errors exit with the code of their class (parameter 2, ingestion 3,
domain 4, construction 5, propagation 6, trace 7, refinement 8) and a
JSON error body on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import emit_config, load_config, parse_config
from .errors import IngestionError, ParameterError, VesselPathError
from .evaluation import PatchCase, load_cases_dir, run_benchmark
from .fields import read_image_png, write_gfld, write_image_png
from .metrics import METRIC_KINDS
from .pipeline import ImagePipeline, PipelineConfig


def _parse_point(text: str) -> tuple[int, int]:
    try:
        x, y = (int(round(float(v))) for v in text.split(","))
        return x, y
    except ValueError as exc:
        raise ParameterError(f"point must be 'x,y', got {text!r}") from exc


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML/JSON config file; flags override it")
    parser.add_argument("--alpha", type=float, help="potential exponent (default: auto)")
    parser.add_argument("--beta", type=float, help="coherence weight, normalized feature units")
    parser.add_argument("--lambda", dest="lam", type=float, help="coherence rate (default: auto)")
    parser.add_argument("--p", dest="p_exponent", type=float, help="coherence gap exponent")
    parser.add_argument("--levels", type=int, help="feature-axis resolution")
    parser.add_argument("--kappa-max", type=float, help="anisotropy bound")
    parser.add_argument("--radii", help="comma-separated probe radii in pixels")
    parser.add_argument("--sigma", type=float, help="filter Gaussian scale")
    parser.add_argument("--bright-on-dark", action="store_true",
                        help="structures brighter than background")
    parser.add_argument("--feature-filter", choices=("mean", "gaussian"))
    parser.add_argument("--feature-size", type=float)
    parser.add_argument("--refine", dest="refine", action="store_true", default=None)
    parser.add_argument("--no-refine", dest="refine", action="store_false")
    parser.add_argument("--tube-radius", type=float)
    parser.add_argument("--step", type=float, help="backtracking step, pixels")
    parser.add_argument("--max-steps", type=int)
    parser.add_argument("--capture-radius", type=float, help="seed capture radius, pixels")


def _config_from_args(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    data = config.to_dict()
    metric = data["metric"]
    oof = data["oof"]
    tracer = data["tracer"]
    if args.alpha is not None:
        metric["alpha"] = args.alpha
    if args.beta is not None:
        metric["beta"] = args.beta
    if args.lam is not None:
        metric["lambda"] = args.lam
    if args.p_exponent is not None:
        metric["p"] = args.p_exponent
    if args.levels is not None:
        metric["levels"] = args.levels
    if args.kappa_max is not None:
        metric["kappa_max"] = args.kappa_max
    if args.radii is not None:
        oof["radii"] = [float(v) for v in args.radii.split(",")]
    if args.sigma is not None:
        oof["sigma"] = args.sigma
    if args.bright_on_dark:
        oof["dark_on_bright"] = False
    if args.feature_filter is not None:
        data["feature_filter"] = args.feature_filter
    if args.feature_size is not None:
        data["feature_size"] = args.feature_size
    if args.refine is not None:
        data["refine"] = args.refine
    if args.tube_radius is not None:
        data["tube_radius"] = args.tube_radius
    if args.step is not None:
        tracer["step"] = args.step
    if args.max_steps is not None:
        tracer["max_steps"] = args.max_steps
    if args.capture_radius is not None:
        tracer["capture_radius"] = args.capture_radius
    return parse_config(data)


def cmd_extract(args) -> int:
    config = _config_from_args(args)
    image = read_image_png(args.image)
    source = _parse_point(args.source)
    end = _parse_point(args.end)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    pipeline = ImagePipeline(image, config)
    outcome = pipeline.extract(source, end)

    (out_dir / "path.json").write_text(outcome.path.to_json())
    (out_dir / "path.geojson").write_text(outcome.path.to_geojson())
    if outcome.lifted_path is not None:
        (out_dir / "lifted_path.json").write_text(outcome.lifted_path.to_json())
    summary = {
        "source": list(source),
        "end": list(end),
        "action_value": outcome.action_value,
        "energy": outcome.energy,
        "steps": outcome.steps,
        "refined": outcome.refined,
        "high_energy": outcome.high_energy,
        "warnings": outcome.warnings,
        "config_hash": pipeline.config_hash,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    from .report import extraction_overlay

    extraction_overlay(
        image.values, outcome.path.points, source, end, out_dir / "overlay.png"
    )
    print(json.dumps(summary))
    return 0


def cmd_benchmark(args) -> int:
    config = _config_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    load_failures: list[tuple[str, str]] = []
    if args.phantoms:
        from .phantoms import crossing_suite, save_case_dir

        suite = crossing_suite(args.phantoms, base_seed=args.phantom_seed)
        if args.save_cases:
            for ph in suite:
                save_case_dir(ph, args.save_cases)
        cases = [PatchCase.from_phantom(p, dataset="phantoms") for p in suite]
        dataset = "phantoms"
    else:
        if not args.cases:
            raise ParameterError("benchmark needs --cases DIR or --phantoms N")
        cases, load_failures = load_cases_dir(args.cases, strict=False)
        dataset = Path(args.cases).name
    metrics = tuple(args.metrics.split(","))
    for m in metrics:
        if m not in METRIC_KINDS:
            raise ParameterError(f"unknown metric {m!r} (expected subset of {METRIC_KINDS})")

    paths: dict = {}
    if cases:
        table = run_benchmark(cases, metrics, config, paths_out=paths)
    else:
        from .evaluation import ScoreTable

        table = ScoreTable(rows=[], metrics=metrics)
    if load_failures:
        from .evaluation import CaseScore

        for case_id, message in load_failures:
            for m in metrics:
                table.rows.append(CaseScore(dataset, case_id, m, 0.0, message))

    from .report import overlay_figure, write_case_report_csv, write_scores_csv, write_scores_markdown

    write_scores_csv(table, out_dir / "scores.csv")
    write_scores_markdown(table, out_dir / "scores.md")
    write_case_report_csv(table, out_dir / "cases.csv")
    overlays = out_dir / "overlays"
    overlays.mkdir(exist_ok=True)
    for case in cases:
        case_paths = {m: paths.get((case.case_id, m)) for m in metrics}
        overlay_figure(case, case_paths, overlays / f"{case.case_id}.png")
    print((out_dir / "scores.csv").read_text().rstrip())
    return 0


def cmd_vesselness(args) -> int:
    config = _config_from_args(args)
    image = read_image_png(args.image)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .oof import oof_multiscale

    res = oof_multiscale(image, config.oof)
    write_image_png(out_dir / "vesselness.png", res.vesselness.values)
    if args.scale_map:
        write_image_png(out_dir / "scale.png", res.scale_map.values)
    if args.orientation:
        # tangent angle folded to [0, pi): sign-free like the frames
        angle = np.mod(np.arctan2(res.q1.y, res.q1.x), np.pi)
        write_image_png(out_dir / "orientation.png", angle)
    if args.gfld:
        write_gfld(
            out_dir / "vesselness.gfld",
            np.stack([
                res.vesselness.values,
                res.scale_map.values,
                res.q1.x,
                res.q1.y,
            ]),
        )
    print(json.dumps({
        "vesselness_max": float(res.vesselness.values.max()),
        "out": str(out_dir),
    }))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _config_from_args(args)
    app = create_app(config, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesselpath",
        description="Coherence-penalized minimal paths for vessel centerline extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract one centerline between two points")
    p.add_argument("--image", required=True, help="grayscale or RGB PNG")
    p.add_argument("--source", required=True, help="source point 'x,y'")
    p.add_argument("--end", required=True, help="end point 'x,y'")
    p.add_argument("--out", default="extract_out", help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("benchmark", help="score metric variants over annotated cases")
    p.add_argument("--cases", help="directory of <id>/{image.png, av.png, points.json}")
    p.add_argument("--phantoms", type=int, default=0,
                   help="run on N generated crossing phantoms instead")
    p.add_argument("--phantom-seed", type=int, default=7)
    p.add_argument("--save-cases", help="also write generated phantoms as case dirs")
    p.add_argument("--metrics", default=",".join(METRIC_KINDS))
    p.add_argument("--out", default="benchmark_out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("vesselness", help="write filter response maps")
    p.add_argument("--image", required=True)
    p.add_argument("--out", default="vesselness_out")
    p.add_argument("--gfld", action="store_true", help="also write the raw float sidecar")
    p.add_argument("--scale-map", action="store_true", help="also write the scale map PNG")
    p.add_argument("--orientation", action="store_true", help="also write the tangent angle PNG")
    _add_config_flags(p)
    p.set_defaults(func=cmd_vesselness)

    p = sub.add_parser("serve", help="run the extraction HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8389)
    p.add_argument("--static", default=None,
                   help="directory of built UI assets to serve at /")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("config", help="print the effective config as JSON")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: (print(emit_config(_config_from_args(a))), 0)[1])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VesselPathError as exc:
        body = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(body), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        body = {"error": "IOError", "message": str(exc)}
        print(json.dumps(body), file=sys.stderr)
        return IngestionError.exit_code


if __name__ == "__main__":
    sys.exit(main())
