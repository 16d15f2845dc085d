"""Benchmark reporting: delimited scores, a markdown table and per-case
overlay figures rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import PatchCase, ScoreTable

METRIC_COLORS = {"IR": "tab:orange", "ArR": "tab:red", "proposed": "tab:cyan"}
STAT_ROWS = ("avg", "max", "min", "std")


def write_scores_csv(table: ScoreTable, path) -> None:
    stats = table.stats()
    lines = ["dataset,metric,avg,max,min,std"]
    for (dataset, metric), s in sorted(stats.items()):
        lines.append(
            f"{dataset},{metric},{s['avg']:.6f},{s['max']:.6f},{s['min']:.6f},{s['std']:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_scores_markdown(table: ScoreTable, path) -> None:
    """Stats laid out like the comparison table: one row block per
    dataset with Avg/Max/Min/Std lines, one column per metric."""
    stats = table.stats()
    datasets = sorted({d for d, _ in stats})
    metrics = [m for m in table.metrics if any((d, m) in stats for d in datasets)]
    lines = []
    header = "| dataset | stat | " + " | ".join(metrics) + " |"
    sep = "|---" * (len(metrics) + 2) + "|"
    lines.append(header)
    lines.append(sep)
    for dataset in datasets:
        for stat in STAT_ROWS:
            cells = []
            for m in metrics:
                s = stats.get((dataset, m))
                cells.append(f"{s[stat]:.2f}" if s else "-")
            label = dataset if stat == "avg" else ""
            lines.append(f"| {label} | {stat.capitalize()}. | " + " | ".join(cells) + " |")
    Path(path).write_text("\n".join(lines) + "\n")


def write_case_report_csv(table: ScoreTable, path) -> None:
    lines = ["dataset,case,metric,theta,error"]
    for r in table.rows:
        err = (r.error or "").replace(",", ";").replace("\n", " ")
        lines.append(f"{r.dataset},{r.case_id},{r.metric},{r.theta:.6f},{err}")
    Path(path).write_text("\n".join(lines) + "\n")


def overlay_figure(case: PatchCase, paths: dict, out_path) -> None:
    """Draw extracted paths over the patch with the ground truth tinted
    (artery red, vein blue, overlap green) and save as PNG."""
    h, w = case.image.spec.shape
    rgb = np.repeat(case.image.values[..., None], 3, axis=2)
    tint = np.zeros_like(rgb)
    tint[case.artery_mask] = (1.0, 0.15, 0.15)
    tint[case.vein_mask] = (0.15, 0.15, 1.0)
    tint[case.overlap_mask] = (0.15, 1.0, 0.15)
    tinted = np.clip(0.75 * rgb + 0.25 * tint, 0, 1)

    fig, ax = plt.subplots(figsize=(4.5, 4.5 * h / w))
    ax.imshow(tinted, origin="upper", interpolation="nearest")
    for metric, path in paths.items():
        if path is None:
            continue
        ax.plot(
            path.points[:, 0],
            path.points[:, 1],
            color=METRIC_COLORS.get(metric, "white"),
            linewidth=1.4,
            label=metric,
        )
    ax.plot(*case.source, marker="o", color="blue", markersize=5)
    ax.plot(*case.end, marker="o", color="green", markersize=5)
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.set_axis_off()
    if paths:
        ax.legend(loc="lower right", fontsize=7, framealpha=0.6)
    fig.tight_layout(pad=0.1)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def extraction_overlay(image_values: np.ndarray, path_points: np.ndarray, source, end, out_path) -> None:
    """Single-extraction overlay written by the CLI extract command."""
    h, w = image_values.shape
    fig, ax = plt.subplots(figsize=(4.5, 4.5 * h / w))
    ax.imshow(image_values, cmap="gray", origin="upper", interpolation="nearest")
    if path_points.shape[0] > 1:
        ax.plot(path_points[:, 0], path_points[:, 1], color="tab:cyan", linewidth=1.4)
    ax.plot(source[0], source[1], marker="o", color="blue", markersize=5)
    ax.plot(end[0], end[1], marker="o", color="green", markersize=5)
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.set_axis_off()
    fig.tight_layout(pad=0.1)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
