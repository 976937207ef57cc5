"""Named analysis reports over a run directory: the glue between the CLI /
dashboard and the analysis ops. Each report emits JSON with a versioned
schema; tables can also export as CSV."""

from __future__ import annotations

import csv
import json
import os

from . import analysis
from .assets import load_environment
from .errors import AnalysisError
from .runio import load_manifest, load_records, load_uv_buffer, utc_now

REPORT_NAMES = (
    "accuracy_by",
    "boxplot",
    "matrix",
    "uv_heatmap",
    "consistency",
    "texture_alignment",
    "liquid_simplex",
    "background_complexity",
    "agreement",
)


def parse_report_spec(spec: str) -> tuple[str, str]:
    name, _, arg = spec.partition("=")
    if name not in REPORT_NAMES:
        raise AnalysisError(
            f"unknown report {name!r}; available: {', '.join(REPORT_NAMES)}"
        )
    return name, arg


def run_report(run_dir: str, spec: str) -> dict:
    name, arg = parse_report_spec(spec)
    manifest = load_manifest(run_dir)
    records = load_records(run_dir)
    data = _dispatch(name, arg, run_dir, manifest, records)
    return {
        "schema_version": analysis.REPORT_SCHEMA_VERSION,
        "report": name,
        "arg": arg,
        "run": os.path.basename(os.path.abspath(run_dir)),
        "generated_at": utc_now(),
        "data": data,
    }


def _dimension_names(manifest) -> list[str]:
    return [
        f"{d['control']}.{d['param']}"
        for d in manifest.search_space.get("dimensions", [])
    ]


def _dispatch(name, arg, run_dir, manifest, records):
    if name == "accuracy_by":
        keys = [k.strip() for k in arg.split(",") if k.strip()]
        if not keys:
            raise AnalysisError(
                "accuracy_by needs group keys, e.g. --report accuracy_by=mesh"
            )
        return analysis.accuracy_by(records, keys)

    if name == "boxplot":
        keys = [k.strip() for k in arg.split(",") if k.strip()]
        if len(keys) != 2:
            raise AnalysisError(
                "boxplot needs axis and spread keys, e.g. "
                "--report boxplot=environment,mesh"
            )
        return analysis.boxplot_accuracy(records, keys[0], keys[1])

    if name == "matrix":
        keys = [k.strip() for k in arg.split(",") if k.strip()]
        if len(keys) != 2:
            raise AnalysisError(
                "matrix needs two parameter keys, e.g. "
                "--report matrix=orientation.yaw,environment"
            )
        return analysis.matrix_by_two_params(records, keys[0], keys[1])

    if name == "uv_heatmap":
        grid = int(arg) if arg else 64
        with_buffers = [r for r in records if (r.get("buffers") or {}).get("uv")]
        if not with_buffers:
            raise AnalysisError(
                "no saved uv buffers in this run; rerun with "
                "render.save_buffers: [uv] to enable accuracy heatmaps"
            )
        grid_result = analysis.uv_heatmap(
            records, lambda r: load_uv_buffer(run_dir, r), grid=grid
        )
        return grid_result.to_json()

    if name == "consistency":
        sweep = [k.strip() for k in arg.split("+") if k.strip()]
        if not sweep:
            raise AnalysisError(
                "consistency needs a sweep key, e.g. --report "
                "consistency=liquid_fill.water+liquid_fill.milk+liquid_fill.coffee"
            )
        viewpoint_keys = ["mesh", "environment"] + [
            d for d in _dimension_names(manifest) if d not in sweep
        ]
        return analysis.prediction_consistency(
            records, sweep if len(sweep) > 1 else sweep[0], viewpoint_keys
        )

    if name == "texture_alignment":
        key = arg or "texture_swap.texture"
        return analysis.texture_shape_alignment(records, texture_key=key)

    if name == "liquid_simplex":
        return analysis.liquid_simplex_summary(records)

    if name == "background_complexity":
        rows = []
        accuracy = {
            row["group"]["environment"]: row
            for row in analysis.accuracy_by(records, ["environment"])
        }
        for entry in manifest.config.get("assets", {}).get("environments", []):
            env = load_environment(
                entry.get("path") or tuple(entry["color"]), name=entry["name"],
                ambient_scale=entry.get("ambient_scale", 1.0),
            )
            image = env.image if env.image is not None else _flat(env.color)
            row = {
                "environment": env.name,
                "complexity": analysis.background_complexity(image),
            }
            if env.name in accuracy:
                row["accuracy"] = accuracy[env.name]["accuracy"]
                row["n"] = accuracy[env.name]["n"]
            rows.append(row)
        return rows

    if name == "agreement":
        if not arg:
            raise AnalysisError(
                "agreement needs a path to the paired records, e.g. "
                "--report agreement=real/results.jsonl"
            )
        real = []
        with open(arg, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    real.append(json.loads(line))
        return analysis.agreement(records, real).to_json()

    raise AnalysisError(f"unknown report {name!r}")


def _flat(color):
    import numpy as np

    out = np.empty((8, 16, 3), dtype=np.float32)
    out[:] = color
    return out


def write_report_json(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def export_csv(report: dict, path: str) -> None:
    """Tabular reports (accuracy_by, matrix, background_complexity) as CSV."""
    data = report["data"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if report["report"] == "accuracy_by":
            keys = list(data[0]["group"]) if data else []
            writer.writerow(keys + ["accuracy", "correct", "n"])
            for row in data:
                writer.writerow([row["group"][k] for k in keys]
                                + [row["accuracy"], row["correct"], row["n"]])
        elif report["report"] == "matrix":
            writer.writerow([f"{data['y_key']}\\{data['x_key']}"]
                            + [str(v) for v in data["x_values"]])
            for y_value, row in zip(data["y_values"], data["cells"]):
                writer.writerow([y_value] + [
                    "" if cell["accuracy"] is None else cell["accuracy"]
                    for cell in row
                ])
        elif report["report"] == "background_complexity":
            writer.writerow(["environment", "complexity", "accuracy", "n"])
            for row in data:
                writer.writerow([row["environment"], row["complexity"],
                                 row.get("accuracy", ""), row.get("n", "")])
        else:
            raise AnalysisError(
                f"report {report['report']!r} has no CSV form; use JSON"
            )
