"""Aggregations over a run's log records (plus optional saved buffers).

All analyses are pure functions of the log: rerunning on the same inputs is
bit-identical, and nothing here renders plots (the dashboard visualizes;
these ops emit data for it and for the CLI's JSON/CSV reports).

Record value keys: "mesh" and "environment" address those record fields,
anything else ("control.param") addresses the expanded raw values of a
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import AnalysisError

REPORT_SCHEMA_VERSION = 1


def record_value(record: dict, key: str):
    if key == "mesh":
        return record["mesh"]
    if key == "environment":
        return record["environment"]
    values = record.get("values", {})
    if key not in values:
        raise AnalysisError(f"record {record.get('id')} has no value for {key!r}")
    return values[key]


def bin_label(edges, value) -> str | None:
    """Half-open [e_i, e_{i+1}) bins, last bin closed; outside -> None."""
    if value < edges[0] or value > edges[-1]:
        return None
    idx = min(int(np.digitize(value, edges)) - 1, len(edges) - 2)
    idx = max(idx, 0)
    return f"[{edges[idx]:g}, {edges[idx + 1]:g})"


def _group_value(record, key, bins):
    value = record_value(record, key)
    if bins and key in bins:
        return bin_label(bins[key], value)
    return value


def _sort_axis(values):
    try:
        return sorted(values)
    except TypeError:
        return sorted(values, key=str)


# ---------------------------------------------------------------------------
# accuracy tables


def accuracy_by(records, group_keys, bins=None) -> list[dict]:
    """Accuracy and count per group; groups partition the records (rows sum
    to the input size, minus records falling outside configured bins)."""
    groups = {}
    for record in records:
        key = tuple(_group_value(record, k, bins) for k in group_keys)
        if any(v is None for v in key):
            continue
        correct, n = groups.get(key, (0, 0))
        groups[key] = (correct + bool(record.get("is_correct")), n + 1)
    rows = []
    for key in _sort_axis(groups):
        correct, n = groups[key]
        rows.append({
            "group": dict(zip(group_keys, key)),
            "accuracy": correct / n,
            "correct": correct,
            "n": n,
        })
    return rows


def matrix_by_two_params(records, key_a, key_b, bins=None) -> dict:
    """Accuracy over the cross product of two parameters' observed values.
    Empty cells carry n=0 and accuracy null: explicitly distinct from an
    all-incorrect cell."""
    bins = bins or {}
    pairs = {}
    a_values, b_values = set(), set()
    for record in records:
        va = _group_value(record, key_a, bins)
        vb = _group_value(record, key_b, bins)
        if va is None or vb is None:
            continue
        a_values.add(va)
        b_values.add(vb)
        correct, n = pairs.get((va, vb), (0, 0))
        pairs[(va, vb)] = (correct + bool(record.get("is_correct")), n + 1)
    a_axis = _sort_axis(a_values)
    b_axis = _sort_axis(b_values)
    cells = []
    for vb in b_axis:
        row = []
        for va in a_axis:
            correct, n = pairs.get((va, vb), (0, 0))
            row.append({
                "accuracy": (correct / n) if n else None,
                "correct": correct,
                "n": n,
            })
        cells.append(row)
    return {
        "x_key": key_a, "y_key": key_b,
        "x_values": list(a_axis), "y_values": list(b_axis),
        "cells": cells,
    }


# ---------------------------------------------------------------------------
# boxplot


@dataclass(frozen=True)
class BoxplotSummary:
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple

    def to_json(self) -> dict:
        return {
            "median": self.median, "q1": self.q1, "q3": self.q3,
            "iqr": self.iqr, "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi, "outliers": list(self.outliers),
        }


def boxplot(values, fence_from: str = "quartiles") -> BoxplotSummary:
    """Quartiles by linear interpolation on the sorted sample (the inclusive
    convention); outliers are the points beyond the quartile edges by
    1.5*IQR, whiskers the extreme values still inside the fences.

    ``fence_from="median"`` measures the fences from the median instead, a
    nonstandard alternate reading kept behind this flag.
    """
    data = np.asarray(sorted(values), dtype=np.float64)
    if data.size == 0:
        raise AnalysisError("boxplot of an empty sample")
    q1, median, q3 = np.percentile(data, [25, 50, 75], method="linear")
    iqr = q3 - q1
    if fence_from == "quartiles":
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    elif fence_from == "median":
        lo_fence, hi_fence = median - 1.5 * iqr, median + 1.5 * iqr
    else:
        raise AnalysisError(f"unknown fence_from {fence_from!r}")
    inside = data[(data >= lo_fence) & (data <= hi_fence)]
    outliers = data[(data < lo_fence) | (data > hi_fence)]
    whisker_lo = float(inside.min()) if inside.size else float(q1)
    whisker_hi = float(inside.max()) if inside.size else float(q3)
    return BoxplotSummary(
        median=float(median), q1=float(q1), q3=float(q3), iqr=float(iqr),
        whisker_lo=whisker_lo, whisker_hi=whisker_hi,
        outliers=tuple(float(v) for v in outliers),
    )


def boxplot_accuracy(records, axis_key, spread_key, bins=None,
                     fence_from: str = "quartiles") -> list[dict]:
    """Per axis value, the spread of accuracies across the other key (e.g.
    per environment, the accuracy variation over meshes)."""
    rows = accuracy_by(records, [axis_key, spread_key], bins=bins)
    by_axis = {}
    for row in rows:
        by_axis.setdefault(row["group"][axis_key], []).append(row["accuracy"])
    return [
        {axis_key: axis, "n_groups": len(values),
         "boxplot": boxplot(values, fence_from=fence_from).to_json()}
        for axis, values in ((k, by_axis[k]) for k in _sort_axis(by_axis))
    ]


# ---------------------------------------------------------------------------
# background complexity

def background_complexity(image, edge_filter: str = "difference") -> float:
    """Mean edge-filter gradient magnitude of the grayscale image, scaled to
    [0, 1]; constant images score exactly 0.

    The default filter is the first-difference gradient, which responds to
    single-pixel alternation. A 3x3 Sobel is available as ``"sobel"`` but
    note its column profile [-1, 0, 1] cancels values two pixels apart, so
    it is blind to period-2 patterns like a 1-px checkerboard.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        gray = img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114
    else:
        gray = img
    if edge_filter == "difference":
        gx = np.diff(gray, axis=1, append=gray[:, -1:])
        gy = np.diff(gray, axis=0, append=gray[-1:, :])
        norm = math.sqrt(2.0)
    elif edge_filter == "sobel":
        smooth = [1.0, 2.0, 1.0]
        diff = [-1.0, 0.0, 1.0]
        gx = ndimage.correlate1d(
            ndimage.correlate1d(gray, smooth, axis=0, mode="reflect"),
            diff, axis=1, mode="reflect")
        gy = ndimage.correlate1d(
            ndimage.correlate1d(gray, smooth, axis=1, mode="reflect"),
            diff, axis=0, mode="reflect")
        norm = 4.0 * math.sqrt(2.0)
    else:
        raise AnalysisError(f"unknown edge filter {edge_filter!r}")
    magnitude = np.sqrt(gx * gx + gy * gy)
    return float(magnitude.mean() / norm)


# ---------------------------------------------------------------------------
# UV accuracy heatmap


@dataclass
class HeatmapGrid:
    """g x g counters over UV space; visible counts one per render (a cell
    is visible in a render when at least one pixel maps into it)."""

    grid: int
    visible: np.ndarray  # (g, g) int64, indexed [u_bin, v_bin]
    correct: np.ndarray
    skipped: int = 0

    def accuracy(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.visible > 0, self.correct / self.visible, np.nan)

    def to_json(self) -> dict:
        acc = self.accuracy()
        return {
            "grid": self.grid,
            "visible": self.visible.tolist(),
            "correct": self.correct.tolist(),
            "accuracy": [[None if math.isnan(a) else a for a in row]
                         for row in acc.tolist()],
            "skipped": self.skipped,
        }


def uv_cells_touched(uv_buffer: np.ndarray, grid: int) -> set:
    """Distinct (u_bin, v_bin) cells covered by a render's object pixels."""
    object_mask = uv_buffer[:, :, 2] != -1.0
    if not object_mask.any():
        return set()
    u = uv_buffer[:, :, 0][object_mask]
    v = uv_buffer[:, :, 1][object_mask]
    iu = np.minimum((u * grid).astype(np.int64), grid - 1)
    iv = np.minimum((v * grid).astype(np.int64), grid - 1)
    return set(zip(iu.tolist(), iv.tolist()))


def uv_heatmap(records, uv_loader, grid: int = 64) -> HeatmapGrid:
    """Accuracy conditioned on each surface cell being visible. Counters
    increment once per render, not per pixel; records without a stored uv
    buffer are skipped (and counted)."""
    visible = np.zeros((grid, grid), dtype=np.int64)
    correct = np.zeros((grid, grid), dtype=np.int64)
    skipped = 0
    for record in records:
        buffer = uv_loader(record)
        if buffer is None:
            skipped += 1
            continue
        cells = uv_cells_touched(np.asarray(buffer), grid)
        hit = bool(record.get("is_correct"))
        for iu, iv in cells:
            visible[iu, iv] += 1
            if hit:
                correct[iu, iv] += 1
    return HeatmapGrid(grid=grid, visible=visible, correct=correct,
                       skipped=skipped)


# ---------------------------------------------------------------------------
# prediction consistency


def _top1(record):
    prediction = record.get("prediction") or {}
    return prediction.get("top1_label", prediction.get("top1"))


def prediction_consistency(records, sweep_key, viewpoint_keys) -> dict:
    """Fraction of viewpoints whose top-1 prediction is identical across the
    whole sweep; viewpoints with a single sweep value are excluded and
    counted separately. ``sweep_key`` may be a list of keys swept jointly
    (e.g. the three liquid ratios)."""
    sweep_keys = [sweep_key] if isinstance(sweep_key, str) else list(sweep_key)
    viewpoints = {}
    for record in records:
        vp = tuple(record_value(record, k) for k in viewpoint_keys)
        viewpoints.setdefault(vp, []).append(record)
    stable = eligible = excluded = 0
    per_viewpoint = []
    for vp in _sort_axis(viewpoints):
        group = viewpoints[vp]
        sweep_values = {tuple(record_value(r, k) for k in sweep_keys)
                        for r in group}
        if len(sweep_values) < 2:
            excluded += 1
            continue
        eligible += 1
        predictions = {_top1(r) for r in group}
        is_stable = len(predictions) == 1
        stable += is_stable
        per_viewpoint.append({
            "viewpoint": dict(zip(viewpoint_keys, vp)),
            "stable": is_stable,
            "n": len(group),
        })
    if eligible == 0:
        raise AnalysisError("no viewpoint has at least 2 sweep values")
    return {
        "fraction_stable": stable / eligible,
        "stable": stable,
        "eligible": eligible,
        "excluded": excluded,
        "per_viewpoint": per_viewpoint,
    }


# ---------------------------------------------------------------------------
# texture/shape alignment


def texture_shape_alignment(records, texture_key: str = "texture_swap.texture",
                            original_value: str = "original") -> dict:
    """Restricted to viewpoints classified correctly under the original
    texture: post-swap accuracy (and its drop from the all-correct baseline)
    plus most-frequent predicted classes per texture (over objects) and per
    object (over textures)."""
    baseline = {}
    swapped = []
    for record in records:
        texture = record_value(record, texture_key)
        viewpoint = _viewpoint_key(record, exclude=(texture_key,))
        if texture == original_value:
            baseline[viewpoint] = bool(record.get("is_correct"))
        else:
            swapped.append((viewpoint, texture, record))

    missing_baseline = 0
    per_texture: dict = {}
    per_object: dict = {}
    total_correct = total_n = 0
    for viewpoint, texture, record in swapped:
        if viewpoint not in baseline:
            missing_baseline += 1
            continue
        if not baseline[viewpoint]:
            continue  # restriction: originally-correct viewpoints only
        hit = bool(record.get("is_correct"))
        label = _top1(record)
        mesh = record["mesh"]
        t = per_texture.setdefault(texture, {"correct": 0, "n": 0,
                                             "top_predictions": {}})
        t["correct"] += hit
        t["n"] += 1
        t["top_predictions"][label] = t["top_predictions"].get(label, 0) + 1
        o = per_object.setdefault(mesh, {"correct": 0, "n": 0,
                                         "top_predictions": {}})
        o["correct"] += hit
        o["n"] += 1
        o["top_predictions"][label] = o["top_predictions"].get(label, 0) + 1
        total_correct += hit
        total_n += 1

    if total_n == 0:
        raise AnalysisError(
            "no swapped-texture records at originally-correct viewpoints"
        )
    for table in (per_texture, per_object):
        for entry in table.values():
            entry["accuracy"] = entry["correct"] / entry["n"]
    accuracy = total_correct / total_n
    return {
        "post_swap_accuracy": accuracy,
        "accuracy_drop": 1.0 - accuracy,  # baseline accuracy is 1 by restriction
        "n": total_n,
        "missing_baseline": missing_baseline,
        "per_texture": {k: per_texture[k] for k in _sort_axis(per_texture)},
        "per_object": {k: per_object[k] for k in _sort_axis(per_object)},
    }


def _viewpoint_key(record, exclude=()):
    values = record.get("values", {})
    keys = tuple(sorted(k for k in values if k not in exclude))
    return (record["mesh"], record["environment"],
            tuple((k, values[k]) for k in keys))


# ---------------------------------------------------------------------------
# sim/real agreement


@dataclass(frozen=True)
class AgreementReport:
    agreement: float
    ppv: float | None  # P(real correct | sim correct); None when undefined
    npv: float | None  # P(real incorrect | sim incorrect)
    n: int
    table: dict = field(default_factory=dict)  # 2x2 counts
    per_object: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "agreement": self.agreement, "ppv": self.ppv, "npv": self.npv,
            "n": self.n, "table": self.table, "per_object": self.per_object,
        }


def _agreement_counts(pairs):
    a = sum(1 for s, r in pairs if s and r)  # both correct
    b = sum(1 for s, r in pairs if s and not r)
    c = sum(1 for s, r in pairs if not s and r)
    d = sum(1 for s, r in pairs if not s and not r)  # both incorrect
    n = a + b + c + d
    return {
        "agreement": (a + d) / n,
        "ppv": a / (a + b) if (a + b) else None,
        "npv": d / (c + d) if (c + d) else None,
        "n": n,
        "table": {"both_correct": a, "sim_only": b, "real_only": c,
                  "both_incorrect": d},
    }


def agreement(sim_records, real_records) -> AgreementReport:
    """Correctness agreement between two evaluation settings matched by
    configuration id: agreement rate plus positive/negative predictive
    value; degenerate columns report as not-applicable (null)."""
    sim = {r["id"]: bool(r.get("is_correct")) for r in sim_records}
    real = {r["id"]: bool(r.get("is_correct")) for r in real_records}
    unmatched = sorted(set(sim) ^ set(real))
    if unmatched:
        raise AnalysisError(f"unmatched configuration ids: {unmatched}")
    if not sim:
        raise AnalysisError("agreement over an empty id set")
    mesh_of = {r["id"]: r.get("mesh") for r in sim_records}
    pairs = [(sim[i], real[i]) for i in sorted(sim)]
    overall = _agreement_counts(pairs)
    per_object = {}
    by_mesh: dict = {}
    for i in sorted(sim):
        by_mesh.setdefault(mesh_of[i], []).append((sim[i], real[i]))
    for mesh in _sort_axis(by_mesh):
        if mesh is None:
            continue
        per_object[mesh] = _agreement_counts(by_mesh[mesh])
    return AgreementReport(per_object=per_object, **overall)


# ---------------------------------------------------------------------------
# liquid mixture summary


LIQUID_RATIO_KEYS = ("liquid_fill.water", "liquid_fill.milk", "liquid_fill.coffee")


def liquid_simplex_summary(records, ratio_keys=LIQUID_RATIO_KEYS,
                           decimals: int = 6) -> dict:
    """Top-prediction distribution per liquid-mixture point, in raw counts
    and with per-class column normalization (each class column sums to 1)."""
    raw: dict = {}
    classes = set()
    for record in records:
        ratios = np.asarray([record_value(record, k) for k in ratio_keys],
                            dtype=np.float64)
        total = ratios.sum()
        if total <= 0:
            raise AnalysisError(f"record {record['id']}: liquid ratios sum to 0")
        ratios = np.round(ratios / total, decimals)
        label = "w={:.3f}|m={:.3f}|c={:.3f}".format(*ratios)
        prediction = _top1(record)
        classes.add(prediction)
        row = raw.setdefault(label, {})
        row[prediction] = row.get(prediction, 0) + 1
    mixtures = _sort_axis(raw)
    classes = _sort_axis(classes)
    class_totals = {
        c: sum(raw[m].get(c, 0) for m in mixtures) for c in classes
    }
    normalized = {
        m: {c: (raw[m].get(c, 0) / class_totals[c]) if class_totals[c] else 0.0
            for c in classes}
        for m in mixtures
    }
    return {
        "mixtures": list(mixtures),
        "classes": list(classes),
        "raw": {m: dict(raw[m]) for m in mixtures},
        "normalized": normalized,
    }
