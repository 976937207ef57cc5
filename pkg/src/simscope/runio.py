"""Run directory layout: append-only ``results.jsonl`` (one record per
completed or errored configuration, flushed per record so every prefix is
valid JSON-lines), ``manifest.json`` written at shutdown, and optional
``buffers/{id}/`` files (rgb.png, uv.npy, depth.npy, seg.npy).

A log record is replayable into every analysis with no other inputs: it
carries the fully expanded raw parameter values alongside the prediction
summary and correctness.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import AnalysisError

RESULTS_FILE = "results.jsonl"
MANIFEST_FILE = "manifest.json"
BUFFERS_DIR = "buffers"

# fields excluded when comparing logs for determinism (scheduling noise)
VOLATILE_RECORD_FIELDS = ("timing", "worker")


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    asset_checksums: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str | None = None
    scheduled: int = 0
    completed: int = 0
    errored: int = 0
    pending: int = 0
    search_space: dict = field(default_factory=dict)
    instances: list = field(default_factory=list)
    throughput: dict = field(default_factory=dict)
    workers: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def validate_totals(self) -> None:
        if self.scheduled != self.completed + self.errored + self.pending:
            raise AnalysisError(
                f"manifest totals inconsistent: scheduled={self.scheduled} != "
                f"completed={self.completed} + errored={self.errored} + "
                f"pending={self.pending}"
            )

    @property
    def exit_code(self) -> int:
        return 0 if self.errored == 0 and self.pending == 0 else 2

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "asset_checksums": self.asset_checksums,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "totals": {
                "scheduled": self.scheduled,
                "completed": self.completed,
                "errored": self.errored,
                "pending": self.pending,
            },
            "search_space": self.search_space,
            "instances": self.instances,
            "throughput": self.throughput,
            "workers": self.workers,
            "stats": self.stats,
            "config": self.config,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        totals = data.get("totals", {})
        return cls(
            experiment=data.get("experiment", ""),
            config_hash=data.get("config_hash", ""),
            asset_checksums=data.get("asset_checksums", {}),
            started_at=data.get("started_at", ""),
            finished_at=data.get("finished_at"),
            scheduled=totals.get("scheduled", 0),
            completed=totals.get("completed", 0),
            errored=totals.get("errored", 0),
            pending=totals.get("pending", 0),
            search_space=data.get("search_space", {}),
            instances=data.get("instances", []),
            throughput=data.get("throughput", {}),
            workers=data.get("workers", []),
            stats=data.get("stats", {}),
            config=data.get("config", {}),
        )


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunWriter:
    """Append-only record log plus buffer files for one run directory."""

    def __init__(self, run_dir: str):
        self.run_dir = str(run_dir)
        os.makedirs(self.run_dir, exist_ok=True)
        self._log = open(os.path.join(self.run_dir, RESULTS_FILE), "w",
                         encoding="utf-8")

    def write_record(self, record: dict) -> None:
        # one line per configuration, flushed immediately: a crashed run
        # leaves a readable log prefix
        self._log.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._log.flush()

    def save_buffers(self, configuration_id: int, encoded: dict) -> dict:
        """Persist wire-encoded buffers; returns run-dir-relative paths."""
        from .protocol import decode_buffer

        base = os.path.join(BUFFERS_DIR, str(configuration_id))
        os.makedirs(os.path.join(self.run_dir, base), exist_ok=True)
        paths = {}
        for name, entry in encoded.items():
            if entry["encoding"] == "png":
                rel = f"{base}/rgb.png"
                with open(os.path.join(self.run_dir, rel), "wb") as f:
                    f.write(__import__("base64").b64decode(entry["data"]))
            else:
                short = {"rgb": "rgb", "uv": "uv", "depth": "depth",
                         "segmentation": "seg"}.get(name, name)
                rel = f"{base}/{short}.npy"
                np.save(os.path.join(self.run_dir, rel), decode_buffer(entry))
            paths[name] = rel
        return paths

    def write_manifest(self, manifest: RunManifest) -> None:
        path = os.path.join(self.run_dir, MANIFEST_FILE)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest.to_json(), f, indent=2, sort_keys=True)

    def close(self) -> None:
        self._log.close()


def load_manifest(run_dir: str) -> RunManifest:
    path = os.path.join(run_dir, MANIFEST_FILE)
    if not os.path.isfile(path):
        raise AnalysisError(f"no {MANIFEST_FILE} in {run_dir}")
    with open(path, "r", encoding="utf-8") as f:
        return RunManifest.from_json(json.load(f))


def load_records(run_dir: str, statuses=("ok",)) -> list[dict]:
    """Read results.jsonl; by default only completed (non-errored) records,
    which is what every analysis precondition asks for."""
    path = os.path.join(run_dir, RESULTS_FILE)
    if not os.path.isfile(path):
        raise AnalysisError(f"no {RESULTS_FILE} in {run_dir}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if statuses is None or record.get("status") in statuses:
                records.append(record)
    return records


def load_uv_buffer(run_dir: str, record: dict) -> np.ndarray | None:
    rel = (record.get("buffers") or {}).get("uv")
    if rel is None:
        return None
    path = os.path.join(run_dir, rel)
    if not os.path.isfile(path):
        return None
    return np.load(path)


def canonical_record(record: dict) -> dict:
    """Scheduling-independent view of a record: volatile fields dropped."""
    return {k: v for k, v in record.items() if k not in VOLATILE_RECORD_FIELDS}


def canonical_log(records: list[dict]) -> str:
    """Id-sorted, volatile-field-free serialization; two fault-free runs of
    the same seeded experiment compare byte-equal under this view."""
    ordered = sorted((canonical_record(r) for r in records), key=lambda r: r["id"])
    out = io.StringIO()
    for record in ordered:
        out.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
        out.write("\n")
    return out.getvalue()
