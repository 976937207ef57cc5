"""Read-only HTTP API over run outputs, feeding the exploration UI.

Every response is a deterministic pure view of the run files. For each
search-space parameter the client picks a mode: heat-map axis (the ``x``
and ``y`` query params, exactly two distinct ones), slider (a query param
named after the parameter, selecting exact-match records), or aggregate
(simply not mentioned). The heatmap endpoint returns byte-for-byte the
offline matrix analysis applied to the slider-filtered records.
"""

from __future__ import annotations

import os
from functools import lru_cache

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse

from .analysis import matrix_by_two_params, record_value
from .errors import AnalysisError
from .runio import MANIFEST_FILE, load_manifest, load_records

RECORD_FIELD_PARAMS = ("mesh", "environment")
_RESERVED_QUERY_KEYS = {"run", "x", "y", "cell"}


class RunStore:
    """Discovers run directories under a data dir (or a single run dir) and
    caches their parsed logs. Runs are immutable once written."""

    def __init__(self, data_dir: str):
        self.data_dir = os.path.abspath(data_dir)

    def run_names(self) -> list[str]:
        if os.path.isfile(os.path.join(self.data_dir, MANIFEST_FILE)):
            return [os.path.basename(self.data_dir)]
        names = []
        for entry in sorted(os.listdir(self.data_dir)):
            if os.path.isfile(os.path.join(self.data_dir, entry, MANIFEST_FILE)):
                names.append(entry)
        return names

    def run_dir(self, run: str) -> str:
        if os.path.basename(self.data_dir) == run and os.path.isfile(
                os.path.join(self.data_dir, MANIFEST_FILE)):
            return self.data_dir
        candidate = os.path.join(self.data_dir, run)
        if not os.path.isfile(os.path.join(candidate, MANIFEST_FILE)):
            raise HTTPException(status_code=404, detail=f"unknown run {run!r}")
        return candidate

    @lru_cache(maxsize=16)
    def _load(self, run: str):
        run_dir = self.run_dir(run)
        return load_manifest(run_dir), load_records(run_dir)

    def manifest(self, run: str):
        return self._load(run)[0]

    def records(self, run: str):
        return self._load(run)[1]

    def params(self, run: str) -> list[dict]:
        """Search-space dimensions plus the mesh/environment record fields
        (usable as axes and sliders like any other parameter)."""
        manifest, records = self._load(run)
        params = []
        for dim in manifest.search_space.get("dimensions", []):
            entry = {
                "name": f"{dim['control']}.{dim['param']}",
                "kind": dim["kind"],
                "record_field": False,
            }
            if dim["kind"] == "continuous":
                entry["lo"], entry["hi"] = dim["lo"], dim["hi"]
                entry["values"] = sorted(
                    {record_value(r, entry["name"]) for r in records}
                )
            else:
                entry["values"] = list(dim.get("values") or [])
            params.append(entry)
        for name in RECORD_FIELD_PARAMS:
            params.append({
                "name": name,
                "kind": "discrete",
                "record_field": True,
                "values": sorted({record_value(r, name) for r in records}),
            })
        return params


def _parse_sliders(request: Request, params_by_name: dict) -> dict:
    sliders = {}
    for key, raw in request.query_params.items():
        if key in _RESERVED_QUERY_KEYS:
            continue
        if key not in params_by_name:
            raise HTTPException(
                status_code=400,
                detail=f"unknown parameter {key!r} in filter query",
            )
        param = params_by_name[key]
        if param["kind"] == "continuous":
            try:
                value = float(raw)
            except ValueError:
                raise HTTPException(
                    status_code=400,
                    detail=f"slider {key!r}: {raw!r} is not a number",
                ) from None
            if not param["lo"] <= value <= param["hi"]:
                raise HTTPException(
                    status_code=400,
                    detail=f"slider {key!r}: {value} outside "
                           f"[{param['lo']}, {param['hi']}]",
                )
        else:
            value = raw
            if param["values"] and raw not in [str(v) for v in param["values"]]:
                raise HTTPException(
                    status_code=400,
                    detail=f"slider {key!r}: {raw!r} not among {param['values']}",
                )
        sliders[key] = value
    return sliders


def _slider_match(record, key, value) -> bool:
    actual = record_value(record, key)
    if isinstance(value, float):
        return float(actual) == value
    return str(actual) == str(value)


def _filtered_records(store: RunStore, run: str, sliders: dict) -> list[dict]:
    records = store.records(run)
    for key, value in sliders.items():
        records = [r for r in records if _slider_match(r, key, value)]
    return records


def create_app(data_dir: str, ui_dir: str | None = None) -> FastAPI:
    store = RunStore(data_dir)
    app = FastAPI(title="simscope dashboard api")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"],
        allow_headers=["*"],
    )

    @lru_cache(maxsize=128)
    def cached_matrix(run: str, x: str, y: str, slider_items: tuple):
        records = _filtered_records(store, run, dict(slider_items))
        return matrix_by_two_params(records, x, y)

    @app.get("/api/experiments")
    def experiments():
        out = []
        for name in store.run_names():
            manifest = store.manifest(name)
            entry = manifest.to_json()
            entry["run"] = name
            out.append(entry)
        return out

    @app.get("/api/params")
    def params(run: str):
        return {"run": run, "params": store.params(run)}

    @app.get("/api/heatmap")
    def heatmap(request: Request, run: str, x: str | None = None,
                y: str | None = None):
        if not x or not y:
            raise HTTPException(status_code=400,
                                detail="exactly two axis parameters (x, y) required")
        params_by_name = {p["name"]: p for p in store.params(run)}
        if x not in params_by_name or y not in params_by_name:
            raise HTTPException(status_code=400,
                                detail="axis parameters must exist in the run")
        if x == y:
            raise HTTPException(status_code=400,
                                detail="x and y must be two distinct parameters")
        sliders = _parse_sliders(request, params_by_name)
        if x in sliders or y in sliders:
            raise HTTPException(status_code=400,
                                detail="a parameter cannot be both axis and slider")
        try:
            return JSONResponse(
                cached_matrix(run, x, y, tuple(sorted(sliders.items())))
            )
        except AnalysisError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/api/records")
    def cell_records(request: Request, run: str, x: str | None = None,
                     y: str | None = None, cell: str | None = None):
        if not x or not y or cell is None:
            raise HTTPException(status_code=400,
                                detail="x, y and cell=i,j are required")
        params_by_name = {p["name"]: p for p in store.params(run)}
        if x not in params_by_name or y not in params_by_name or x == y:
            raise HTTPException(status_code=400, detail="bad axis parameters")
        sliders = _parse_sliders(request, params_by_name)
        records = _filtered_records(store, run, sliders)
        matrix = matrix_by_two_params(records, x, y)
        try:
            i, j = (int(v) for v in cell.split(","))
            x_value = matrix["x_values"][i]
            y_value = matrix["y_values"][j]
        except (ValueError, IndexError):
            raise HTTPException(status_code=400,
                                detail="cell must be i,j within the matrix") from None
        out = [r for r in records
               if record_value(r, x) == x_value and record_value(r, y) == y_value]
        return {"x_value": x_value, "y_value": y_value, "n": len(out),
                "records": out}

    @app.get("/api/render/{configuration_id}.png")
    def render_png(configuration_id: int, run: str):
        run_dir = store.run_dir(run)
        path = os.path.join(run_dir, "buffers", str(configuration_id), "rgb.png")
        if not os.path.isfile(path):
            raise HTTPException(
                status_code=404,
                detail="no saved image for this configuration; rerun with "
                       "render.save_buffers: [rgb]",
            )
        return FileResponse(path, media_type="image/png")

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
