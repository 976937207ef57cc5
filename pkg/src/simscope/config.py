"""Experiment config: YAML schema, strict validation, and the runtime
bundle handed to the orchestrator and workers.

Validation is strict by design: unknown keys are fatal (they are almost
always typos in control or parameter names) and every error message names
the offending field path. The config hash covers the normalized structure
(defaults applied, keys sorted) so whitespace and key order never change
it, while any semantically meaningful edit does.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import yaml

from .assets import (
    AssetLibrary,
    load_environment,
    load_mesh,
    load_texture,
    solid_texture,
)
from .controls import ControlRegistry, control_type
from .errors import ConfigError
from .evaluator import CachingModelClient, HttpModelClient, ToyCentroidModel
from .policy import SearchSpace, build_space

DEFAULT_RESOLUTION = [128, 128]
DEFAULT_FOV_DEGREES = 45.0
SAVEABLE_BUFFERS = ("rgb", "uv", "depth", "segmentation")


def _check_keys(mapping, path, allowed, required=()):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(mapping)
    if missing:
        raise ConfigError(f"{path}: missing required keys {sorted(missing)}")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _color(value, path):
    if (not isinstance(value, (list, tuple)) or len(value) != 3
            or any(isinstance(c, bool) or not isinstance(c, (int, float))
                   for c in value)):
        raise ConfigError(f"{path}: expected an [r, g, b] triple")
    return [float(c) for c in value]


def load_config(path: str) -> dict:
    """Parse and normalize a config file (YAML or JSON, both land in the
    same schema); relative asset paths resolve against the config's dir."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
    return normalize_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def normalize_config(raw: dict, base_dir: str = ".") -> dict:
    """Validate the raw structure and fill defaults; returns the normalized
    dict that the hash, the manifest echo, and build_runtime all consume."""
    _check_keys(raw, "$", ["experiment", "assets", "controls", "policy",
                           "evaluator", "render", "orchestrator"],
                required=["experiment", "assets", "policy", "evaluator"])

    exp = raw["experiment"]
    _check_keys(exp, "experiment", ["name", "seed"], required=["name"])
    if not isinstance(exp["name"], str) or not exp["name"]:
        raise ConfigError("experiment.name: must be a non-empty string")
    seed = exp.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("experiment.seed: must be an integer")

    assets = _normalize_assets(raw["assets"], base_dir)
    controls = _normalize_controls(raw.get("controls", []))
    policy = _normalize_policy(raw["policy"])
    evaluator = _normalize_evaluator(raw["evaluator"], base_dir)
    render = _normalize_render(raw.get("render", {}))
    orchestrator = _normalize_orchestrator(raw.get("orchestrator", {}))

    return {
        "experiment": {"name": exp["name"], "seed": seed},
        "assets": assets,
        "controls": controls,
        "policy": policy,
        "evaluator": evaluator,
        "render": render,
        "orchestrator": orchestrator,
    }


def _resolve_path(path, base_dir, field_path):
    if not isinstance(path, str):
        raise ConfigError(f"{field_path}: expected a file path string")
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.isfile(resolved):
        raise ConfigError(f"{field_path}: file not found: {resolved}")
    return os.path.abspath(resolved)


def _normalize_assets(section, base_dir):
    _check_keys(section, "assets", ["meshes", "environments", "textures"],
                required=["meshes", "environments"])
    meshes = []
    if not section["meshes"]:
        raise ConfigError("assets.meshes: at least one mesh required")
    for i, entry in enumerate(section["meshes"]):
        path_str = f"assets.meshes[{i}]"
        _check_keys(entry, path_str,
                    ["path", "name", "labels", "texture", "opening"],
                    required=["path"])
        resolved = _resolve_path(entry["path"], base_dir, f"{path_str}.path")
        labels = entry.get("labels")
        if labels is not None and (not isinstance(labels, list) or not labels):
            raise ConfigError(f"{path_str}.labels: must be a non-empty list")
        opening = entry.get("opening")
        if opening is not None:
            _check_keys(opening, f"{path_str}.opening",
                        ["cx", "cz", "y_bottom", "y_top", "radius"],
                        required=["cx", "cz", "y_bottom", "y_top", "radius"])
        meshes.append({
            "path": resolved,
            "name": entry.get("name") or os.path.splitext(
                os.path.basename(resolved))[0],
            "labels": labels,
            "texture": entry.get("texture"),
            "opening": opening,
        })

    environments = []
    if not section["environments"]:
        raise ConfigError("assets.environments: at least one environment required")
    for i, entry in enumerate(section["environments"]):
        path_str = f"assets.environments[{i}]"
        _check_keys(entry, path_str,
                    ["path", "name", "color", "tags", "ambient_scale"])
        has_path, has_color = "path" in entry, "color" in entry
        if has_path == has_color:
            raise ConfigError(f"{path_str}: exactly one of path/color required")
        norm = {
            "name": entry.get("name"),
            "tags": list(entry.get("tags", [])),
            "ambient_scale": _number(entry.get("ambient_scale", 1.0),
                                     f"{path_str}.ambient_scale"),
        }
        if has_path:
            norm["path"] = _resolve_path(entry["path"], base_dir, f"{path_str}.path")
            norm["name"] = norm["name"] or os.path.splitext(
                os.path.basename(norm["path"]))[0]
        else:
            norm["color"] = _color(entry["color"], f"{path_str}.color")
            norm["name"] = norm["name"] or f"uniform_{i}"
        environments.append(norm)

    textures = []
    for i, entry in enumerate(section.get("textures", []) or []):
        path_str = f"assets.textures[{i}]"
        _check_keys(entry, path_str, ["path", "name", "color", "tiled"])
        has_path, has_color = "path" in entry, "color" in entry
        if has_path == has_color:
            raise ConfigError(f"{path_str}: exactly one of path/color required")
        norm = {"name": entry.get("name"), "tiled": bool(entry.get("tiled", True))}
        if has_path:
            norm["path"] = _resolve_path(entry["path"], base_dir, f"{path_str}.path")
            norm["name"] = norm["name"] or os.path.splitext(
                os.path.basename(norm["path"]))[0]
        else:
            if not norm["name"]:
                raise ConfigError(f"{path_str}.name: required for color textures")
            norm["color"] = _color(entry["color"], f"{path_str}.color")
        textures.append(norm)

    names = [m["name"] for m in meshes]
    if len(set(names)) != len(names):
        raise ConfigError("assets.meshes: duplicate mesh names")
    names = [e["name"] for e in environments]
    if len(set(names)) != len(names):
        raise ConfigError("assets.environments: duplicate environment names")
    return {"meshes": meshes, "environments": environments, "textures": textures}


def _normalize_controls(section):
    if not isinstance(section, list):
        raise ConfigError("controls: expected a list")
    controls = []
    seen = set()
    for i, entry in enumerate(section):
        path_str = f"controls[{i}]"
        _check_keys(entry, path_str, ["name", "params"], required=["name"])
        name = entry["name"]
        if name in seen:
            raise ConfigError(f"{path_str}.name: duplicate control {name!r}")
        seen.add(name)
        params = {}
        for pname, spec in (entry.get("params") or {}).items():
            ppath = f"{path_str}.params.{pname}"
            if isinstance(spec, (int, float)) and not isinstance(spec, bool):
                params[pname] = {"fixed": float(spec)}
            elif isinstance(spec, str):
                params[pname] = {"fixed": spec}
            elif isinstance(spec, list):
                if len(spec) != 2:
                    raise ConfigError(f"{ppath}: a range needs exactly [lo, hi]")
                lo, hi = (_number(v, ppath) for v in spec)
                params[pname] = {"range": [lo, hi]}
            elif isinstance(spec, dict):
                _check_keys(spec, ppath, ["values", "fixed", "range"])
                if len(spec) != 1:
                    raise ConfigError(f"{ppath}: pick one of values/fixed/range")
                if "values" in spec:
                    if not isinstance(spec["values"], list) or not spec["values"]:
                        raise ConfigError(f"{ppath}.values: non-empty list required")
                    params[pname] = {"values": list(spec["values"])}
                elif "range" in spec:
                    lo, hi = (_number(v, ppath) for v in spec["range"])
                    params[pname] = {"range": [lo, hi]}
                else:
                    params[pname] = {"fixed": spec["fixed"]}
            else:
                raise ConfigError(f"{ppath}: cannot interpret {spec!r}")
        controls.append({"name": name, "params": params})
    return controls


def _normalize_policy(section):
    _check_keys(section, "policy", ["name", "params"], required=["name"])
    params = section.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("policy.params: expected a mapping")
    return {"name": section["name"], "params": params}


def _normalize_evaluator(section, base_dir):
    _check_keys(section, "evaluator",
                ["task", "model", "vocabulary", "iou_threshold"],
                required=["task", "model"])
    task = section["task"]
    model = section["model"]
    _check_keys(model, "evaluator.model",
                ["kind", "classes", "url", "timeout"], required=["kind"])
    kind = model["kind"]
    norm_model = {"kind": kind}
    if kind == "toy_centroid":
        classes = model.get("classes")
        if not classes:
            raise ConfigError("evaluator.model.classes: required for toy_centroid")
        norm_classes = []
        for i, centry in enumerate(classes):
            cpath = f"evaluator.model.classes[{i}]"
            _check_keys(centry, cpath, ["name", "color"], required=["name", "color"])
            norm_classes.append({"name": centry["name"],
                                 "color": _color(centry["color"], f"{cpath}.color")})
        norm_model["classes"] = norm_classes
    elif kind == "http":
        if not model.get("url"):
            raise ConfigError("evaluator.model.url: required for http models")
        norm_model["url"] = model["url"]
        norm_model["timeout"] = _number(model.get("timeout", 10.0),
                                        "evaluator.model.timeout")
    else:
        raise ConfigError(f"evaluator.model.kind: unknown kind {kind!r}")

    vocabulary = section.get("vocabulary")
    if isinstance(vocabulary, dict):
        _check_keys(vocabulary, "evaluator.vocabulary", ["path"], required=["path"])
        vocab_path = _resolve_path(vocabulary["path"], base_dir,
                                   "evaluator.vocabulary.path")
        with open(vocab_path, "r", encoding="utf-8") as f:
            vocabulary = [line.strip() for line in f if line.strip()]
    elif vocabulary is None:
        if kind != "toy_centroid":
            raise ConfigError("evaluator.vocabulary: required for http models")
        vocabulary = [c["name"] for c in norm_model["classes"]]
    elif not isinstance(vocabulary, list):
        raise ConfigError("evaluator.vocabulary: expected a list or {path}")

    return {
        "task": task,
        "model": norm_model,
        "vocabulary": list(vocabulary),
        "iou_threshold": _number(section.get("iou_threshold", 0.5),
                                 "evaluator.iou_threshold"),
    }


def _normalize_render(section):
    _check_keys(section, "render",
                ["resolution", "fov_degrees", "backend", "save_buffers"])
    resolution = section.get("resolution", DEFAULT_RESOLUTION)
    if (not isinstance(resolution, list) or len(resolution) != 2
            or any(not isinstance(v, int) or isinstance(v, bool)
                   for v in resolution)):
        raise ConfigError("render.resolution: expected [width, height] integers")
    backend = section.get("backend") or {"kind": "builtin"}
    if isinstance(backend, str):
        backend = {"kind": backend}
    _check_keys(backend, "render.backend", ["kind", "address"], required=["kind"])
    if backend["kind"] not in ("builtin", "remote"):
        raise ConfigError("render.backend.kind: must be builtin or remote")
    if backend["kind"] == "remote" and not backend.get("address"):
        raise ConfigError("render.backend.address: required for remote backends")
    save = section.get("save_buffers", []) or []
    bad = set(save) - set(SAVEABLE_BUFFERS)
    if bad:
        raise ConfigError(
            f"render.save_buffers: unknown buffers {sorted(bad)}; "
            f"choose from {list(SAVEABLE_BUFFERS)}"
        )
    return {
        "resolution": [int(v) for v in resolution],
        "fov_degrees": _number(section.get("fov_degrees", DEFAULT_FOV_DEGREES),
                               "render.fov_degrees"),
        "backend": backend,
        "save_buffers": list(save),
    }


def _normalize_orchestrator(section):
    _check_keys(section, "orchestrator",
                ["max_active_instances", "retry_limit", "batch_size",
                 "heartbeat_s", "registration_timeout_s", "output_dir"])
    out = {
        "max_active_instances": int(section.get("max_active_instances", 5)),
        "retry_limit": int(section.get("retry_limit", 2)),
        "batch_size": int(section.get("batch_size", 32)),
        "heartbeat_s": _number(section.get("heartbeat_s", 2.0),
                               "orchestrator.heartbeat_s"),
        "registration_timeout_s": _number(
            section.get("registration_timeout_s", 30.0),
            "orchestrator.registration_timeout_s"),
        "output_dir": section.get("output_dir"),
    }
    if out["max_active_instances"] < 1:
        raise ConfigError("orchestrator.max_active_instances: must be >= 1")
    if out["retry_limit"] < 0:
        raise ConfigError("orchestrator.retry_limit: must be >= 0")
    return out


def config_hash(normalized: dict) -> str:
    canonical = json.dumps(normalized, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# runtime


@dataclass
class ExperimentRuntime:
    """Everything a worker or orchestrator needs, built once from a config.
    Immutable in practice: registries are read-only after construction."""

    name: str
    experiment_seed: int
    assets: AssetLibrary
    registry: ControlRegistry
    descriptors: list
    space: SearchSpace
    policy_name: str
    policy_params: dict
    task: str
    iou_threshold: float
    model_client: CachingModelClient
    resolution: tuple[int, int]
    fov: float
    save_buffers: list
    backend_spec: dict
    instance_pairs: list  # ordered (environment, mesh) names
    config_hash: str
    asset_checksums: dict
    config_echo: dict
    orchestrator_settings: dict = field(default_factory=dict)

    @property
    def required_controls(self):
        return [d.name for d in self.descriptors]

    @property
    def required_modalities(self):
        required = {"rgb"}
        if self.task == "detection":
            required.add("segmentation")
        required.update(self.save_buffers)
        return sorted(required)

    def make_render_backend(self):
        """None means render in-process; remote backends get a fresh
        connection per pipeline."""
        if self.backend_spec.get("kind", "builtin") == "builtin":
            return None
        from .protocol import RemoteRenderBackend

        host, _, port = self.backend_spec["address"].rpartition(":")
        return RemoteRenderBackend(
            (host or "127.0.0.1", int(port)),
            required_controls=self.required_controls,
            required_modalities=self.required_modalities,
        )


def build_runtime(config: dict) -> ExperimentRuntime:
    """Load assets, build the control registry and search space, and wire up
    the model client for one validated config."""
    assets = AssetLibrary()
    checksums = {}
    for entry in config["assets"]["textures"]:
        if "path" in entry:
            tex = load_texture(entry["path"], name=entry["name"],
                               tiled=entry["tiled"])
            checksums[f"texture:{tex.name}"] = _file_checksum(entry["path"])
        else:
            tex = solid_texture(entry["name"], entry["color"])
            checksums[f"texture:{tex.name}"] = config_hash(entry)
        assets.add_texture(tex)
    for entry in config["assets"]["meshes"]:
        base_texture = entry.get("texture")
        if base_texture is not None and base_texture not in assets.textures:
            raise ConfigError(
                f"mesh {entry['name']!r}: unknown base texture {base_texture!r}"
            )
        mesh = load_mesh(entry["path"], name=entry["name"],
                         labels=entry.get("labels"), base_texture=base_texture,
                         opening=entry.get("opening"))
        assets.add_mesh(mesh)
        checksums[f"mesh:{mesh.name}"] = _file_checksum(entry["path"])
    for entry in config["assets"]["environments"]:
        if "path" in entry:
            env = load_environment(entry["path"], name=entry["name"],
                                   tags=entry["tags"],
                                   ambient_scale=entry["ambient_scale"])
            checksums[f"environment:{env.name}"] = _file_checksum(entry["path"])
        else:
            env = load_environment(tuple(entry["color"]), name=entry["name"],
                                   tags=entry["tags"],
                                   ambient_scale=entry["ambient_scale"])
            checksums[f"environment:{env.name}"] = config_hash(entry)
        assets.add_environment(env)

    registry, descriptors, pinned = _build_controls(config, assets)
    space = build_space(descriptors, pinned=pinned)

    ev = config["evaluator"]
    if ev["model"]["kind"] == "toy_centroid":
        base_client = ToyCentroidModel(
            [(c["name"], tuple(c["color"])) for c in ev["model"]["classes"]]
        )
        if ev["vocabulary"] != base_client.vocabulary:
            raise ConfigError(
                "evaluator.vocabulary must match toy_centroid class names"
            )
    else:
        base_client = HttpModelClient(ev["model"]["url"], ev["vocabulary"],
                                      timeout=ev["model"]["timeout"])
    for mesh in assets.meshes.values():
        if not mesh.label_set & set(ev["vocabulary"]) and ev["task"] in (
                "classification", "detection"):
            raise ConfigError(
                f"mesh {mesh.name!r}: none of its labels {sorted(mesh.label_set)} "
                "appear in the class vocabulary"
            )

    pairs = [(env["name"], mesh["name"])
             for env in config["assets"]["environments"]
             for mesh in config["assets"]["meshes"]]

    policy_params = dict(config["policy"]["params"])
    policy_params.setdefault("batch_size", config["orchestrator"]["batch_size"])

    return ExperimentRuntime(
        name=config["experiment"]["name"],
        experiment_seed=config["experiment"]["seed"],
        assets=assets,
        registry=registry,
        descriptors=descriptors,
        space=space,
        policy_name=config["policy"]["name"],
        policy_params=policy_params,
        task=ev["task"],
        iou_threshold=ev["iou_threshold"],
        model_client=CachingModelClient(base_client),
        resolution=tuple(config["render"]["resolution"]),
        fov=math.radians(config["render"]["fov_degrees"]),
        save_buffers=list(config["render"]["save_buffers"]),
        backend_spec=config["render"]["backend"],
        instance_pairs=pairs,
        config_hash=config_hash(config),
        asset_checksums=checksums,
        config_echo=config,
        orchestrator_settings=config["orchestrator"],
    )


def _build_controls(config: dict, assets: AssetLibrary):
    registry = ControlRegistry()
    descriptors = []
    pinned = {}
    for entry in config["controls"]:
        name = entry["name"]
        factory = control_type(name)
        kwargs = {}
        fixed = {}
        for pname, spec in entry["params"].items():
            if "range" in spec:
                kwargs[pname] = tuple(spec["range"])
            elif "values" in spec:
                kwargs[pname] = tuple(spec["values"])
            else:
                fixed[pname] = spec["fixed"]
        if name == "background" and "environment" not in kwargs:
            kwargs["environment"] = tuple(e["name"] for e in
                                          config["assets"]["environments"])
        if name == "texture_swap" and "texture" not in kwargs:
            kwargs["texture"] = tuple(t["name"] for t in
                                      config["assets"]["textures"])
            kwargs["include_original"] = True
        try:
            control = factory(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"controls.{name}: bad params ({exc})") from exc
        registry.add(control)
        descriptors.append(control.descriptor)
        for pname, value in fixed.items():
            desc = control.descriptor
            key = f"{name}.{pname}"
            if pname in desc.discrete_params:
                values = desc.discrete_params[pname]
                if value not in values:
                    raise ConfigError(
                        f"controls.{name}.params.{pname}: fixed value {value!r} "
                        f"not among {list(values)}"
                    )
                pinned[key] = values.index(value)
            elif pname in desc.continuous_params:
                pinned[key] = float(value)
            else:
                raise ConfigError(
                    f"controls.{name}.params.{pname}: control declares no such param"
                )
    return registry, descriptors, pinned
