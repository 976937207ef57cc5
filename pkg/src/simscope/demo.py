"""Self-contained demo experiment: two solid-color cubes, two flat
environments, a 3x2 grid (yaw sweep x texture swap) per (environment, mesh)
pair, and the toy mean-RGB centroid model. 24 configurations total; runs in
seconds on one machine and exercises every analysis and the dashboard."""

from __future__ import annotations

import os

import yaml

# unit cube: 8 vertices, 12 triangles, per-face UVs over the full chart
CUBE_OBJ = """\
# unit cube centered at the origin
v -0.5 -0.5 -0.5
v  0.5 -0.5 -0.5
v  0.5  0.5 -0.5
v -0.5  0.5 -0.5
v -0.5 -0.5  0.5
v  0.5 -0.5  0.5
v  0.5  0.5  0.5
v -0.5  0.5  0.5
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 5/1 6/2 7/3
f 5/1 7/3 8/4
f 2/1 1/2 4/3
f 2/1 4/3 3/4
f 1/1 5/2 8/3
f 1/1 8/3 4/4
f 6/1 2/2 3/3
f 6/1 3/3 7/4
f 8/1 7/2 3/3
f 8/1 3/3 4/4
f 1/1 2/2 6/3
f 1/1 6/3 5/4
"""


def demo_config(asset_dir: str = "assets") -> dict:
    return {
        "experiment": {"name": "demo", "seed": 7},
        "assets": {
            "meshes": [
                {"path": f"{asset_dir}/cube_red.obj", "name": "cube_red",
                 "labels": ["red"], "texture": "red"},
                {"path": f"{asset_dir}/cube_blue.obj", "name": "cube_blue",
                 "labels": ["blue"], "texture": "blue"},
            ],
            "environments": [
                {"name": "studio_gray", "color": [0.45, 0.45, 0.5],
                 "ambient_scale": 0.9},
                {"name": "studio_dark", "color": [0.12, 0.12, 0.15],
                 "ambient_scale": 1.0},
            ],
            "textures": [
                {"name": "red", "color": [0.85, 0.08, 0.08]},
                {"name": "blue", "color": [0.1, 0.15, 0.85]},
                {"name": "green", "color": [0.08, 0.8, 0.1]},
            ],
        },
        "controls": [
            {"name": "orientation",
             "params": {"yaw": [-0.8, 0.8], "pitch": {"fixed": 0.4},
                        "roll": {"fixed": 0.0}}},
            {"name": "texture_swap",
             "params": {"texture": {"values": ["original", "green"]}}},
        ],
        "policy": {"name": "grid",
                   "params": {"counts": {"orientation.yaw": 3}}},
        "evaluator": {
            "task": "classification",
            "model": {
                "kind": "toy_centroid",
                "classes": [
                    {"name": "red", "color": [0.85, 0.08, 0.08]},
                    {"name": "green", "color": [0.08, 0.8, 0.1]},
                    {"name": "blue", "color": [0.1, 0.15, 0.85]},
                ],
            },
        },
        "render": {"resolution": [64, 64], "save_buffers": ["rgb", "uv"]},
        "orchestrator": {"max_active_instances": 5, "retry_limit": 2},
    }


def write_demo(target_dir: str) -> str:
    """Materialize the demo assets and config; returns the config path."""
    asset_dir = os.path.join(target_dir, "assets")
    os.makedirs(asset_dir, exist_ok=True)
    for mesh_name in ("cube_red", "cube_blue"):
        with open(os.path.join(asset_dir, f"{mesh_name}.obj"), "w",
                  encoding="utf-8") as f:
            f.write(CUBE_OBJ)
    config_path = os.path.join(target_dir, "demo.yaml")
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(demo_config(), f, sort_keys=False)
    return config_path
