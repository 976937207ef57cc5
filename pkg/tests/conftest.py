import math
import os

import numpy as np
import pytest

from simscope.assets import (
    AssetLibrary,
    EnvironmentAsset,
    MeshAsset,
    load_mesh,
    solid_texture,
)
from simscope.demo import CUBE_OBJ, write_demo

TRIANGLE_OBJ = """\
v -1 -1 0
v  1 -1 0
v  0  1 0
vt 0 0
vt 1 0
vt 0.5 1
f 1/1 2/2 3/3
"""


def write_obj(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def make_sphere_obj(segments=12, rings=8, radius=1.0):
    """UV sphere as OBJ text; deterministic test geometry."""
    lines = []
    for r in range(rings + 1):
        theta = math.pi * r / rings
        for s in range(segments + 1):
            phi = 2 * math.pi * s / segments
            x = radius * math.sin(theta) * math.cos(phi)
            y = radius * math.cos(theta)
            z = radius * math.sin(theta) * math.sin(phi)
            lines.append(f"v {x:.8f} {y:.8f} {z:.8f}")
            lines.append(f"vt {s / segments:.8f} {1 - r / rings:.8f}")
    def vid(r, s):
        return r * (segments + 1) + s + 1
    for r in range(rings):
        for s in range(segments):
            a, b = vid(r, s), vid(r + 1, s)
            c, d = vid(r + 1, s + 1), vid(r, s + 1)
            if r != 0:
                lines.append(f"f {a}/{a} {b}/{b} {d}/{d}")
            if r != rings - 1:
                lines.append(f"f {b}/{b} {c}/{c} {d}/{d}")
    return "\n".join(lines) + "\n"


def make_mesh(tmp_path, name="tri", text=TRIANGLE_OBJ, labels=("thing",),
              base_texture=None, opening=None):
    path = write_obj(tmp_path, f"{name}.obj", text)
    return load_mesh(path, name=name, labels=labels, base_texture=base_texture,
                     opening=opening)


def make_library(tmp_path, mesh_text=TRIANGLE_OBJ, env_color=(1.0, 1.0, 1.0),
                 textures=(("red", (1.0, 0.0, 0.0)),), base_texture="red",
                 ambient_scale=1.0, opening=None, mesh_name="tri"):
    lib = AssetLibrary()
    mesh = make_mesh(tmp_path, name=mesh_name, text=mesh_text,
                     base_texture=base_texture, opening=opening)
    lib.add_mesh(mesh)
    lib.add_environment(EnvironmentAsset(name="env", color=env_color,
                                         ambient_scale=ambient_scale))
    for name, color in textures:
        lib.add_texture(solid_texture(name, color))
    return lib


def project_point(state, point):
    """Independent pinhole projector used as the oracle for framing and
    zoom tests; mirrors only the documented conventions, not the renderer
    internals."""
    from simscope.geometry import camera_basis, horizontal_fov

    cam = camera_basis(state.camera_position, state.camera_look_at)
    p = cam @ (np.asarray(point, dtype=np.float64)
               - np.asarray(state.camera_position))
    if p[2] >= 0:
        raise ValueError("point behind camera")
    w, h = state.resolution
    tan_v = math.tan(state.fov / 2)
    tan_h = math.tan(horizontal_fov(state.fov, w, h) / 2)
    ndc_x = p[0] / (-p[2] * tan_h)
    ndc_y = p[1] / (-p[2] * tan_v)
    return ((ndc_x + 1) * w / 2, (1 - ndc_y) * h / 2)


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp("demo")
    write_demo(str(target))
    return str(target)


@pytest.fixture(scope="session")
def demo_runtime(demo_dir):
    from simscope.config import build_runtime, load_config

    return build_runtime(load_config(os.path.join(demo_dir, "demo.yaml")))


@pytest.fixture(scope="session")
def demo_run(demo_dir, demo_runtime, tmp_path_factory):
    """One completed demo run shared by analysis/dashboard/CLI tests."""
    from simscope.orchestrator import run_experiment

    run_dir = str(tmp_path_factory.mktemp("demo_run") / "run")
    manifest = run_experiment(demo_runtime, run_dir, local_workers=2)
    assert manifest.completed == 24
    return run_dir
