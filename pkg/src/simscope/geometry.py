"""Small vector/camera helpers shared by the scene and the rasterizer.

Conventions (documented once, used everywhere):

* Right-handed world coordinates, +Y up.
* Rotations are yaw/pitch/roll in radians about the +Y, +X and +Z axes;
  the object rotation matrix is ``Rz(roll) @ Rx(pitch) @ Ry(yaw)``.
* Camera space is OpenGL-style: +X right, +Y up, camera looks along -Z.
* A light's ``direction`` is the direction light travels (source -> scene).
"""

from __future__ import annotations

import math

import numpy as np


def normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def rotation_ypr(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """3x3 rotation matrix for yaw (about +Y), pitch (+X), roll (+Z)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return rz @ rx @ ry


def camera_basis(position, look_at) -> np.ndarray:
    """World->camera rotation: rows are (right, up, -forward).

    Up is +Y; when the view direction is (anti)parallel to +Y the fallback
    up axis is +Z so straight-down/straight-up cameras stay well defined.
    """
    position = np.asarray(position, dtype=np.float64)
    look_at = np.asarray(look_at, dtype=np.float64)
    forward = normalize(look_at - position)
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(np.dot(forward, up))) > 1.0 - 1e-9:
        up = np.array([0.0, 0.0, 1.0])
    right = normalize(np.cross(forward, up))
    true_up = np.cross(right, forward)
    return np.stack([right, true_up, -forward])


def bounding_sphere(vertices: np.ndarray) -> tuple[np.ndarray, float]:
    """Center and radius of the axis-aligned-midpoint enclosing sphere."""
    vertices = np.asarray(vertices, dtype=np.float64)
    center = (vertices.min(axis=0) + vertices.max(axis=0)) / 2.0
    radius = float(np.sqrt(((vertices - center) ** 2).sum(axis=1).max()))
    return center, radius


def horizontal_fov(fov_v: float, width: int, height: int) -> float:
    """Horizontal FOV implied by a vertical FOV and pixel aspect ratio."""
    return 2.0 * math.atan(math.tan(fov_v / 2.0) * (width / height))


def spherical_direction(azimuth: float, elevation: float) -> np.ndarray:
    """Unit vector at (azimuth, elevation); azimuth 0 is +Z, elevation 0 is
    the horizon, so (0, 0) -> (0, 0, 1)."""
    ce = math.cos(elevation)
    return np.array(
        [ce * math.sin(azimuth), math.sin(elevation), ce * math.cos(azimuth)]
    )
