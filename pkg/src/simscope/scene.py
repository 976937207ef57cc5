"""Canonical mutable-by-replacement scene state.

A ``SceneState`` is immutable; controls produce new states via ``replace``.
The JSON form round-trips exactly (floats serialize via repr), which the
wire protocol and the log format both rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import SceneError
from .geometry import bounding_sphere, horizontal_fov

DEFAULT_FOV = math.pi / 4
DEFAULT_RESOLUTION = (128, 128)
FRAMING_MARGIN = 1.15


@dataclass(frozen=True)
class SceneState:
    mesh: str
    environment: str
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # yaw, pitch, roll
    scale: float = 1.0
    camera_position: tuple[float, float, float] = (0.0, 0.0, 5.0)
    camera_look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov: float = DEFAULT_FOV  # vertical, radians
    resolution: tuple[int, int] = DEFAULT_RESOLUTION  # (width, height)
    light_direction: tuple[float, float, float] = (0.0, 0.0, -1.0)
    light_color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    light_intensity: float = 1.0
    active_texture: str | None = None
    extras: tuple = ()  # sorted (key, value) pairs; open map for custom controls

    def __post_init__(self):
        if not self.scale > 0:
            raise SceneError(f"scale must be > 0, got {self.scale}")
        if not 0.0 < self.fov < math.pi:
            raise SceneError(f"fov must be in (0, pi), got {self.fov}")
        w, h = self.resolution
        if w < 16 or h < 16:
            raise SceneError(f"resolution must be at least 16x16, got {w}x{h}")
        if tuple(self.camera_position) == tuple(self.camera_look_at):
            raise SceneError("camera position coincides with look-at point")
        norm = math.sqrt(sum(c * c for c in self.light_direction))
        if abs(norm - 1.0) > 1e-6:
            raise SceneError("light direction must be a unit vector")
        if self.light_intensity < 0:
            raise SceneError("light intensity must be >= 0")

    def with_changes(self, **kwargs) -> "SceneState":
        return replace(self, **kwargs)

    @property
    def extras_map(self) -> dict:
        return dict(self.extras)

    def with_extra(self, key: str, value) -> "SceneState":
        extras = dict(self.extras)
        extras[key] = value
        return replace(self, extras=tuple(sorted(extras.items())))

    def to_json(self) -> dict:
        """Scene JSON schema (documented field-by-field in the README)."""
        return {
            "mesh": self.mesh,
            "environment": self.environment,
            "translation": list(self.translation),
            "rotation": {
                "yaw": self.rotation[0],
                "pitch": self.rotation[1],
                "roll": self.rotation[2],
            },
            "scale": self.scale,
            "camera": {
                "position": list(self.camera_position),
                "look_at": list(self.camera_look_at),
                "fov": self.fov,
                "resolution": list(self.resolution),
            },
            "light": {
                "direction": list(self.light_direction),
                "color": list(self.light_color),
                "intensity": self.light_intensity,
            },
            "active_texture": self.active_texture,
            "extras": {k: v for k, v in self.extras},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SceneState":
        try:
            cam, light, rot = data["camera"], data["light"], data["rotation"]
            return cls(
                mesh=data["mesh"],
                environment=data["environment"],
                translation=tuple(data["translation"]),
                rotation=(rot["yaw"], rot["pitch"], rot["roll"]),
                scale=data["scale"],
                camera_position=tuple(cam["position"]),
                camera_look_at=tuple(cam["look_at"]),
                fov=cam["fov"],
                resolution=tuple(cam["resolution"]),
                light_direction=tuple(light["direction"]),
                light_color=tuple(light["color"]),
                light_intensity=light["intensity"],
                active_texture=data.get("active_texture"),
                extras=tuple(sorted(data.get("extras", {}).items())),
            )
        except KeyError as exc:
            raise SceneError(f"scene JSON missing field {exc}") from exc


def default_scene(mesh, environment, fov=DEFAULT_FOV, resolution=DEFAULT_RESOLUTION) -> SceneState:
    """Unchallenging default pose: object untransformed, camera on the +Z
    axis framing the mesh bounding sphere with a 15% distance margin, light
    shining from the camera toward the object.

    The framing distance is ``radius / sin(fov_eff / 2) * 1.15`` where
    fov_eff is the tighter of the vertical and horizontal fields of view,
    so the whole projection is guaranteed to land inside the frame.
    """
    center, radius = bounding_sphere(mesh.vertices)
    if radius <= 0.0:
        raise SceneError(f"mesh {mesh.name!r} has a degenerate bounding sphere")
    w, h = resolution
    fov_eff = min(fov, horizontal_fov(fov, w, h))
    distance = radius / math.sin(fov_eff / 2.0) * FRAMING_MARGIN
    position = (float(center[0]), float(center[1]), float(center[2]) + distance)
    return SceneState(
        mesh=mesh.name,
        environment=environment.name,
        camera_position=position,
        camera_look_at=(float(center[0]), float(center[1]), float(center[2])),
        fov=fov,
        resolution=(int(w), int(h)),
        light_direction=(0.0, 0.0, -1.0),
        light_intensity=1.0,
        active_texture=mesh.base_texture,
    )
