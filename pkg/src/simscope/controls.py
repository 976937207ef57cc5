"""Composable scene transformations.

Two kinds exist and the type system keeps them apart: rendered controls map
a scene state to a new scene state (never pixels); post controls map a
rendered RGB buffer to a new buffer (never scene state). Every application
is a pure function of (input, parameters, seed).

Composition applies rendered controls in declaration order; when two
controls write the same scene field the later one wins (declaration-order
last-write-wins). Orientation composes additively per Euler axis and scale
multiplies, so sweeps stay interpretable; external render backends must
match these conventions.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .assets import AssetLibrary, encode_png
from .errors import ControlError
from .geometry import spherical_direction
from .scene import SceneState

import io
import math

from PIL import Image

# liquid blend anchors (water : milk : coffee); ratio-weighted in the renderer
WATER_COLOR = (0.45, 0.55, 0.68)
MILK_COLOR = (0.96, 0.96, 0.92)
COFFEE_COLOR = (0.15, 0.08, 0.04)


@dataclass(frozen=True)
class ControlDescriptor:
    """Declared parameter schema of one control."""

    name: str
    kind: str  # "rendered" | "post"
    continuous_params: dict[str, tuple[float, float]] = field(default_factory=dict)
    discrete_params: dict[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("rendered", "post"):
            raise ControlError(f"control {self.name!r}: bad kind {self.kind!r}")
        overlap = set(self.continuous_params) & set(self.discrete_params)
        if overlap:
            raise ControlError(f"control {self.name!r}: duplicate params {overlap}")
        for pname, (lo, hi) in self.continuous_params.items():
            if not lo < hi:
                raise ControlError(
                    f"control {self.name!r} param {pname!r}: min {lo} is not < max {hi}"
                )
        for pname, values in self.discrete_params.items():
            if len(values) == 0:
                raise ControlError(
                    f"control {self.name!r} param {pname!r}: empty discrete list"
                )

    @property
    def param_names(self) -> list[str]:
        return list(self.continuous_params) + list(self.discrete_params)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "continuous": {k: list(v) for k, v in self.continuous_params.items()},
            "discrete": {k: list(v) for k, v in self.discrete_params.items()},
        }


@dataclass(frozen=True)
class ControlInstantiation:
    """One concrete parameter assignment: floats for continuous params,
    indices into the declared value list for discrete params."""

    control: str
    assignments: dict

    def to_json(self) -> dict:
        return {"control": self.control, "assignments": dict(self.assignments)}

    @classmethod
    def from_json(cls, data: dict) -> "ControlInstantiation":
        return cls(control=data["control"], assignments=dict(data["assignments"]))


def validate_instantiation(descriptor: ControlDescriptor, inst: ControlInstantiation):
    """Check that every declared param is assigned and in range; returns the
    resolved values (discrete indices replaced by list elements)."""
    assigned = set(inst.assignments)
    declared = set(descriptor.param_names)
    missing = declared - assigned
    if missing:
        raise ControlError(
            f"control {descriptor.name!r}: unassigned params {sorted(missing)}"
        )
    unknown = assigned - declared
    if unknown:
        raise ControlError(
            f"control {descriptor.name!r}: unknown params {sorted(unknown)}"
        )
    resolved = {}
    for pname, (lo, hi) in descriptor.continuous_params.items():
        value = float(inst.assignments[pname])
        if not (lo <= value <= hi) or not math.isfinite(value):
            raise ControlError(
                f"control {descriptor.name!r} param {pname!r}: "
                f"{value} outside [{lo}, {hi}]"
            )
        resolved[pname] = value
    for pname, values in descriptor.discrete_params.items():
        idx = inst.assignments[pname]
        if not isinstance(idx, (int, np.integer)) or isinstance(idx, bool):
            raise ControlError(
                f"control {descriptor.name!r} param {pname!r}: "
                f"discrete assignment must be an index, got {idx!r}"
            )
        if not 0 <= idx < len(values):
            raise ControlError(
                f"control {descriptor.name!r} param {pname!r}: "
                f"index {idx} outside [0, {len(values)})"
            )
        resolved[pname] = values[idx]
    return resolved


class RenderedControl:
    """Base for controls that rewrite the 3D scene state."""

    kind = "rendered"
    descriptor: ControlDescriptor

    def apply(self, state: SceneState, values: dict, assets: AssetLibrary) -> SceneState:
        raise NotImplementedError


class PostControl:
    """Base for controls that rewrite the rendered 2D image."""

    kind = "post"
    descriptor: ControlDescriptor

    def apply(self, image: np.ndarray, values: dict, rng: np.random.Generator,
              warnings: list) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# built-in rendered controls


class OrientationControl(RenderedControl):
    """Adds yaw/pitch/roll to the object rotation (additive per axis)."""

    def __init__(self, yaw=(-math.pi, math.pi), pitch=(-math.pi, math.pi),
                 roll=(-math.pi, math.pi)):
        self.descriptor = ControlDescriptor(
            name="orientation", kind="rendered",
            continuous_params={"yaw": yaw, "pitch": pitch, "roll": roll},
        )

    def apply(self, state, values, assets):
        yaw, pitch, roll = state.rotation
        return state.with_changes(
            rotation=(yaw + values["yaw"], pitch + values["pitch"],
                      roll + values["roll"])
        )


class CameraControl(RenderedControl):
    """Repositions the camera on the viewing sphere around the look-at point
    and zooms the lens: tan(fov'/2) = tan(fov/2) / zoom."""

    def __init__(self, azimuth=(-math.pi, math.pi), elevation=(-1.2, 1.2),
                 distance_scale=(0.5, 2.0), zoom=(0.25, 4.0)):
        self.descriptor = ControlDescriptor(
            name="camera", kind="rendered",
            continuous_params={
                "azimuth": azimuth, "elevation": elevation,
                "distance_scale": distance_scale, "zoom": zoom,
            },
        )

    def apply(self, state, values, assets):
        look = np.asarray(state.camera_look_at, dtype=np.float64)
        pos = np.asarray(state.camera_position, dtype=np.float64)
        distance = float(np.linalg.norm(pos - look)) * values["distance_scale"]
        if distance <= 0:
            raise ControlError("camera: distance collapsed to zero")
        direction = spherical_direction(values["azimuth"], values["elevation"])
        new_pos = look + direction * distance
        new_fov = 2.0 * math.atan(math.tan(state.fov / 2.0) / values["zoom"])
        return state.with_changes(
            camera_position=tuple(float(c) for c in new_pos), fov=new_fov
        )


class PositionControl(RenderedControl):
    """Offsets the object across the ground plane (x and z axes)."""

    def __init__(self, dx=(-1.0, 1.0), dy=(-1.0, 1.0)):
        self.descriptor = ControlDescriptor(
            name="position", kind="rendered",
            continuous_params={"dx": dx, "dy": dy},
        )

    def apply(self, state, values, assets):
        tx, ty, tz = state.translation
        return state.with_changes(
            translation=(tx + values["dx"], ty, tz + values["dy"])
        )


class ScaleControl(RenderedControl):
    """Multiplies the object's uniform scale."""

    def __init__(self, factor=(0.5, 2.0)):
        self.descriptor = ControlDescriptor(
            name="scale", kind="rendered", continuous_params={"factor": factor}
        )

    def apply(self, state, values, assets):
        return state.with_changes(scale=state.scale * values["factor"])


class BackgroundControl(RenderedControl):
    """Swaps the scene environment (discrete choice over configured names)."""

    def __init__(self, environment):
        self.descriptor = ControlDescriptor(
            name="background", kind="rendered",
            discrete_params={"environment": tuple(environment)},
        )

    def apply(self, state, values, assets):
        assets.environment(values["environment"])  # fail early if unknown
        return state.with_changes(environment=values["environment"])


class TextureSwapControl(RenderedControl):
    """Replaces the object's texture; "original" restores the mesh's own."""

    def __init__(self, texture, include_original=False):
        values = (["original"] if include_original else []) + list(texture)
        self.descriptor = ControlDescriptor(
            name="texture_swap", kind="rendered",
            discrete_params={"texture": tuple(values)},
        )

    def apply(self, state, values, assets):
        choice = values["texture"]
        if choice == "original":
            return state.with_changes(active_texture=assets.mesh(state.mesh).base_texture)
        assets.texture(choice)  # fail early if unknown
        return state.with_changes(active_texture=choice)


class TimeOfDayControl(RenderedControl):
    """Stylized sun: hour of day sets the light's elevation/azimuth, a
    warm-to-cool ramp on sun height sets its color, night means intensity 0.
    Equinox-at-equator model: elevation = 90 deg - |hour-12| * 15 deg."""

    WARM = (1.0, 0.55, 0.25)
    COOL = (1.0, 1.0, 0.95)

    def __init__(self, hour=(0.0, 24.0)):
        self.descriptor = ControlDescriptor(
            name="time_of_day", kind="rendered",
            continuous_params={"hour": hour},
        )

    def apply(self, state, values, assets):
        hour = values["hour"] % 24.0
        elevation = math.radians(90.0 - abs(hour - 12.0) * 15.0)
        azimuth = math.radians((hour - 12.0) * 15.0)
        sun = spherical_direction(azimuth, elevation)
        daylight = max(0.0, min(1.0, math.sin(elevation)))
        color = tuple(
            w + (c - w) * daylight for w, c in zip(self.WARM, self.COOL)
        )
        return state.with_changes(
            light_direction=tuple(float(-c) for c in sun),
            light_color=color,
            light_intensity=daylight,
        )


class LiquidFillControl(RenderedControl):
    """Writes normalized water:milk:coffee ratios plus a fill level into the
    scene extras; the renderer draws a fill disc at the mesh's declared
    interior opening with the ratio-weighted blend color."""

    def __init__(self, water=(0.0, 1.0), milk=(0.0, 1.0), coffee=(0.0, 1.0),
                 fill_level=(0.0, 1.0)):
        self.descriptor = ControlDescriptor(
            name="liquid_fill", kind="rendered",
            continuous_params={
                "water": water, "milk": milk, "coffee": coffee,
                "fill_level": fill_level,
            },
        )

    def apply(self, state, values, assets):
        total = values["water"] + values["milk"] + values["coffee"]
        if total <= 0.0:
            raise ControlError("liquid_fill: ratios (0, 0, 0) are rejected")
        return state.with_extra(
            "liquid",
            {
                "water": values["water"] / total,
                "milk": values["milk"] / total,
                "coffee": values["coffee"] / total,
                "fill": values["fill_level"],
            },
        )


def liquid_color(water: float, milk: float, coffee: float) -> np.ndarray:
    """Ratio-weighted blend of the three base liquid colors."""
    ratios = np.asarray([water, milk, coffee], dtype=np.float64)
    ratios = ratios / ratios.sum()
    anchors = np.asarray([WATER_COLOR, MILK_COLOR, COFFEE_COLOR])
    return ratios @ anchors


# ---------------------------------------------------------------------------
# built-in post controls


OCCLUDER_COLORS = {"black": (0.0, 0.0, 0.0), "gray": (0.5, 0.5, 0.5),
                   "white": (1.0, 1.0, 1.0)}


class OcclusionControl(PostControl):
    """Paints a solid rectangle over the render; x/y/w/h are fractions of the
    frame. A rectangle fully outside the frame is recorded as a warning and
    the image passes through unchanged."""

    def __init__(self, x=(0.0, 1.0), y=(0.0, 1.0), w=(0.0, 1.0), h=(0.0, 1.0),
                 color=("black", "gray", "white")):
        self.descriptor = ControlDescriptor(
            name="occlusion", kind="post",
            continuous_params={"x": x, "y": y, "w": w, "h": h},
            discrete_params={"color": tuple(color)},
        )

    def apply(self, image, values, rng, warnings):
        height, width = image.shape[:2]
        x0 = int(round(values["x"] * width))
        x1 = int(round((values["x"] + values["w"]) * width))
        y0 = int(round(values["y"] * height))
        y1 = int(round((values["y"] + values["h"]) * height))
        if x0 >= width or y0 >= height or x1 <= 0 or y1 <= 0:
            warnings.append(
                f"occlusion: rectangle fully outside frame "
                f"(x={values['x']}, y={values['y']}, w={values['w']}, h={values['h']})"
            )
            return image.copy()
        out = image.copy()
        out[max(y0, 0):min(y1, height), max(x0, 0):min(x1, width)] = (
            OCCLUDER_COLORS[values["color"]]
        )
        return out


class GaussianNoiseControl(PostControl):
    """Adds per-pixel Gaussian noise with the given sigma, clipped to [0, 1]."""

    def __init__(self, sigma=(0.0, 0.5)):
        self.descriptor = ControlDescriptor(
            name="gaussian_noise", kind="post",
            continuous_params={"sigma": sigma},
        )

    def apply(self, image, values, rng, warnings):
        if values["sigma"] == 0.0:
            return image.copy()
        noise = rng.normal(0.0, values["sigma"], size=image.shape)
        return np.clip(image + noise.astype(image.dtype), 0.0, 1.0)


class BrightnessControl(PostControl):
    def __init__(self, gain=(0.25, 4.0)):
        self.descriptor = ControlDescriptor(
            name="brightness", kind="post", continuous_params={"gain": gain}
        )

    def apply(self, image, values, rng, warnings):
        if values["gain"] == 1.0:
            return image.copy()
        return np.clip(image * values["gain"], 0.0, 1.0)


class BlurControl(PostControl):
    """Kernel-based Gaussian blur; sigma is in pixels, 0 is the identity."""

    def __init__(self, sigma=(0.0, 4.0)):
        self.descriptor = ControlDescriptor(
            name="blur", kind="post", continuous_params={"sigma": sigma}
        )

    def apply(self, image, values, rng, warnings):
        if values["sigma"] == 0.0:
            return image.copy()
        out = np.empty_like(image)
        for c in range(image.shape[2]):
            out[:, :, c] = ndimage.gaussian_filter(
                image[:, :, c], sigma=values["sigma"], mode="nearest"
            )
        return np.clip(out, 0.0, 1.0)


class ExternalFilterControl(PostControl):
    """Escape hatch for third-party corruption libraries: pipes the render
    through an executable as PNG on stdin/stdout."""

    def __init__(self, name: str, argv: list[str]):
        self.argv = list(argv)
        self.descriptor = ControlDescriptor(name=name, kind="post")

    def apply(self, image, values, rng, warnings):
        png = encode_png(image, gamma=False)
        try:
            proc = subprocess.run(
                self.argv, input=png, stdout=subprocess.PIPE, check=True,
                timeout=60,
            )
        except (OSError, subprocess.SubprocessError) as exc:
            raise ControlError(
                f"external filter {self.descriptor.name!r} failed: {exc}"
            ) from exc
        try:
            with Image.open(io.BytesIO(proc.stdout)) as im:
                out = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as exc:
            raise ControlError(
                f"external filter {self.descriptor.name!r} returned bad image data"
            ) from exc
        if out.shape != image.shape:
            raise ControlError(
                f"external filter {self.descriptor.name!r} changed resolution"
            )
        return out


# ---------------------------------------------------------------------------
# registry and composition


BUILTIN_CONTROL_TYPES = {
    "orientation": OrientationControl,
    "camera": CameraControl,
    "position": PositionControl,
    "scale": ScaleControl,
    "background": BackgroundControl,
    "texture_swap": TextureSwapControl,
    "time_of_day": TimeOfDayControl,
    "liquid_fill": LiquidFillControl,
    "occlusion": OcclusionControl,
    "gaussian_noise": GaussianNoiseControl,
    "brightness": BrightnessControl,
    "blur": BlurControl,
}

_custom_control_types: dict[str, type] = {}


def register_control_type(name: str, factory) -> None:
    """Extension point: make a custom control constructible from configs."""
    if name in BUILTIN_CONTROL_TYPES or name in _custom_control_types:
        raise ControlError(f"control type {name!r} already registered")
    _custom_control_types[name] = factory


def control_type(name: str):
    try:
        return BUILTIN_CONTROL_TYPES.get(name) or _custom_control_types[name]
    except KeyError:
        raise ControlError(f"unknown control type {name!r}") from None


class ControlRegistry:
    """The experiment's configured controls, in declaration order. Built once
    at startup and read-only afterwards; applications are pure, so renders
    may proceed in parallel against one shared registry."""

    def __init__(self, controls=()):
        self._controls: dict[str, object] = {}
        for control in controls:
            self.add(control)

    def add(self, control) -> None:
        name = control.descriptor.name
        if name in self._controls:
            raise ControlError(f"duplicate control {name!r}")
        self._controls[name] = control

    def get(self, name: str):
        try:
            return self._controls[name]
        except KeyError:
            raise ControlError(f"unknown control {name!r}") from None

    def __iter__(self):
        return iter(self._controls.values())

    def __contains__(self, name):
        return name in self._controls

    def descriptors(self) -> list[ControlDescriptor]:
        return [c.descriptor for c in self._controls.values()]

    def rendered(self):
        return [c for c in self._controls.values() if c.kind == "rendered"]

    def post(self):
        return [c for c in self._controls.values() if c.kind == "post"]


def apply_rendered(state: SceneState, inst: ControlInstantiation,
                   registry: ControlRegistry, assets: AssetLibrary) -> SceneState:
    control = registry.get(inst.control)
    if control.kind != "rendered":
        raise ControlError(f"control {inst.control!r} is not a rendered control")
    values = validate_instantiation(control.descriptor, inst)
    return control.apply(state, values, assets)


def apply_post(image: np.ndarray, inst: ControlInstantiation,
               registry: ControlRegistry, rng: np.random.Generator,
               warnings: list | None = None) -> np.ndarray:
    control = registry.get(inst.control)
    if control.kind != "post":
        raise ControlError(f"control {inst.control!r} is not a post control")
    values = validate_instantiation(control.descriptor, inst)
    return control.apply(image, values, rng, [] if warnings is None else warnings)


def compose(state: SceneState, instantiations, registry: ControlRegistry,
            assets: AssetLibrary) -> SceneState:
    """Apply rendered instantiations in order; per-control errors get the
    failing control's position attached."""
    for index, inst in enumerate(instantiations):
        try:
            state = apply_rendered(state, inst, registry, assets)
        except ControlError as exc:
            raise ControlError(f"control[{index}] {inst.control!r}: {exc}") from exc
    return state


def post_rng(experiment_seed: int, configuration_id: int, control_index: int):
    """Reruns are bit-identical: post randomness is keyed on the experiment
    seed, the configuration id, and the control's position in the chain."""
    return np.random.default_rng(
        (int(experiment_seed), int(configuration_id), int(control_index))
    )


def apply_post_chain(image: np.ndarray, instantiations, registry: ControlRegistry,
                     experiment_seed: int, configuration_id: int,
                     warnings: list | None = None) -> np.ndarray:
    for index, inst in enumerate(instantiations):
        try:
            image = apply_post(
                image, inst, registry,
                post_rng(experiment_seed, configuration_id, index), warnings,
            )
        except ControlError as exc:
            raise ControlError(f"control[{index}] {inst.control!r}: {exc}") from exc
    return image
