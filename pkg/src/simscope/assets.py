"""Asset ingestion and validation: meshes, environments, textures.

Meshes are a strict Wavefront OBJ subset (``v``/``vt``/``vn``/``f`` with
triangular faces only; quads are rejected rather than auto-triangulated).
Backgrounds and textures load from PNG or binary PPM (P6); images become
float32 RGB in [0, 1], interpreted as linear radiance.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import AssetError, MeshParseError
from .geometry import bounding_sphere


def _wrap_unit(x: float) -> float:
    # Values already inside [0, 1] are kept verbatim (1.0 stays 1.0, it does
    # not wrap to 0); everything else is wrapped by its fractional part.
    if 0.0 <= x <= 1.0:
        return x
    return x - math.floor(x)


@dataclass(frozen=True)
class MeshAsset:
    """A validated triangle mesh plus the class labels accepted as correct.

    ``triangles`` has shape (n, 3, 3): per corner (vertex, uv, normal)
    indices, normal index -1 meaning "use the computed face normal".
    ``opening`` optionally annotates an interior opening (for the liquid
    fill control): dict with cx, cz, y_bottom, y_top, radius in object space.
    """

    name: str
    label_set: frozenset[str]
    vertices: np.ndarray  # (nv, 3) float64
    uvs: np.ndarray  # (nt_uv, 2) float64, wrapped into [0, 1]
    normals: np.ndarray | None  # (nn, 3) float64 unit vectors, or None
    triangles: np.ndarray  # (nf, 3, 3) int64
    base_texture: str | None = None
    opening: dict | None = None

    def __post_init__(self):
        if not self.label_set:
            raise AssetError(f"mesh {self.name!r}: label_set is empty")
        if len(self.triangles) < 1:
            raise AssetError(f"mesh {self.name!r}: no triangles")
        tri = self.triangles
        if tri[:, :, 0].min() < 0 or tri[:, :, 0].max() >= len(self.vertices):
            raise AssetError(f"mesh {self.name!r}: vertex index out of range")
        if tri[:, :, 1].min() < 0 or tri[:, :, 1].max() >= len(self.uvs):
            raise AssetError(f"mesh {self.name!r}: uv index out of range")
        n_normals = 0 if self.normals is None else len(self.normals)
        ni = tri[:, :, 2]
        if ni.max() >= n_normals or ni.min() < -1:
            raise AssetError(f"mesh {self.name!r}: normal index out of range")
        if self.uvs.size and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
            raise AssetError(f"mesh {self.name!r}: uv outside [0,1] after wrapping")

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        return bounding_sphere(self.vertices)

    def face_normals(self) -> np.ndarray:
        """Per-face unit normals from winding order (degenerate faces get 0)."""
        v = self.vertices[self.triangles[:, :, 0]]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


@dataclass(frozen=True)
class EnvironmentAsset:
    """Scene background: an equirectangular radiance image or a flat color."""

    name: str
    tags: tuple[str, ...] = ()
    image: np.ndarray | None = None  # (h, w, 3) float32, w == 2*h
    color: tuple[float, float, float] | None = None
    ambient_scale: float = 1.0

    def __post_init__(self):
        if (self.image is None) == (self.color is None):
            raise AssetError(
                f"environment {self.name!r}: exactly one of image/color required"
            )
        if self.ambient_scale < 0:
            raise AssetError(f"environment {self.name!r}: ambient_scale < 0")
        if self.image is not None:
            h, w = self.image.shape[:2]
            if w != 2 * h:
                raise AssetError(
                    f"environment {self.name!r}: equirectangular aspect must be "
                    f"exactly 2:1, got {w}x{h}"
                )
            if self.image.min() < 0:
                raise AssetError(f"environment {self.name!r}: negative radiance")
        else:
            if min(self.color) < 0 or max(self.color) > 1:
                raise AssetError(f"environment {self.name!r}: color outside [0,1]")

    def mean_radiance(self) -> np.ndarray:
        """Per-channel mean radiance; the ambient term is this x ambient_scale."""
        if self.color is not None:
            return np.asarray(self.color, dtype=np.float32)
        return self.image.reshape(-1, 3).mean(axis=0).astype(np.float32)


@dataclass(frozen=True)
class TextureAsset:
    name: str
    image: np.ndarray  # (h, w, 3) float32 in [0, 1]
    tiled: bool = True

    def __post_init__(self):
        if self.image.ndim != 3 or 0 in self.image.shape[:2]:
            raise AssetError(f"texture {self.name!r}: empty image")


def solid_texture(name: str, color, size: int = 4) -> TextureAsset:
    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = np.asarray(color, dtype=np.float32)
    return TextureAsset(name=name, image=img)


# ---------------------------------------------------------------------------
# image IO


def read_image(path: str) -> np.ndarray:
    """Load PNG or binary PPM as float32 RGB in [0, 1]."""
    if str(path).lower().endswith((".ppm", ".pnm")):
        with open(path, "rb") as f:
            return _read_ppm(f.read(), path)
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise AssetError(f"cannot decode image {path}: {exc}") from exc
    return rgb


def _read_ppm(data: bytes, path: str) -> np.ndarray:
    # Binary P6 only; header tokens may be separated by whitespace/comments.
    if not data.startswith(b"P6"):
        raise AssetError(f"{path}: not a binary P6 PPM")
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise AssetError(f"{path}: only maxval 255 PPM supported")
    expected = width * height * 3
    if len(data) - pos < expected:
        raise AssetError(f"{path}: truncated PPM payload")
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    return pixels.reshape(height, width, 3).astype(np.float32) / 255.0


def write_ppm(path: str, image: np.ndarray) -> None:
    data = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def linear_to_srgb(image: np.ndarray) -> np.ndarray:
    img = np.clip(image, 0.0, 1.0)
    return np.where(img <= 0.0031308, img * 12.92, 1.055 * img ** (1 / 2.4) - 0.055)


def encode_png(image: np.ndarray, gamma: bool = True) -> bytes:
    """Encode a linear float RGB buffer as PNG bytes (sRGB by default)."""
    img = linear_to_srgb(image) if gamma else np.clip(image, 0.0, 1.0)
    data = (img * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# loaders


def load_mesh(path: str, name=None, labels=None, base_texture=None, opening=None) -> MeshAsset:
    """Parse and validate an OBJ-subset mesh file.

    Faces must be triangles with explicit texture coordinates
    (``f v/vt [v/vt/vn]``); indices are 1-based per the OBJ convention,
    negative indices are not supported.
    """
    if not os.path.isfile(path):
        raise AssetError(f"mesh file not found: {path}")
    name = name or os.path.splitext(os.path.basename(path))[0]
    labels = frozenset(labels) if labels else frozenset({name})

    vertices, uvs, normals, triangles = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            if tag == "v":
                vertices.append(_parse_floats(args, 3, lineno, "v"))
            elif tag == "vt":
                u, v = _parse_floats(args[:2], 2, lineno, "vt")
                uvs.append((_wrap_unit(u), _wrap_unit(v)))
            elif tag == "vn":
                normals.append(_parse_floats(args, 3, lineno, "vn"))
            elif tag == "f":
                if len(args) != 3:
                    raise MeshParseError(
                        f"face with {len(args)} vertices; only triangles accepted",
                        line=lineno,
                    )
                triangles.append([_parse_face_corner(a, lineno) for a in args])
            # other OBJ tags (o, g, s, usemtl, mtllib) are ignored

    if not triangles:
        raise MeshParseError("no faces found", line=None)
    tri = np.asarray(triangles, dtype=np.int64)
    nv, nt, nn = len(vertices), len(uvs), len(normals)
    for fi, face in enumerate(tri):
        for vi, ti, ni in face:
            if not 0 <= vi < nv:
                raise MeshParseError(f"vertex index {vi + 1} out of range (have {nv})")
            if not 0 <= ti < nt:
                raise MeshParseError(f"uv index {ti + 1} out of range (have {nt})")
            if ni != -1 and not 0 <= ni < nn:
                raise MeshParseError(f"normal index {ni + 1} out of range (have {nn})")

    normal_arr = None
    if normals:
        normal_arr = np.asarray(normals, dtype=np.float64)
        lengths = np.linalg.norm(normal_arr, axis=1, keepdims=True)
        if (lengths == 0).any():
            raise MeshParseError("zero-length vn normal")
        normal_arr = normal_arr / lengths

    return MeshAsset(
        name=name,
        label_set=labels,
        vertices=np.asarray(vertices, dtype=np.float64),
        uvs=np.asarray(uvs, dtype=np.float64),
        normals=normal_arr,
        triangles=tri,
        base_texture=base_texture,
        opening=dict(opening) if opening else None,
    )


def _parse_floats(args, n, lineno, tag):
    if len(args) < n:
        raise MeshParseError(f"{tag} needs {n} numbers", line=lineno)
    try:
        return tuple(float(a) for a in args[:n])
    except ValueError as exc:
        raise MeshParseError(f"bad number in {tag}: {exc}", line=lineno) from exc


def _parse_face_corner(token: str, lineno: int):
    fields = token.split("/")
    if len(fields) < 2 or not fields[1]:
        raise MeshParseError(
            f"face corner {token!r} lacks a texture coordinate", line=lineno
        )
    try:
        vi = int(fields[0]) - 1
        ti = int(fields[1]) - 1
        ni = int(fields[2]) - 1 if len(fields) > 2 and fields[2] else -1
    except ValueError as exc:
        raise MeshParseError(f"bad face corner {token!r}", line=lineno) from exc
    if vi < 0 or ti < 0 or (ni < -1):
        raise MeshParseError(
            f"face corner {token!r}: negative indices unsupported", line=lineno
        )
    return (vi, ti, ni)


def load_environment(
    path_or_color, name=None, tags=(), ambient_scale=1.0
) -> EnvironmentAsset:
    """Load an equirectangular background image or build a flat-color one."""
    if isinstance(path_or_color, (tuple, list)) and len(path_or_color) == 3:
        color = tuple(float(c) for c in path_or_color)
        return EnvironmentAsset(
            name=name or "uniform",
            tags=tuple(tags),
            color=color,
            ambient_scale=ambient_scale,
        )
    path = str(path_or_color)
    image = read_image(path)
    return EnvironmentAsset(
        name=name or os.path.splitext(os.path.basename(path))[0],
        tags=tuple(tags),
        image=image,
        ambient_scale=ambient_scale,
    )


def load_texture(path: str, name=None, tiled=True) -> TextureAsset:
    return TextureAsset(
        name=name or os.path.splitext(os.path.basename(path))[0],
        image=read_image(path).astype(np.float32),
        tiled=tiled,
    )


@dataclass
class AssetLibrary:
    """Name-keyed registries handed to controls and the renderer."""

    meshes: dict[str, MeshAsset] = field(default_factory=dict)
    environments: dict[str, EnvironmentAsset] = field(default_factory=dict)
    textures: dict[str, TextureAsset] = field(default_factory=dict)

    def add_mesh(self, mesh: MeshAsset):
        self.meshes[mesh.name] = mesh

    def add_environment(self, env: EnvironmentAsset):
        self.environments[env.name] = env

    def add_texture(self, tex: TextureAsset):
        self.textures[tex.name] = tex

    def mesh(self, name: str) -> MeshAsset:
        try:
            return self.meshes[name]
        except KeyError:
            raise AssetError(f"unknown mesh {name!r}") from None

    def environment(self, name: str) -> EnvironmentAsset:
        try:
            return self.environments[name]
        except KeyError:
            raise AssetError(f"unknown environment {name!r}") from None

    def texture(self, name: str) -> TextureAsset:
        try:
            return self.textures[name]
        except KeyError:
            raise AssetError(f"unknown texture {name!r}") from None
