"""Built-in software renderer.

A deterministic scanline rasterizer: perspective projection, z-buffer
hidden-surface removal, perspective-correct UV interpolation, ambient plus
Lambertian directional shading, and environment-sampled backgrounds. Depth
is camera-space Euclidean distance (not NDC z) so depth-style evaluators
can consume it directly. No shadows, reflections, or tone mapping; fidelity
beyond this is the job of external render backends speaking the wire
protocol.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .assets import AssetLibrary, EnvironmentAsset, MeshAsset, TextureAsset
from .controls import liquid_color
from .errors import RenderError
from .geometry import camera_basis, horizontal_fov, rotation_ypr
from .scene import SceneState

NEAR_PLANE = 1e-3
UV_SENTINEL = -1.0
LIQUID_DISC_SEGMENTS = 32


@dataclass
class RenderOutput:
    """All buffers share one resolution; a pixel is on the object iff its uv
    is non-sentinel iff its depth is finite."""

    rgb: np.ndarray  # (h, w, 3) float32 in [0, 1], linear
    uv: np.ndarray  # (h, w, 3) float32: (u, v, triangle id), sentinel -1
    depth: np.ndarray  # (h, w) float32, +inf at background
    segmentation: np.ndarray  # (h, w) bool
    render_time: float = 0.0

    def validate(self) -> None:
        h, w = self.segmentation.shape
        if self.rgb.shape != (h, w, 3) or self.uv.shape != (h, w, 3) \
                or self.depth.shape != (h, w):
            raise RenderError("render buffers disagree on resolution")
        on_object = self.segmentation
        if not np.array_equal(on_object, np.isfinite(self.depth)):
            raise RenderError("segmentation/depth buffers inconsistent")
        if not np.array_equal(on_object, self.uv[:, :, 2] != UV_SENTINEL):
            raise RenderError("segmentation/uv buffers inconsistent")

    @property
    def resolution(self) -> tuple[int, int]:
        h, w = self.segmentation.shape
        return (w, h)


def _lerp(a, b, t):
    # a + (b-a)*t keeps constant inputs exactly constant, which the shading
    # contract for uniform textures depends on
    return a + (b - a) * t


def _bilinear(image: np.ndarray, px, py, wrap_x: bool, wrap_y: bool):
    """Texel-center bilinear lookup; px/py are continuous pixel coords."""
    h, w = image.shape[:2]
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = (px - x0).astype(np.float32)[..., None]
    fy = (py - y0).astype(np.float32)[..., None]
    x1, y1 = x0 + 1, y0 + 1
    if wrap_x:
        x0, x1 = x0 % w, x1 % w
    else:
        x0, x1 = np.clip(x0, 0, w - 1), np.clip(x1, 0, w - 1)
    if wrap_y:
        y0, y1 = y0 % h, y1 % h
    else:
        y0, y1 = np.clip(y0, 0, h - 1), np.clip(y1, 0, h - 1)
    top = _lerp(image[y0, x0], image[y0, x1], fx)
    bottom = _lerp(image[y1, x0], image[y1, x1], fx)
    return _lerp(top, bottom, fy)


def sample_texture(texture: TextureAsset, u, v):
    """UV lookup with v=0 at the image bottom (OBJ convention)."""
    h, w = texture.image.shape[:2]
    px = np.asarray(u) * w - 0.5
    py = (1.0 - np.asarray(v)) * h - 0.5
    return _bilinear(texture.image, px, py, texture.tiled, texture.tiled)


def equirect_uv(direction: np.ndarray):
    """Longitude/latitude parameterization: (0,0,-1) is the image center,
    (0,1,0) the top edge; u wraps, v clamps at the poles."""
    d = np.asarray(direction, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    u = 0.5 + np.arctan2(x, -z) / (2.0 * math.pi)
    v = 0.5 - np.arcsin(np.clip(y, -1.0, 1.0)) / math.pi
    return u, v


def sample_equirect(direction, image: np.ndarray) -> np.ndarray:
    """RGB radiance along a unit direction from an equirectangular image."""
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if not np.allclose(norm, 1.0, atol=1e-6):
        raise RenderError("sample_equirect requires unit directions")
    u, v = equirect_uv(d)
    h, w = image.shape[:2]
    px = u * w - 0.5
    py = np.clip(v * h - 0.5, 0.0, h - 1.0)
    return _bilinear(image, px, py, wrap_x=True, wrap_y=False)


def sample_environment(env: EnvironmentAsset, directions: np.ndarray) -> np.ndarray:
    if env.color is not None:
        out = np.empty(directions.shape[:-1] + (3,), dtype=np.float32)
        out[:] = np.asarray(env.color, dtype=np.float32)
        return out
    return sample_equirect(directions, env.image).astype(np.float32)


def barycentric_uv(pixel, tri_screen, tri_uvs):
    """Perspective-correct UV at a pixel inside a projected triangle.

    ``tri_screen`` rows are (sx, sy, w) with w the positive perspective
    divisor (camera-space distance along -Z); equal w's reduce to affine
    interpolation. Degenerate (zero screen area) triangles are rejected.
    """
    tri_screen = np.asarray(tri_screen, dtype=np.float64)
    tri_uvs = np.asarray(tri_uvs, dtype=np.float64)
    px, py = float(pixel[0]), float(pixel[1])
    (x0, y0, w0), (x1, y1, w1), (x2, y2, w2) = tri_screen
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area == 0.0:
        raise RenderError("degenerate (zero-area) triangle")
    l0 = ((x1 - px) * (y2 - py) - (y1 - py) * (x2 - px)) / area
    l1 = ((x2 - px) * (y0 - py) - (y2 - py) * (x0 - px)) / area
    l2 = 1.0 - l0 - l1
    inv_w = np.array([1.0 / w0, 1.0 / w1, 1.0 / w2])
    weights = np.array([l0, l1, l2]) * inv_w
    weights /= weights.sum()
    return tuple(weights @ tri_uvs)


def _clip_near(attrs: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one triangle against z <= -near.

    ``attrs`` is (3, k) with columns [cam xyz, ...linear attributes]; camera
    z is column 2. Returns a fan of (3, k) triangles (possibly empty).
    """
    inside = attrs[:, 2] <= -NEAR_PLANE
    if inside.all():
        return [attrs]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        a, b = attrs[i], attrs[(i + 1) % 3]
        a_in, b_in = inside[i], inside[(i + 1) % 3]
        if a_in:
            poly.append(a)
        if a_in != b_in:
            t = (-NEAR_PLANE - a[2]) / (b[2] - a[2])
            poly.append(a + (b - a) * t)
    return [np.stack([poly[0], poly[i], poly[i + 1]])
            for i in range(1, len(poly) - 1)]


class _FrameBuffers:
    def __init__(self, width: int, height: int):
        self.rgb = np.zeros((height, width, 3), dtype=np.float32)
        self.uv = np.full((height, width, 3), UV_SENTINEL, dtype=np.float32)
        self.depth = np.full((height, width), np.inf, dtype=np.float32)
        self.seg = np.zeros((height, width), dtype=bool)
        self.width, self.height = width, height


def _rasterize_batch(buffers, cam_tris, uv_tris, normal_tris, tri_ids,
                     shade_fn):
    """Rasterize triangles given per-corner camera positions (n,3,3), UVs
    (n,3,2), world normals (n,3,3) and original triangle ids (n,). shade_fn
    maps (u, v, normals, cam_positions) arrays to RGB rows."""
    width, height = buffers.width, buffers.height
    for tri in range(len(cam_tris)):
        # columns: cam xyz (0:3), uv (3:5), world normal (5:8)
        attrs = np.concatenate(
            [cam_tris[tri], uv_tris[tri], normal_tris[tri]], axis=1
        )
        for piece in _clip_near(attrs):
            _rasterize_triangle(buffers, piece, float(tri_ids[tri]), shade_fn)


def _rasterize_triangle(buffers, attrs, tri_id, shade_fn):
    width, height = buffers.width, buffers.height
    cam = attrs[:, 0:3]
    inv_w = 1.0 / (-cam[:, 2])  # all z <= -near after clipping
    sx = (cam[:, 0] * inv_w / buffers.tan_h + 1.0) * width / 2.0
    sy = (1.0 - cam[:, 1] * inv_w / buffers.tan_v) * height / 2.0

    area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0])
    if area == 0.0:
        return
    x_lo = max(int(math.floor(sx.min() - 0.5)), 0)
    x_hi = min(int(math.ceil(sx.max() + 0.5)), width)
    y_lo = max(int(math.floor(sy.min() - 0.5)), 0)
    y_hi = min(int(math.ceil(sy.max() + 0.5)), height)
    if x_lo >= x_hi or y_lo >= y_hi:
        return

    px = np.arange(x_lo, x_hi) + 0.5
    py = (np.arange(y_lo, y_hi) + 0.5)[:, None]
    l0 = ((sx[1] - px) * (sy[2] - py) - (sy[1] - py) * (sx[2] - px)) / area
    l1 = ((sx[2] - px) * (sy[0] - py) - (sy[2] - py) * (sx[0] - px)) / area
    l2 = 1.0 - l0 - l1
    eps = 1e-12
    inside = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps)
    if not inside.any():
        return

    lam = np.stack([l0[inside], l1[inside], l2[inside]])  # (3, n)
    pw = lam * inv_w[:, None]
    denom = pw.sum(axis=0)
    weights = pw / denom  # perspective-correct corner weights, sum to 1

    cam_px = weights.T @ cam  # (n, 3) camera-space positions
    depth_px = np.linalg.norm(cam_px, axis=1).astype(np.float32)

    ys, xs = np.nonzero(inside)
    ys, xs = ys + y_lo, xs + x_lo
    closer = depth_px < buffers.depth[ys, xs]
    if not closer.any():
        return
    ys, xs = ys[closer], xs[closer]
    weights = weights[:, closer]
    cam_px = cam_px[closer]
    depth_px = depth_px[closer]

    uv_px = np.clip(weights.T @ attrs[:, 3:5], 0.0, 1.0)
    normal_px = weights.T @ attrs[:, 5:8]

    buffers.depth[ys, xs] = depth_px
    buffers.seg[ys, xs] = True
    buffers.uv[ys, xs, 0] = uv_px[:, 0].astype(np.float32)
    buffers.uv[ys, xs, 1] = uv_px[:, 1].astype(np.float32)
    buffers.uv[ys, xs, 2] = tri_id
    buffers.rgb[ys, xs] = shade_fn(uv_px[:, 0], uv_px[:, 1], normal_px, cam_px)


def render(state: SceneState, assets: AssetLibrary) -> RenderOutput:
    """Render one scene state. Pure: identical inputs produce bit-identical
    buffers, so renders may run on parallel workers with no shared state."""
    start = time.perf_counter()
    mesh = assets.mesh(state.mesh)
    env = assets.environment(state.environment)
    texture = None
    if state.active_texture is not None:
        texture = assets.texture(state.active_texture)
    elif mesh.base_texture is not None:
        texture = assets.texture(mesh.base_texture)

    width, height = state.resolution
    buffers = _FrameBuffers(width, height)
    buffers.tan_v = math.tan(state.fov / 2.0)
    buffers.tan_h = math.tan(horizontal_fov(state.fov, width, height) / 2.0)

    cam_pos = np.asarray(state.camera_position, dtype=np.float64)
    cam_from_world = camera_basis(cam_pos, state.camera_look_at)  # rows r,u,-f

    # background: one ray per pixel through the pixel center
    xs = (2.0 * (np.arange(width) + 0.5) / width - 1.0) * buffers.tan_h
    ys = (1.0 - 2.0 * (np.arange(height) + 0.5) / height) * buffers.tan_v
    dirs_cam = np.stack(
        np.broadcast_arrays(xs[None, :], ys[:, None], -1.0), axis=-1
    )
    dirs_cam /= np.linalg.norm(dirs_cam, axis=-1, keepdims=True)
    dirs_world = dirs_cam @ cam_from_world  # == R^T applied to each row
    buffers.rgb[:] = sample_environment(env, dirs_world)

    # object geometry to camera space
    model_r = rotation_ypr(*state.rotation)
    world_v = (mesh.vertices @ model_r.T) * state.scale + np.asarray(
        state.translation
    )
    cam_v = (world_v - cam_pos) @ cam_from_world.T

    tri = mesh.triangles
    cam_tris = cam_v[tri[:, :, 0]]  # (n, 3, 3)
    uv_tris = mesh.uvs[tri[:, :, 1]]  # (n, 3, 2)
    normal_tris = _corner_normals(mesh, model_r)

    ambient = env.mean_radiance() * np.float32(env.ambient_scale)
    light_dir = np.asarray(state.light_direction, dtype=np.float64)
    light_rgb = np.asarray(state.light_color, dtype=np.float32)
    intensity = np.float32(state.light_intensity)

    def shade(u, v, normals, cam_positions):
        if texture is not None:
            albedo = sample_texture(texture, u, v).astype(np.float32)
        else:
            albedo = np.full((len(u), 3), 0.8, dtype=np.float32)
        return _shade_lambert(albedo, normals, cam_positions, cam_from_world,
                              ambient, light_dir, light_rgb, intensity)

    _rasterize_batch(buffers, cam_tris, uv_tris, normal_tris,
                     np.arange(len(cam_tris)), shade)

    liquid = state.extras_map.get("liquid")
    if liquid is not None and mesh.opening is not None:
        disc_cam, disc_uv, disc_n = _liquid_disc(
            mesh.opening, liquid["fill"], model_r, state.scale,
            np.asarray(state.translation), cam_pos, cam_from_world,
        )
        blend = liquid_color(
            liquid["water"], liquid["milk"], liquid["coffee"]
        ).astype(np.float32)

        def shade_liquid(u, v, normals, cam_positions):
            albedo = np.tile(blend, (len(u), 1))
            return _shade_lambert(albedo, normals, cam_positions,
                                  cam_from_world, ambient, light_dir,
                                  light_rgb, intensity)

        _rasterize_batch(
            buffers, disc_cam, disc_uv, disc_n,
            np.arange(len(cam_tris), len(cam_tris) + len(disc_cam)),
            shade_liquid,
        )

    out = RenderOutput(
        rgb=np.clip(buffers.rgb, 0.0, 1.0),
        uv=buffers.uv,
        depth=buffers.depth,
        segmentation=buffers.seg,
        render_time=time.perf_counter() - start,
    )
    out.validate()
    return out


def _corner_normals(mesh: MeshAsset, model_r: np.ndarray) -> np.ndarray:
    """Per-corner world-space normals; faces without vn indices fall back to
    the winding-order face normal. Uniform scale keeps R a valid normal
    transform."""
    face_n = mesh.face_normals()
    tri = mesh.triangles
    corners = np.repeat(face_n[:, None, :], 3, axis=1)
    if mesh.normals is not None:
        ni = tri[:, :, 2]
        has = ni >= 0
        corners[has] = mesh.normals[ni[has]]
    return corners @ model_r.T


def _shade_lambert(albedo, normals, cam_positions, cam_from_world, ambient,
                   light_dir, light_rgb, intensity):
    # flip normals toward the camera so back-lit thin geometry stays visible
    to_cam_world = -(cam_positions @ cam_from_world)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    lengths[lengths == 0] = 1.0
    n = normals / lengths
    n = np.where((n * to_cam_world).sum(axis=1, keepdims=True) < 0, -n, n)
    diffuse = np.maximum(0.0, -(n @ light_dir)).astype(np.float32)
    shade = ambient + light_rgb * intensity * diffuse[:, None]
    return np.clip(albedo * shade, 0.0, 1.0).astype(np.float32)


def _liquid_disc(opening, fill, model_r, scale, translation, cam_pos,
                 cam_from_world):
    """Triangle fan for the liquid surface at the configured fill height."""
    cx, cz = float(opening["cx"]), float(opening["cz"])
    y = float(opening["y_bottom"]) + float(fill) * (
        float(opening["y_top"]) - float(opening["y_bottom"])
    )
    radius = float(opening["radius"])
    theta = np.linspace(0.0, 2.0 * math.pi, LIQUID_DISC_SEGMENTS, endpoint=False)
    ring = np.stack(
        [cx + radius * np.cos(theta), np.full_like(theta, y),
         cz + radius * np.sin(theta)], axis=1
    )
    center = np.array([[cx, y, cz]])
    obj_v = np.concatenate([center, ring])
    world_v = (obj_v @ model_r.T) * scale + translation
    cam_v = (world_v - cam_pos) @ cam_from_world.T

    # disc UV chart: unit square about the center
    uv = np.concatenate(
        [np.array([[0.5, 0.5]]),
         np.stack([0.5 + 0.5 * np.cos(theta), 0.5 + 0.5 * np.sin(theta)], axis=1)]
    )
    n_world = np.array([0.0, 1.0, 0.0]) @ model_r.T

    tris, uvs = [], []
    for i in range(LIQUID_DISC_SEGMENTS):
        j = 1 + i
        k = 1 + (i + 1) % LIQUID_DISC_SEGMENTS
        tris.append([cam_v[0], cam_v[j], cam_v[k]])
        uvs.append([uv[0], uv[j], uv[k]])
    n_tris = np.tile(n_world, (LIQUID_DISC_SEGMENTS, 3, 1))
    return np.asarray(tris), np.asarray(uvs), n_tris
