"""Software rasterization: per-view G-buffers, UV-atlas texel geometry, previews.

Coverage uses a top-left fill rule on pixel centers, so shared triangle
edges are claimed exactly once and output is independent of traversal
order. Depth is distance along the view ray (not NDC z); depth ties go to
the lower triangle index. No anti-aliasing anywhere: determinism outranks
edge quality here.

Sample-space convention: pixel (row r, col c) has its center at continuous
coordinates (x=c, y=r); world points map in via ``project_to_view`` and UVs
via ``uv_to_sample``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import View, camera_basis, camera_position
from .geometry import TriMesh, compute_vertex_normals, triangle_areas


@dataclass
class GBuffer:
    """Per-view geometry images. Background: depth=+inf, normal=position=0."""

    normal_map: np.ndarray  # (H, W, 3) unit vectors on foreground
    position_map: np.ndarray  # (H, W, 3) world points
    depth: np.ndarray  # (H, W) distance along the view ray, +inf background
    mask: np.ndarray  # (H, W) bool foreground
    view_id: int


@dataclass
class TexelGeometry:
    """Per-texel surface samples over the UV atlas."""

    resolution: int
    position: np.ndarray  # (N, N, 3) world point of occupied texels
    normal: np.ndarray  # (N, N, 3) unit normal of occupied texels
    occupied: np.ndarray  # (N, N) bool
    triangle_id: np.ndarray  # (N, N) int32, -1 where unoccupied
    conflicts: int = 0  # overlapping UV claims resolved by lower index


def ensure_normals(mesh: TriMesh) -> TriMesh:
    return mesh if mesh.vertex_normals is not None else compute_vertex_normals(mesh)


def project_to_view(view: View, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points to sample coords (x, y) and ray depth."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    right, up, forward = camera_basis(view)
    rel = pts - camera_position(view)
    xv = rel @ right
    yv = rel @ up
    depth = rel @ forward
    res = view.resolution
    x = (xv / view.half_extent + 1.0) * 0.5 * res - 0.5
    y = (-yv / view.half_extent + 1.0) * 0.5 * res - 0.5
    return x, y, depth


def uv_to_sample(uv: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Map UVs in [0,1] to atlas sample coords; v runs bottom-up, rows top-down."""
    uv = np.asarray(uv, dtype=np.float64)
    x = uv[..., 0] * resolution - 0.5
    y = (1.0 - uv[..., 1]) * resolution - 0.5
    return x, y


def _edge_inclusive(ax, ay, bx, by) -> bool:
    # Top-left rule for y-down, positively oriented triangles: a horizontal
    # edge running +x is a top edge, an edge running -y is a left edge.
    dx = bx - ax
    dy = by - ay
    return dy < 0.0 or (dy == 0.0 and dx > 0.0)


def rasterize_triangles(
    verts_xy: np.ndarray,
    verts_depth: np.ndarray | None,
    width: int,
    height: int,
    *,
    skip: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Scanline-free triangle fill with z-buffering over pixel centers.

    Parameters
    ----------
    verts_xy : (F, 3, 2) sample-space triangle corners.
    verts_depth : (F, 3) per-corner ray depth, or None for depthless fill
        (UV atlas mode: overlaps then count as conflicts and the lower
        triangle index wins).
    skip : optional (F,) bool, triangles to drop (e.g. zero 3D area).

    Returns
    -------
    (owner, bary, depth, conflicts): owner (H, W) int32 (-1 empty),
    bary (H, W, 3) float64, depth (H, W) float64 (+inf empty), and the
    number of conflicting claims in depthless mode.
    """
    owner = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), np.inf, dtype=np.float64)
    conflicts = 0
    depthless = verts_depth is None

    for tid in range(verts_xy.shape[0]):
        if skip is not None and skip[tid]:
            continue
        tri = verts_xy[tid]
        ax, ay = tri[0]
        bx, by = tri[1]
        cx, cy = tri[2]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            # Reorder to positive orientation; remember the swap for weights.
            bx, by, cx, cy = cx, cy, bx, by
            area2 = -area2
            swapped = True
        else:
            swapped = False

        x0 = max(int(np.ceil(min(ax, bx, cx))), 0)
        x1 = min(int(np.floor(max(ax, bx, cx))), width - 1)
        y0 = max(int(np.ceil(min(ay, by, cy))), 0)
        y1 = min(int(np.floor(max(ay, by, cy))), height - 1)
        if x0 > x1 or y0 > y1:
            continue

        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        px, py = np.meshgrid(xs, ys)

        # Edge functions; interior is >= 0, boundary kept only on top-left edges.
        e_ab = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        e_bc = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        e_ca = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        inside = (
            ((e_ab > 0) | ((e_ab == 0) & _edge_inclusive(ax, ay, bx, by)))
            & ((e_bc > 0) | ((e_bc == 0) & _edge_inclusive(bx, by, cx, cy)))
            & ((e_ca > 0) | ((e_ca == 0) & _edge_inclusive(cx, cy, ax, ay)))
        )
        if not inside.any():
            continue

        wa = e_bc / area2
        wb = e_ca / area2
        wc = e_ab / area2
        if swapped:
            wb, wc = wc, wb

        osl = owner[y0 : y1 + 1, x0 : x1 + 1]
        dsl = depth[y0 : y1 + 1, x0 : x1 + 1]
        bsl = bary[y0 : y1 + 1, x0 : x1 + 1]

        if depthless:
            free = inside & (osl < 0)
            conflicts += int(np.count_nonzero(inside & (osl >= 0)))
            update = free
            d = None
        else:
            d = (
                wa * verts_depth[tid, 0]
                + wb * verts_depth[tid, 1]
                + wc * verts_depth[tid, 2]
            )
            # Strict < keeps the earlier (lower-index) triangle on exact ties.
            update = inside & (d < dsl)

        if not update.any():
            continue
        osl[update] = tid
        if d is not None:
            dsl[update] = d[update]
        bsl[update, 0] = wa[update]
        bsl[update, 1] = wb[update]
        bsl[update, 2] = wc[update]

    return owner, bary, depth, conflicts


def _interpolate(owner, bary, corner_values):
    """Gather per-corner values (F, 3, K) into an owner/bary image."""
    hit = owner >= 0
    out = np.zeros(owner.shape + (corner_values.shape[2],), dtype=np.float64)
    tid = owner[hit]
    w = bary[hit]
    vals = corner_values[tid]  # (M, 3, K)
    out[hit] = np.einsum("mk,mkc->mc", w, vals)
    return out


def render_gbuffer(mesh: TriMesh, view: View) -> GBuffer:
    """Rasterize normal/position/depth/mask maps for one view.

    Back faces render too (open surfaces are textured from both sides);
    facing decisions belong to back-projection, not here.
    """
    mesh = ensure_normals(mesh)
    res = view.resolution
    x, y, d = project_to_view(view, mesh.positions)
    tri = mesh.triangles
    verts_xy = np.stack([x[tri], y[tri]], axis=-1)
    verts_depth = d[tri]
    degenerate = triangle_areas(mesh) == 0.0

    owner, bary, depth, _ = rasterize_triangles(
        verts_xy, verts_depth, res, res, skip=degenerate
    )
    mask = owner >= 0

    corner_pos = mesh.positions[tri]
    corner_nrm = mesh.vertex_normals[tri]
    position = _interpolate(owner, bary, corner_pos)
    normal = _interpolate(owner, bary, corner_nrm)
    lengths = np.linalg.norm(normal[mask], axis=1)
    lengths[lengths == 0.0] = 1.0
    normal[mask] /= lengths[:, None]

    return GBuffer(
        normal_map=normal,
        position_map=position,
        depth=depth,
        mask=mask,
        view_id=view.id,
    )


def rasterize_uv_atlas(mesh: TriMesh, resolution: int) -> TexelGeometry:
    """Rasterize every triangle into UV space, recording per-texel geometry.

    Overlapping UV claims are resolved toward the lower triangle index and
    counted in ``conflicts``.
    """
    if resolution <= 0:
        raise ValueError("atlas resolution must be positive")
    mesh = ensure_normals(mesh)
    ux, uy = uv_to_sample(mesh.corner_uvs, resolution)
    verts_xy = np.stack([ux, uy], axis=-1)  # (F, 3, 2)
    degenerate = triangle_areas(mesh) == 0.0

    owner, bary, _, conflicts = rasterize_triangles(
        verts_xy, None, resolution, resolution, skip=degenerate
    )
    occupied = owner >= 0
    if not occupied.any():
        raise ValueError("empty UV atlas")

    tri = mesh.triangles
    corner_pos = mesh.positions[tri]
    corner_nrm = mesh.vertex_normals[tri]
    position = _interpolate(owner, bary, corner_pos)
    normal = _interpolate(owner, bary, corner_nrm)
    lengths = np.linalg.norm(normal[occupied], axis=1)
    lengths[lengths == 0.0] = 1.0
    normal[occupied] /= lengths[:, None]

    return TexelGeometry(
        resolution=resolution,
        position=position,
        normal=normal,
        occupied=occupied,
        triangle_id=owner,
        conflicts=conflicts,
    )


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamp-to-edge bilinear lookup at continuous sample coords."""
    img = np.asarray(image, dtype=np.float64)
    single = img.ndim == 2
    if single:
        img = img[:, :, None]
    h, w = img.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, dtype=np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, dtype=np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out[..., 0] if single else out


def sample_depth_bilinear(depth: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear depth lookup that returns +inf if any tap is background."""
    h, w = depth.shape
    xc = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    yc = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.int64), w - 2) if w > 1 else np.zeros_like(xc, dtype=np.int64)
    y0 = np.minimum(np.floor(yc).astype(np.int64), h - 2) if h > 1 else np.zeros_like(yc, dtype=np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    taps = np.stack([depth[y0, x0], depth[y0, x1], depth[y1, x0], depth[y1, x1]])
    finite = np.isfinite(taps).all(axis=0)
    fx = xc - x0
    fy = yc - y0
    safe = np.where(np.isfinite(taps), taps, 0.0)
    top = safe[0] * (1 - fx) + safe[1] * fx
    bot = safe[2] * (1 - fx) + safe[3] * fx
    value = top * (1 - fy) + bot * fy
    return np.where(finite, value, np.inf)


def render_view_uv(mesh: TriMesh, view: View) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel interpolated UV map plus foreground mask for one view."""
    mesh = ensure_normals(mesh)
    res = view.resolution
    x, y, d = project_to_view(view, mesh.positions)
    tri = mesh.triangles
    verts_xy = np.stack([x[tri], y[tri]], axis=-1)
    verts_depth = d[tri]
    degenerate = triangle_areas(mesh) == 0.0
    owner, bary, _, _ = rasterize_triangles(
        verts_xy, verts_depth, res, res, skip=degenerate
    )
    uv = _interpolate(owner, bary, mesh.corner_uvs)
    return uv, owner >= 0


def render_texture_image(
    mesh: TriMesh,
    texture: np.ndarray,
    view: View,
    *,
    uv_map: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Unlit render of an (N, N, C) or (N, N) UV-space map from a view.

    Background pixels are exactly zero. Pass a cached ``uv_map`` from
    ``render_view_uv`` to skip re-rasterizing the same mesh/view pair.
    """
    tex = np.asarray(texture, dtype=np.float64)
    n = tex.shape[0]
    if tex.shape[1] != n:
        raise ValueError("texture must be square")
    uv, mask = uv_map if uv_map is not None else render_view_uv(mesh, view)
    x, y = uv_to_sample(uv, n)
    image_shape = mask.shape + (() if tex.ndim == 2 else (tex.shape[2],))
    image = np.zeros(image_shape, dtype=np.float64)
    image[mask] = bilinear_sample(tex, x[mask], y[mask])
    return image, mask


def render_preview(mesh: TriMesh, textures, view: View, **kwargs):
    """Unlit albedo preview of a texture set; returns (image, mask)."""
    textures.validate()
    return render_texture_image(mesh, textures.albedo, view, **kwargs)
