"""Triangle meshes with per-corner UVs: loading, validation, normalization.

All operations are pure. Input meshes are never mutated; every function
returns fresh arrays, so mesh values can be shared across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

_UV_SLACK = 1e-9


class ObjParseError(ValueError):
    """OBJ syntax or index error, carrying the 1-based source line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class TriMesh:
    """Indexed triangle mesh with UVs stored per triangle corner.

    Per-corner (rather than per-vertex) UVs let seams exist without
    duplicating seam vertices.
    """

    positions: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64 indices into positions
    corner_uvs: np.ndarray  # (F, 3, 2) float64 in [0, 1]
    vertex_normals: np.ndarray | None = None  # (V, 3) unit float64

    def validate(self) -> "TriMesh":
        """Check index bounds and UV range; clamps sub-1e-9 UV excursions."""
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        tri = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        uvs = np.asarray(self.corner_uvs, dtype=np.float64).reshape(-1, 3, 2)
        if tri.shape[0] != uvs.shape[0]:
            raise ValueError(
                f"triangle/UV count mismatch: {tri.shape[0]} vs {uvs.shape[0]}"
            )
        if tri.size and (tri.min() < 0 or tri.max() >= pos.shape[0]):
            raise ValueError("triangle index out of range")
        if uvs.size and (uvs.min() < -_UV_SLACK or uvs.max() > 1.0 + _UV_SLACK):
            raise ValueError("corner UV component outside [0, 1]")
        self.positions = pos
        self.triangles = tri
        self.corner_uvs = np.clip(uvs, 0.0, 1.0)
        return self

    @property
    def vertex_count(self) -> int:
        return self.positions.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if self.vertex_count == 0:
            raise ValueError("empty mesh has no bounding box")
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def aabb_diagonal(self) -> float:
        lo, hi = self.aabb()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class NormalizationTransform:
    """Centering translation plus uniform scale mapping a mesh to unit AABB."""

    center: np.ndarray  # (3,) original AABB center
    scale: float  # multiplier applied after centering, > 0

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center


def load_obj(path: str | Path) -> TriMesh:
    """Load a Wavefront OBJ with `v`/`vt`/`f` records.

    Polygon faces are fan-triangulated from their first vertex. Every face
    corner must carry a `vt` reference; `vn` records are ignored (normals
    are always recomputed).
    """
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    tri_rows: list[tuple[int, int, int]] = []
    uv_rows: list[tuple[int, int, int]] = []

    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        for line_no, raw in enumerate(handle, start=1):
            tokens = raw.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            kind = tokens[0]
            if kind == "v":
                if len(tokens) < 4:
                    raise ObjParseError(line_no, "vertex needs 3 coordinates")
                try:
                    positions.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ObjParseError(line_no, f"bad vertex coordinate in {raw!r}")
            elif kind == "vt":
                if len(tokens) < 3:
                    raise ObjParseError(line_no, "texture coordinate needs 2 values")
                try:
                    uvs.append([float(t) for t in tokens[1:3]])
                except ValueError:
                    raise ObjParseError(line_no, f"bad UV value in {raw!r}")
            elif kind == "f":
                corners = tokens[1:]
                if len(corners) < 3:
                    raise ObjParseError(line_no, "face needs at least 3 corners")
                parsed = [_parse_face_corner(c, line_no) for c in corners]
                for corner in parsed:
                    if corner[1] is None:
                        raise ObjParseError(line_no, "mesh lacks UVs")
                # Deterministic fan triangulation anchored at corner 0.
                for i in range(1, len(parsed) - 1):
                    fan = (parsed[0], parsed[i], parsed[i + 1])
                    vi = tuple(
                        _resolve_index(c[0], len(positions), line_no) for c in fan
                    )
                    ti = tuple(_resolve_index(c[1], len(uvs), line_no) for c in fan)
                    tri_rows.append(vi)
                    uv_rows.append(ti)
            # Other record types (vn, o, g, s, usemtl, ...) are ignored.

    if not tri_rows:
        raise ValueError(f"{path}: no faces found")
    mesh = TriMesh(
        positions=np.array(positions, dtype=np.float64),
        triangles=np.array(tri_rows, dtype=np.int64),
        corner_uvs=np.array(
            [[uvs[i] for i in row] for row in uv_rows], dtype=np.float64
        ),
    )
    return mesh.validate()


def _parse_face_corner(token: str, line_no: int) -> tuple[int, int | None]:
    parts = token.split("/")
    try:
        v = int(parts[0])
    except (ValueError, IndexError):
        raise ObjParseError(line_no, f"bad face corner {token!r}")
    vt: int | None = None
    if len(parts) > 1 and parts[1] != "":
        try:
            vt = int(parts[1])
        except ValueError:
            raise ObjParseError(line_no, f"bad face corner {token!r}")
    return v, vt


def _resolve_index(index_1based: int, count: int, line_no: int) -> int:
    if index_1based < 0:
        resolved = count + index_1based
    else:
        resolved = index_1based - 1
    if not 0 <= resolved < count:
        raise ObjParseError(line_no, f"index {index_1based} out of range (have {count})")
    return resolved


def normalize_to_unit(mesh: TriMesh) -> tuple[TriMesh, NormalizationTransform]:
    """Center the mesh at the origin and scale its AABB longest side to 1."""
    if mesh.vertex_count == 0:
        raise ValueError("degenerate mesh: no vertices")
    lo, hi = mesh.aabb()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise ValueError("degenerate mesh: all vertices coincident")
    center = (lo + hi) / 2.0
    transform = NormalizationTransform(center=center, scale=1.0 / longest)
    out = replace(
        mesh,
        positions=transform.apply(mesh.positions),
        triangles=mesh.triangles.copy(),
        corner_uvs=mesh.corner_uvs.copy(),
        vertex_normals=None
        if mesh.vertex_normals is None
        else mesh.vertex_normals.copy(),
    )
    return out, transform


def compute_vertex_normals(mesh: TriMesh) -> TriMesh:
    """Return a copy with area-weighted, unit-length vertex normals.

    Vertices touched only by zero-area triangles (or no triangle at all)
    fall back to (0, 0, 1) with a warning.
    """
    v0 = mesh.positions[mesh.triangles[:, 0]]
    v1 = mesh.positions[mesh.triangles[:, 1]]
    v2 = mesh.positions[mesh.triangles[:, 2]]
    # Cross product length is twice the triangle area, so summing raw cross
    # products is exactly area weighting.
    face_normals = np.cross(v1 - v0, v2 - v0)
    accum = np.zeros_like(mesh.positions)
    for corner in range(3):
        np.add.at(accum, mesh.triangles[:, corner], face_normals)
    lengths = np.linalg.norm(accum, axis=1)
    degenerate = lengths < 1e-20
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} vertices have no usable face normal; "
            "using (0, 0, 1)",
            stacklevel=2,
        )
        accum[degenerate] = (0.0, 0.0, 1.0)
        lengths[degenerate] = 1.0
    normals = accum / lengths[:, None]
    return replace(
        mesh,
        positions=mesh.positions.copy(),
        triangles=mesh.triangles.copy(),
        corner_uvs=mesh.corner_uvs.copy(),
        vertex_normals=normals,
    )


def triangle_areas(mesh: TriMesh) -> np.ndarray:
    """Per-triangle areas; zero marks triangles the rasterizer will skip."""
    v0 = mesh.positions[mesh.triangles[:, 0]]
    v1 = mesh.positions[mesh.triangles[:, 1]]
    v2 = mesh.positions[mesh.triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
