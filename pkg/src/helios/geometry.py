"""Triangle-mesh geometry: vectors, meshes, rigid+scale transforms, OBJ import.

World frame convention used across the package: X = East, Y = North, Z = up.
Angles are degrees unless noted otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA_M2 = 1e-12

__all__ = [
    "DEGENERATE_AREA_M2",
    "GeometryError",
    "ObjParseError",
    "Mesh",
    "Transform",
    "vec3",
    "unit",
    "parse_obj",
    "transform_mesh",
]


class GeometryError(ValueError):
    """Invalid geometric data (bad indices, degenerate input, non-finite values)."""


class ObjParseError(GeometryError):
    """Malformed OBJ content; message carries the 1-based line number."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Finite 3-vector as a float64 array."""
    v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"non-finite vector components: {v}")
    return v


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize v; rejects near-zero vectors."""
    n = float(np.linalg.norm(v))
    if n < 1e-300:
        raise GeometryError("cannot normalize zero-length vector")
    return np.asarray(v, dtype=np.float64) / n


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Areas of the given (M,3) index triples over (N,3) vertices."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    vertices: (N,3) float64, meters. triangles: (M,3) int32 vertex indices.
    Degenerate triangles (area <= 1e-12 m^2) are dropped with a warning;
    out-of-range indices are an error.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise GeometryError(f"vertices must be (N,3), got {verts.shape}")
        if tris.size == 0:
            tris = tris.reshape(0, 3)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise GeometryError(f"triangles must be (M,3), got {tris.shape}")
        if not np.all(np.isfinite(verts)):
            raise GeometryError("non-finite vertex coordinates")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise GeometryError("triangle index out of range")
        if tris.size:
            keep = triangle_areas(verts, tris) > DEGENERATE_AREA_M2
            if not np.all(keep):
                warnings.warn(
                    f"dropped {int((~keep).sum())} degenerate triangle(s)",
                    stacklevel=3,
                )
                tris = tris[keep]
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def world_triangles(self) -> np.ndarray:
        """(M,3,3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]


def _rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def _rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class Transform:
    """Scale, then rotate (Euler ZYX, i.e. R = Rz @ Ry @ Rx), then translate.

    rotation_deg is stored in the application's JSON order [z, y, x].
    """

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation_deg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation_deg, dtype=np.float64).reshape(3)
        s = np.asarray(self.scale, dtype=np.float64).reshape(3)
        for name, v in (("translation", t), ("rotation_deg", r), ("scale", s)):
            if not np.all(np.isfinite(v)):
                raise GeometryError(f"non-finite {name}: {v}")
        if np.any(s <= 0):
            raise GeometryError(f"scale components must be > 0, got {s}")
        for name, v in (("translation", t), ("rotation_deg", r), ("scale", s)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def rotation_matrix(self) -> np.ndarray:
        rz, ry, rx = self.rotation_deg
        return _rot_z(rz) @ _rot_y(ry) @ _rot_x(rx)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N,3) or (3,) points: scale -> rotate -> translate."""
        p = np.asarray(points, dtype=np.float64)
        return (p * self.scale) @ self.rotation_matrix.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        """Exact inverse of apply (translate back, unrotate, unscale)."""
        p = np.asarray(points, dtype=np.float64)
        return ((p - self.translation) @ self.rotation_matrix) / self.scale

    @staticmethod
    def identity() -> "Transform":
        return Transform()


def transform_mesh(mesh: Mesh, t: Transform) -> Mesh:
    """New mesh with every vertex mapped; triangle topology unchanged."""
    verts = t.apply(mesh.vertices)
    out = Mesh.__new__(Mesh)
    verts = np.ascontiguousarray(verts)
    verts.setflags(write=False)
    object.__setattr__(out, "vertices", verts)
    object.__setattr__(out, "triangles", mesh.triangles)
    return out


def _parse_face_vertex(token: str, n_vertices: int, line_no: int) -> int:
    # accepts "i", "i/t", "i//n", "i/t/n"; 1-based, negative = from the end
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjParseError(f"malformed face vertex '{token}', line {line_no}") from None
    if idx > 0:
        resolved = idx - 1
    elif idx < 0:
        resolved = n_vertices + idx
    else:
        raise ObjParseError(f"face index 0 is invalid, line {line_no}")
    if resolved < 0 or resolved >= n_vertices:
        raise ObjParseError(f"face index out of range, line {line_no}")
    return resolved


def parse_obj(text: str) -> Mesh:
    """Parse the `v`/`f` subset of Wavefront OBJ.

    Faces with more than 3 vertices are fan-triangulated around the first
    vertex. Normals, texture coordinates, materials and groups are ignored.
    Raises ObjParseError (with line number) on malformed input or if the
    result has no vertices or no faces.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "v":
            if len(parts) < 4:
                raise ObjParseError(f"malformed vertex line, line {line_no}")
            try:
                x, y, z = (float(p) for p in parts[1:4])
            except ValueError:
                raise ObjParseError(f"malformed vertex line, line {line_no}") from None
            vertices.append((x, y, z))
        elif key == "f":
            if len(parts) < 4:
                raise ObjParseError(f"face needs at least 3 vertices, line {line_no}")
            idx = [_parse_face_vertex(tok, len(vertices), line_no) for tok in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # all other record types are intentionally ignored
    if not vertices:
        raise ObjParseError("empty mesh: no vertices, line 1")
    if not faces:
        raise ObjParseError("empty mesh: no faces, line 1")
    return Mesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int32))
