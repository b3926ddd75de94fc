"""Rotations and triangle meshes used throughout the toolkit.

Quaternions are scalar-first (w, x, y, z) and kept unit-norm. Rotation
matrices are 3x3 row-major acting on column vectors. All lengths are
millimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

_ORTHO_TOL = 1e-4


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Quaternion:
    """Unit rotation quaternion. q and -q describe the same rotation."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n < 1e-12:
            raise InvalidInputError(f"quaternion norm {n} too small to normalize")
        if abs(n - 1.0) > 1e-12:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, wxyz) -> "Quaternion":
        w, x, y, z = (float(v) for v in wxyz)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64)
        n = float(np.linalg.norm(axis))
        if n < 1e-12:
            raise InvalidInputError("rotation axis has near-zero norm")
        half = math.radians(angle_deg) / 2.0
        s = math.sin(half) / n
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_matrix(cls, matrix) -> "Quaternion":
        """Convert a rotation matrix, branching on the largest component."""
        m = np.asarray(matrix, dtype=np.float64)
        check_rotation(m)
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return cls(w, x, y, z)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        """Hamilton product; (a * b).rotate(p) == a.rotate(b.rotate(p))."""
        aw, ax, ay, az = self.w, self.x, self.y, self.z
        bw, bx, by, bz = other.w, other.x, other.y, other.z
        return Quaternion(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )

    def rotate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.to_matrix().T

    def sign_normalized(self) -> "Quaternion":
        """Flip sign so w >= 0; at w == 0 the first nonzero component is >= 0."""
        comps = (self.w, self.x, self.y, self.z)
        for c in comps:
            if c > 0.0:
                return self
            if c < 0.0:
                return Quaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def angle_deg_to(self, other: "Quaternion") -> float:
        """Geodesic angle between two rotations, in [0, 180] degrees.

        Uses atan2 on the relative rotation, which stays accurate near 0
        where acos of the dot product loses digits.
        """
        r = self.conjugate() * other
        v = math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z)
        return math.degrees(2.0 * math.atan2(v, abs(r.w)))

    def same_rotation(self, other: "Quaternion", tol_deg: float = 1e-6) -> bool:
        return self.angle_deg_to(other) <= tol_deg


def check_rotation(matrix: np.ndarray, tol: float = _ORTHO_TOL) -> np.ndarray:
    """Validate a proper rotation matrix; returns it as float64."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got {m.shape}")
    err = float(np.abs(m @ m.T - np.eye(3)).max())
    if err > tol:
        raise InvalidInputError(f"matrix is not orthonormal (max error {err:.3g})")
    det = float(np.linalg.det(m))
    if abs(det - 1.0) > tol:
        raise InvalidInputError(f"matrix determinant {det:.6f} != +1")
    return m


def rotation_angle_deg(matrix) -> float:
    """Geodesic rotation angle of a rotation matrix, in [0, 180] degrees.

    The arccos argument is clamped to [-1, 1] against floating-point
    overshoot near 0 and 180 degrees.
    """
    m = check_rotation(matrix)
    c = (float(np.trace(m)) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


@dataclass(frozen=True)
class MeshGeometry:
    """Triangle mesh in millimeters; faces index into vertices."""

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int32
    normals: np.ndarray | None = None  # (V, 3) unit vectors
    colors: np.ndarray | None = None  # (V, 3) in [0, 1]
    uvs: np.ndarray | None = None  # (V, 2)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidInputError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInputError(f"faces must be (F, 3), got {f.shape}")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidInputError("face indices out of range")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))
        for name, width in (("normals", 3), ("colors", 3), ("uvs", 2)):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (len(v), width):
                raise InvalidInputError(f"{name} must be (V, {width}), got {arr.shape}")
            object.__setattr__(self, name, _readonly(arr))
        if self.normals is not None and len(self.normals):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.abs(norms - 1.0).max() > 1e-4:
                raise InvalidInputError("per-vertex normals must be unit length")

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise InvalidInputError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangles(self) -> np.ndarray:
        """Vertex coordinates per face, shape (F, 3, 3)."""
        return self.vertices[self.faces]


def compute_vertex_normals(mesh: MeshGeometry) -> MeshGeometry:
    """Area-weighted vertex normals from face winding; zero rows become +z."""
    tri = mesh.triangles()
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    lens = np.linalg.norm(acc, axis=1)
    bad = lens < 1e-12
    acc[bad] = (0.0, 0.0, 1.0)
    lens[bad] = 1.0
    return MeshGeometry(
        mesh.vertices, mesh.faces, normals=acc / lens[:, None],
        colors=mesh.colors, uvs=mesh.uvs,
    )


def transform_mesh(mesh: MeshGeometry, rotation=None, translation=None) -> MeshGeometry:
    """Apply a rigid transform (rotation then translation) to a mesh."""
    v = mesh.vertices
    n = mesh.normals
    if rotation is not None:
        r = check_rotation(rotation)
        v = v @ r.T
        if n is not None:
            n = n @ r.T
    if translation is not None:
        v = v + np.asarray(translation, dtype=np.float64)
    return MeshGeometry(v, mesh.faces, normals=n, colors=mesh.colors, uvs=mesh.uvs)


def concatenate_meshes(meshes) -> MeshGeometry:
    """Merge meshes into one; colors default to mid-gray where missing."""
    meshes = list(meshes)
    if not meshes:
        raise InvalidInputError("nothing to concatenate")
    verts, faces, colors = [], [], []
    offset = 0
    any_colors = any(m.colors is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if any_colors:
            c = m.colors if m.colors is not None else np.full((m.vertex_count, 3), 0.5)
            colors.append(c)
        offset += m.vertex_count
    return MeshGeometry(
        np.vstack(verts),
        np.vstack(faces),
        colors=np.vstack(colors) if any_colors else None,
    )


def make_box(size, center=(0.0, 0.0, 0.0)) -> MeshGeometry:
    """Axis-aligned box with outward-wound faces."""
    sx, sy, sz = (float(s) / 2.0 for s in size)
    cx, cy, cz = (float(c) for c in center)
    corners = np.array(
        [
            [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
            [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
        ]
    ) + (cx, cy, cz)
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [3, 7, 6], [3, 6, 2],  # +y
            [0, 4, 7], [0, 7, 3],  # -x
            [1, 2, 6], [1, 6, 5],  # +x
        ],
        dtype=np.int32,
    )
    return MeshGeometry(corners, faces)


def make_cylinder(radius: float, height: float, segments: int = 12) -> MeshGeometry:
    """Closed cylinder along +y, base at y=0, capped with center fans."""
    if segments < 3:
        raise InvalidInputError("cylinder needs at least 3 segments")
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), np.zeros(segments), radius * np.sin(ang)], axis=1)
    bottom = ring.copy()
    top = ring + (0.0, height, 0.0)
    verts = np.vstack([bottom, top, [[0.0, 0.0, 0.0]], [[0.0, height, 0.0]]])
    bc = 2 * segments  # bottom cap center
    tc = 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        # side quad, wound outward
        faces.append([i, segments + j, j])
        faces.append([i, segments + i, segments + j])
        # caps: bottom faces -y, top faces +y
        faces.append([bc, i, j])
        faces.append([tc, segments + j, segments + i])
    return MeshGeometry(verts, np.array(faces, dtype=np.int32))


def make_icosphere(radius: float, subdivisions: int = 1) -> MeshGeometry:
    """Icosahedron subdivided and projected to the sphere."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius
    f = np.array(faces, dtype=np.int32)
    # orient faces outward: positive enclosed volume
    tri = v[f]
    volume = float(np.einsum("fi,fi->f", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum())
    if volume < 0:
        f = f[:, ::-1].copy()
    return MeshGeometry(v, f)


def save_obj(mesh: MeshGeometry, path) -> None:
    """Write a minimal OBJ; vertex colors use the 6-float `v` extension."""
    lines = []
    if mesh.colors is not None:
        for v, c in zip(mesh.vertices.tolist(), mesh.colors.tolist()):
            lines.append(f"v {v[0]!r} {v[1]!r} {v[2]!r} {c[0]!r} {c[1]!r} {c[2]!r}")
    else:
        for v in mesh.vertices.tolist():
            lines.append(f"v {v[0]!r} {v[1]!r} {v[2]!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> MeshGeometry:
    """Read OBJ vertices/faces; polygons are fan-triangulated."""
    verts, colors, faces = [], [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vals = [float(p) for p in parts[1:]]
            verts.append(vals[:3])
            if len(vals) >= 6:
                colors.append(vals[3:6])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise InvalidInputError(f"no triangles parsed from {path}")
    cols = np.array(colors) if len(colors) == len(verts) else None
    return MeshGeometry(np.array(verts), np.array(faces, dtype=np.int32), colors=cols)
