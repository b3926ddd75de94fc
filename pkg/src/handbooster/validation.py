"""Geometric grasp validation: contact, overlap volume, self-penetration.

Surface distance is the exact triangle-triangle minimum (vertex-face and
edge-edge features, zero when triangles intersect) pruned by an AABB tree.
Overlap volume voxelizes the intersection of the two bounding boxes and
classifies voxel centers with an even-odd ray test along +x; zeros in the
2D orientation predicates are resolved by symbolic perturbation of the
query point (shift by (eps, eps^2) as eps -> 0), which keeps crossings
through shared triangle edges counted exactly once.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NonWatertightMeshError
from .geometry import MeshGeometry, transform_mesh

_LEAF_SIZE = 4


def is_watertight(mesh: MeshGeometry) -> bool:
    """Every undirected edge must be shared by exactly two faces."""
    f = mesh.faces
    if not len(f):
        return False
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool((counts == 2).all())


# ---------------------------------------------------------------------------
# closest-point primitives


def _closest_point_on_triangle(p, a, b, c) -> np.ndarray:
    """Closest point to p on triangle abc (Voronoi-region walk)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments p1q1 and p2q2 (clamped parameters)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-18 and e <= 1e-18:
        return float(np.linalg.norm(r))
    if a <= 1e-18:
        s = 0.0
        t = min(1.0, max(0.0, f / e))
    else:
        c = d1 @ r
        if e <= 1e-18:
            t = 0.0
            s = min(1.0, max(0.0, -c / a))
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


# ---------------------------------------------------------------------------
# triangle-triangle intersection (interval method, coplanar fallback)


def _interval_points(proj, dist):
    pts = []
    for i in range(3):
        if dist[i] == 0.0:
            pts.append(proj[i])
    for i in range(3):
        j = (i + 1) % 3
        if dist[i] * dist[j] < 0.0:
            pts.append(proj[i] + (proj[j] - proj[i]) * dist[i] / (dist[i] - dist[j]))
    return pts


def _orient2d(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _point_in_tri_2d(p, t) -> bool:
    s1 = _orient2d(t[0], t[1], p)
    s2 = _orient2d(t[1], t[2], p)
    s3 = _orient2d(t[2], t[0], p)
    return (s1 >= 0 and s2 >= 0 and s3 >= 0) or (s1 <= 0 and s2 <= 0 and s3 <= 0)


def _on_segment_2d(a, b, p) -> bool:
    """p assumed collinear with ab; True when p lies within the bbox of ab."""
    return bool(
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_intersect_2d(p1, q1, p2, q2) -> bool:
    o1 = _orient2d(p1, q1, p2)
    o2 = _orient2d(p1, q1, q2)
    o3 = _orient2d(p2, q2, p1)
    o4 = _orient2d(p2, q2, q1)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    if o1 == 0 and _on_segment_2d(p1, q1, p2):
        return True
    if o2 == 0 and _on_segment_2d(p1, q1, q2):
        return True
    if o3 == 0 and _on_segment_2d(p2, q2, p1):
        return True
    if o4 == 0 and _on_segment_2d(p2, q2, q1):
        return True
    return False


def _coplanar_tri_tri_2d(t1, t2, normal) -> bool:
    drop = int(np.argmax(np.abs(normal)))
    keep = [k for k in range(3) if k != drop]
    a = t1[:, keep]
    b = t2[:, keep]
    for i in range(3):
        for j in range(3):
            if _segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]):
                return True
    return _point_in_tri_2d(a[0], b) or _point_in_tri_2d(b[0], a)


def tri_tri_intersect(t1, t2) -> bool:
    """True when the closed triangles share at least one point."""
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    scale = max(1.0, float(np.abs(t1).max()), float(np.abs(t2).max()))
    eps = 1e-12 * scale
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    dv = (t1 - t2[0]) @ n2
    dv[np.abs(dv) <= eps * max(1.0, float(np.linalg.norm(n2)))] = 0.0
    if (dv > 0).all() or (dv < 0).all():
        return False
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    du = (t2 - t1[0]) @ n1
    du[np.abs(du) <= eps * max(1.0, float(np.linalg.norm(n1)))] = 0.0
    if (du > 0).all() or (du < 0).all():
        return False
    if (dv == 0).all() and (du == 0).all():
        return _coplanar_tri_tri_2d(t1, t2, n2 if np.abs(n2).max() > 0 else n1)
    direction = np.cross(n1, n2)
    axis = int(np.argmax(np.abs(direction)))
    p1 = t1[:, axis]
    p2 = t2[:, axis]
    i1 = _interval_points(p1, dv)
    i2 = _interval_points(p2, du)
    if not i1 or not i2:
        return False
    return max(min(i1), min(i2)) <= min(max(i1), max(i2))


def tri_tri_distance(t1, t2) -> float:
    """Exact minimum distance between two triangles; 0 when they intersect."""
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    if tri_tri_intersect(t1, t2):
        return 0.0
    best = math.inf
    for i in range(3):
        q = _closest_point_on_triangle(t1[i], t2[0], t2[1], t2[2])
        best = min(best, float(np.linalg.norm(t1[i] - q)))
        q = _closest_point_on_triangle(t2[i], t1[0], t1[1], t1[2])
        best = min(best, float(np.linalg.norm(t2[i] - q)))
    for i in range(3):
        for j in range(3):
            best = min(
                best,
                _segment_segment_distance(
                    t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]
                ),
            )
    return best


# ---------------------------------------------------------------------------
# AABB tree


class _Bvh:
    """Binary AABB tree, median split on the widest centroid axis."""

    __slots__ = ("tris", "lo", "hi", "left", "right", "leaf_tris")

    def __init__(self, tris: np.ndarray):
        self.tris = tris
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_tris: list[np.ndarray | None] = []
        centroids = tris.mean(axis=1)
        self._build(np.arange(len(tris)), centroids)

    def _build(self, idx: np.ndarray, centroids: np.ndarray) -> int:
        node = len(self.lo)
        sub = self.tris[idx]
        self.lo.append(sub.reshape(-1, 3).min(axis=0))
        self.hi.append(sub.reshape(-1, 3).max(axis=0))
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_tris.append(None)
        if len(idx) <= _LEAF_SIZE:
            self.leaf_tris[node] = idx
            return node
        c = centroids[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order = np.argsort(c[:, axis], kind="stable")
        half = len(idx) // 2
        self.left[node] = self._build(idx[order[:half]], centroids)
        self.right[node] = self._build(idx[order[half:]], centroids)
        return node

    def is_leaf(self, node: int) -> bool:
        return self.leaf_tris[node] is not None


def _aabb_gap(lo1, hi1, lo2, hi2) -> float:
    gap = np.maximum(0.0, np.maximum(lo2 - hi1, lo1 - hi2))
    return float(np.linalg.norm(gap))


def min_surface_distance(a: MeshGeometry, b: MeshGeometry) -> float:
    """Minimum distance between the triangle sets of two meshes, in mm."""
    if not a.face_count or not b.face_count:
        raise InvalidInputError("surface distance requires two non-empty meshes")
    ta, tb = a.triangles(), b.triangles()
    bva, bvb = _Bvh(ta), _Bvh(tb)
    best = math.inf
    heap = [(_aabb_gap(bva.lo[0], bva.hi[0], bvb.lo[0], bvb.hi[0]), 0, 0)]
    while heap:
        bound, na, nb = heapq.heappop(heap)
        if bound >= best:
            break
        if bva.is_leaf(na) and bvb.is_leaf(nb):
            for i in bva.leaf_tris[na]:
                for j in bvb.leaf_tris[nb]:
                    d = tri_tri_distance(ta[i], tb[j])
                    if d < best:
                        best = d
                        if best == 0.0:
                            return 0.0
            continue
        # descend the node with the larger extent
        ext_a = -1.0 if bva.is_leaf(na) else float((bva.hi[na] - bva.lo[na]).max())
        ext_b = -1.0 if bvb.is_leaf(nb) else float((bvb.hi[nb] - bvb.lo[nb]).max())
        if ext_a >= ext_b:
            kids = ((bva.left[na], nb), (bva.right[na], nb))
            for ka, kb in kids:
                g = _aabb_gap(bva.lo[ka], bva.hi[ka], bvb.lo[kb], bvb.hi[kb])
                if g < best:
                    heapq.heappush(heap, (g, ka, kb))
        else:
            kids = ((na, bvb.left[nb]), (na, bvb.right[nb]))
            for ka, kb in kids:
                g = _aabb_gap(bva.lo[ka], bva.hi[ka], bvb.lo[kb], bvb.hi[kb])
                if g < best:
                    heapq.heappush(heap, (g, ka, kb))
    return best


def self_penetration(mesh: MeshGeometry) -> int:
    """Count intersecting triangle pairs that share no vertex index."""
    if not mesh.face_count:
        raise InvalidInputError("self-penetration test requires a non-empty mesh")
    tris = mesh.triangles()
    bvh = _Bvh(tris)
    faces = mesh.faces
    pairs: list[tuple[int, int]] = []
    stack = [(0, 0)]
    while stack:
        na, nb = stack.pop()
        if (bvh.lo[na] > bvh.hi[nb]).any() or (bvh.lo[nb] > bvh.hi[na]).any():
            continue
        la, lb = bvh.is_leaf(na), bvh.is_leaf(nb)
        if la and lb:
            # each unordered leaf pair is visited once; triangles in
            # distinct leaves never coincide, same-leaf pairs use j > i
            for i in bvh.leaf_tris[na]:
                for j in bvh.leaf_tris[nb]:
                    if na != nb or j > i:
                        pairs.append((i, j))
            continue
        if na == nb:
            l, r = bvh.left[na], bvh.right[na]
            stack += [(l, l), (l, r), (r, r)]
        elif lb or (not la and (bvh.hi[na] - bvh.lo[na]).max() >= (bvh.hi[nb] - bvh.lo[nb]).max()):
            stack += [(bvh.left[na], nb), (bvh.right[na], nb)]
        else:
            stack += [(na, bvh.left[nb]), (na, bvh.right[nb])]
    if not pairs:
        return 0
    arr = np.array(pairs, dtype=np.int64)
    i, j = arr[:, 0], arr[:, 1]
    tri_lo = tris.min(axis=1)
    tri_hi = tris.max(axis=1)
    overlap = (tri_lo[i] <= tri_hi[j]).all(axis=1) & (tri_lo[j] <= tri_hi[i]).all(axis=1)
    shared = (faces[i][:, :, None] == faces[j][:, None, :]).any(axis=(1, 2))
    arr = arr[overlap & ~shared]
    # batched first Moller rejection: all of one triangle strictly on one
    # side of the other's plane
    keep = np.ones(len(arr), dtype=bool)
    scale = max(1.0, float(np.abs(tris).max()))
    for a, b in ((arr[:, 0], arr[:, 1]), (arr[:, 1], arr[:, 0])):
        tb = tris[b]
        n = np.cross(tb[:, 1] - tb[:, 0], tb[:, 2] - tb[:, 0])
        d = np.einsum("pkc,pc->pk", tris[a] - tb[:, None, 0], n)
        tol = 1e-12 * scale * np.maximum(1.0, np.linalg.norm(n, axis=1))[:, None]
        d = np.where(np.abs(d) <= tol, 0.0, d)
        keep &= ~((d > 0).all(axis=1) | (d < 0).all(axis=1))
    survivors = arr[keep]
    return sum(1 for a, b in survivors if tri_tri_intersect(tris[a], tris[b]))


# ---------------------------------------------------------------------------
# even-odd inside test along +x with symbolic perturbation


def _column_data(mesh: MeshGeometry):
    tri = mesh.triangles()
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    d = np.einsum("fi,fi->f", n, tri[:, 0])
    return (
        tri,
        n,
        d,
        tri[:, :, 1].min(axis=1),
        tri[:, :, 1].max(axis=1),
        tri[:, :, 2].min(axis=1),
        tri[:, :, 2].max(axis=1),
    )


def _column_crossings(data, py: float, pz: float) -> np.ndarray:
    """Sorted x coordinates where the ray column (py, pz) crosses the surface.

    A triangle parallel to +x projects to zero area in (y, z) and is
    skipped; its crossings have measure zero for the perturbed point.
    """
    tri, n, d, ymin, ymax, zmin, zmax = data
    cand = np.nonzero(
        (ymin <= py) & (py <= ymax) & (zmin <= pz) & (pz <= zmax) & (n[:, 0] != 0.0)
    )[0]
    xs = []
    for f in cand:
        t = tri[f]
        ref = None
        inside = True
        for k in range(3):
            a = t[k]
            b = t[(k + 1) % 3]
            o = (b[1] - a[1]) * (pz - a[2]) - (b[2] - a[2]) * (py - a[1])
            if o == 0.0:
                o = -(b[2] - a[2])  # first-order term of the (eps, eps^2) shift
                if o == 0.0:
                    o = b[1] - a[1]
            s = bool(o > 0.0)
            if ref is None:
                ref = s
            elif s != ref:
                inside = False
                break
        if inside:
            xs.append((d[f] - n[f, 1] * py - n[f, 2] * pz) / n[f, 0])
    return np.sort(np.array(xs, dtype=np.float64))


def points_inside_mesh(mesh: MeshGeometry, points) -> np.ndarray:
    """Even-odd inside classification; points exactly on the surface count outside."""
    if not is_watertight(mesh):
        raise NonWatertightMeshError("inside test requires a watertight mesh")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    data = _column_data(mesh)
    out = np.zeros(len(pts), dtype=bool)
    columns: dict[tuple[float, float], list[int]] = {}
    for i, p in enumerate(pts):
        columns.setdefault((float(p[1]), float(p[2])), []).append(i)
    for (py, pz), idxs in columns.items():
        xs = _column_crossings(data, py, pz)
        if not len(xs):
            continue
        px = pts[idxs, 0]
        beyond = len(xs) - np.searchsorted(xs, px, side="right")
        out[idxs] = beyond % 2 == 1
    return out


def intersection_volume(a: MeshGeometry, b: MeshGeometry, voxel_mm: float = 2.0) -> float:
    """Overlap volume in cm^3, estimated on a voxel grid of the given pitch."""
    if voxel_mm <= 0:
        raise InvalidInputError(f"voxel pitch must be positive, got {voxel_mm}")
    for name, mesh in (("first", a), ("second", b)):
        if not is_watertight(mesh):
            raise NonWatertightMeshError(
                f"{name} mesh is not watertight ({mesh.face_count} faces)"
            )
    lo = np.maximum(a.bounds()[0], b.bounds()[0])
    hi = np.minimum(a.bounds()[1], b.bounds()[1])
    if (hi <= lo).any():
        return 0.0
    counts = np.maximum(1, np.ceil((hi - lo) / voxel_mm).astype(int))
    axes = [lo[k] + (np.arange(counts[k]) + 0.5) * voxel_mm for k in range(3)]
    data_a = _column_data(a)
    data_b = _column_data(b)
    xs_centers = axes[0]
    inside_count = 0
    for py in axes[1]:
        for pz in axes[2]:
            xa = _column_crossings(data_a, float(py), float(pz))
            if not len(xa):
                continue
            xb = _column_crossings(data_b, float(py), float(pz))
            if not len(xb):
                continue
            ca = len(xa) - np.searchsorted(xa, xs_centers, side="right")
            cb = len(xb) - np.searchsorted(xb, xs_centers, side="right")
            inside_count += int(np.sum((ca % 2 == 1) & (cb % 2 == 1)))
    return inside_count * voxel_mm**3 / 1000.0


# ---------------------------------------------------------------------------
# grasp verdicts


@dataclass(frozen=True)
class GraspThresholds:
    """Pass bounds; defaults sit at fingertip-pad scale and a few percent
    of a hand's volume, they are not sourced from any benchmark."""

    contact_mm: float = 2.0
    volume_cm3: float = 4.0
    voxel_mm: float = 2.0


@dataclass(frozen=True)
class GraspVerdict:
    valid: bool
    contact_distance: float  # mm
    intersection_volume: float  # cm^3
    self_penetration_pairs: int
    reasons: tuple[str, ...]

    def __post_init__(self):
        if self.valid != (not self.reasons):
            raise InvalidInputError("verdict validity must match empty reasons")


def validate_grasp(record, rig, registry, thresholds: GraspThresholds = GraspThresholds()) -> GraspVerdict:
    """Pose the hand, place the object, and apply the three checks:
    contact distance, bounded overlap volume, zero self-penetration."""
    from .skinning import pose_mesh  # local import to avoid a cycle

    object_mesh = registry.get(record.object_id)
    hand = pose_mesh(rig, record.hand, record.hand_translation)
    obj = transform_mesh(object_mesh, record.object.rotation, record.object.translation)
    contact = min_surface_distance(hand, obj)
    volume = intersection_volume(hand, obj, thresholds.voxel_mm)
    pairs = self_penetration(hand)
    reasons = []
    if contact > thresholds.contact_mm:
        reasons.append("no-contact")
    if volume > thresholds.volume_cm3:
        reasons.append("intersection")
    if pairs > 0:
        reasons.append("self-penetration")
    return GraspVerdict(
        valid=not reasons,
        contact_distance=contact,
        intersection_volume=volume,
        self_penetration_pairs=pairs,
        reasons=tuple(reasons),
    )
