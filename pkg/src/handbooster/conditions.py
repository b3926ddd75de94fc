"""Condition rendering: normal map, textured color map, segmentation.

A small software rasterizer projects posed meshes through a pinhole camera
with a z-buffer and perspective-correct barycentric interpolation; culling
is off. Normals are encoded per pixel in a camera-attached frame whose z
axis points toward the viewer, so a surface facing the camera encodes as
rgb (128, 128, 255). The renderer also packages the exact 3D annotation
(joint positions plus the posed hand mesh) with each condition set.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, InvalidInputError
from .geometry import (
    MeshGeometry,
    Quaternion,
    check_rotation,
    compute_vertex_normals,
    transform_mesh,
    _readonly,
)
from .pose import GraspRecord
from .skinning import Rig, joint_positions, pose_mesh

DEFAULT_RESOLUTION = 256
LABEL_BACKGROUND = 0
LABEL_HAND = 1
LABEL_OBJECT = 2

_NEAR_MM = 1e-3


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels, world-to-camera extrinsics in mm.

    The camera looks along its +z axis; points in front have positive depth.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world -> camera
    translation: np.ndarray  # (3,) mm

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        r = check_rotation(self.rotation, tol=1e-6)
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,):
            raise InvalidInputError("camera translation must be a 3-vector")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def look_at(cls, eye, target, fx: float, fy: float, cx: float, cy: float,
                up=(0.0, 1.0, 0.0)) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        z = target - eye
        nz = np.linalg.norm(z)
        if nz < 1e-9:
            raise InvalidInputError("camera eye and target coincide")
        z = z / nz
        x = np.cross(np.asarray(up, dtype=np.float64), z)
        nx = np.linalg.norm(x)
        if nx < 1e-9:
            raise InvalidInputError("camera up vector is parallel to the view direction")
        x = x / nx
        y = np.cross(z, x)
        r = np.stack([x, y, z])
        return cls(fx, fy, cx, cy, r, -r @ eye)

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and depths for world points (points must be in front)."""
        cam = self.to_camera(np.asarray(points, dtype=np.float64))
        z = cam[:, 2]
        uv = np.stack([self.fx * cam[:, 0] / z + self.cx, self.fy * cam[:, 1] / z + self.cy], axis=1)
        return uv, z

    def to_json_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True)
class Material:
    """Shading source for one mesh: uniform color, UV texture, or vertex colors."""

    label: int
    color: tuple[float, float, float] | None = None
    texture: np.ndarray | None = None  # (Ht, Wt, 3) floats in [0, 1]


def encode_normals(normals: np.ndarray) -> np.ndarray:
    """Camera-space normals to 8-bit rgb; z is flipped toward the viewer."""
    enc = normals * np.array([1.0, -1.0, -1.0])
    return np.clip(np.round((enc * 0.5 + 0.5) * 255.0), 0, 255).astype(np.uint8)


def decode_normals(image: np.ndarray) -> np.ndarray:
    """Inverse of encode_normals (up to quantization)."""
    enc = image.astype(np.float64) / 255.0 * 2.0 - 1.0
    return enc * np.array([1.0, -1.0, -1.0])


def _bilinear_sample(texture: np.ndarray, uv: np.ndarray) -> np.ndarray:
    h, w = texture.shape[:2]
    u = np.clip(uv[..., 0], 0.0, 1.0) * (w - 1)
    v = np.clip(uv[..., 1], 0.0, 1.0) * (h - 1)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    return (
        texture[v0, u0] * (1 - fu) * (1 - fv)
        + texture[v0, u1] * fu * (1 - fv)
        + texture[v1, u0] * (1 - fu) * fv
        + texture[v1, u1] * fu * fv
    )


def _resolve_resolution(resolution) -> tuple[int, int]:
    if isinstance(resolution, int):
        hw = (resolution, resolution)
    else:
        hw = (int(resolution[0]), int(resolution[1]))
    if hw[0] < 8 or hw[1] < 8:
        raise ConfigError(f"resolution must be at least 8x8, got {hw}")
    return hw


def rasterize(meshes, camera: Camera, resolution=DEFAULT_RESOLUTION):
    """Render (normal_map, texture_map, segmentation, depth).

    normal/texture maps are HxWx3 uint8, segmentation HxW uint8 labels,
    depth HxW float64 camera-space mm (+inf on background). Triangles with
    any vertex at or behind the near plane are skipped.
    """
    h, w = _resolve_resolution(resolution)
    normal_cam = np.zeros((h, w, 3), dtype=np.float64)
    color = np.zeros((h, w, 3), dtype=np.float64)
    seg = np.zeros((h, w), dtype=np.uint8)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5

    for mesh, material in meshes:
        if not mesh.face_count:
            continue
        if mesh.normals is None:
            mesh = compute_vertex_normals(mesh)
        cam_v = camera.to_camera(mesh.vertices)
        cam_n = mesh.normals @ camera.rotation.T
        z = cam_v[:, 2]
        uv_screen = np.stack(
            [camera.fx * cam_v[:, 0] / z + camera.cx, camera.fy * cam_v[:, 1] / z + camera.cy],
            axis=1,
        )
        if material.color is not None:
            vcol = np.tile(np.asarray(material.color, dtype=np.float64), (mesh.vertex_count, 1))
        elif material.texture is not None and mesh.uvs is not None:
            vcol = None  # sampled per pixel from interpolated uv
        elif mesh.colors is not None:
            vcol = mesh.colors
        else:
            vcol = np.full((mesh.vertex_count, 3), 0.7)

        for face in mesh.faces:
            fz = z[face]
            if (fz <= _NEAR_MM).any():
                continue
            p0, p1, p2 = uv_screen[face]
            area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
            if area == 0.0:
                continue
            x0 = max(0, int(np.floor(min(p0[0], p1[0], p2[0]))))
            x1 = min(w - 1, int(np.ceil(max(p0[0], p1[0], p2[0]))))
            y0 = max(0, int(np.floor(min(p0[1], p1[1], p2[1]))))
            y1 = min(h - 1, int(np.ceil(max(p0[1], p1[1], p2[1]))))
            if x1 < x0 or y1 < y0:
                continue
            gx = px[x0 : x1 + 1][None, :]
            gy = py[y0 : y1 + 1][:, None]
            w0 = ((p1[0] - gx) * (p2[1] - gy) - (p1[1] - gy) * (p2[0] - gx)) / area
            w1 = ((p2[0] - gx) * (p0[1] - gy) - (p2[1] - gy) * (p0[0] - gx)) / area
            w2 = 1.0 - w0 - w1
            covered = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not covered.any():
                continue
            inv_z = w0 / fz[0] + w1 / fz[1] + w2 / fz[2]
            z_pix = np.where(covered, 1.0 / np.where(inv_z > 0, inv_z, 1.0), np.inf)
            tile = depth[y0 : y1 + 1, x0 : x1 + 1]
            closer = covered & (z_pix < tile)
            if not closer.any():
                continue
            # perspective-correct attribute weights
            a0 = w0 / fz[0] / inv_z
            a1 = w1 / fz[1] / inv_z
            a2 = w2 / fz[2] / inv_z
            n0, n1, n2 = cam_n[face]
            npix = a0[..., None] * n0 + a1[..., None] * n1 + a2[..., None] * n2
            lens = np.linalg.norm(npix, axis=-1, keepdims=True)
            npix = npix / np.where(lens > 1e-12, lens, 1.0)
            if vcol is None:
                t0, t1, t2 = mesh.uvs[face]
                uv_pix = a0[..., None] * t0 + a1[..., None] * t1 + a2[..., None] * t2
                cpix = _bilinear_sample(material.texture, uv_pix)
            else:
                c0, c1, c2 = vcol[face]
                cpix = a0[..., None] * c0 + a1[..., None] * c1 + a2[..., None] * c2
            tile[closer] = z_pix[closer]
            normal_cam[y0 : y1 + 1, x0 : x1 + 1][closer] = npix[closer]
            color[y0 : y1 + 1, x0 : x1 + 1][closer] = cpix[closer]
            seg[y0 : y1 + 1, x0 : x1 + 1][closer] = material.label

    covered = np.isfinite(depth)
    normal_map = np.zeros((h, w, 3), dtype=np.uint8)
    normal_map[covered] = encode_normals(normal_cam[covered])
    texture_map = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    return normal_map, texture_map, seg, depth


@dataclass(frozen=True)
class ConditionSet:
    """Rendered 2D conditions paired with the exact 3D annotation."""

    normal_map: np.ndarray
    texture_map: np.ndarray
    segmentation: np.ndarray
    depth: np.ndarray
    hand_orient: Quaternion
    joints: np.ndarray  # (J+1, 3) mm
    hand_mesh: MeshGeometry
    camera: Camera
    sequence_id: str
    frame_index: int
    view_index: int
    object_id: str
    source: str

    @property
    def stem(self) -> str:
        return f"{self.sequence_id}_{self.frame_index}_{self.view_index:03d}"


def render_conditions(
    record: GraspRecord,
    rig: Rig,
    registry,
    camera: Camera,
    resolution=DEFAULT_RESOLUTION,
    view_index: int = 0,
) -> ConditionSet:
    """Pose the hand, place the object, rasterize both, and attach the
    ground-truth annotation. The hand orientation rides along verbatim."""
    hand_mesh = pose_mesh(rig, record.hand, record.hand_translation)
    object_mesh = transform_mesh(
        registry.get(record.object_id), record.object.rotation, record.object.translation
    )
    normal_map, texture_map, seg, depth = rasterize(
        [
            (hand_mesh, Material(label=LABEL_HAND)),
            (object_mesh, Material(label=LABEL_OBJECT)),
        ],
        camera,
        resolution,
    )
    joints = joint_positions(rig, record.hand, record.hand_translation)
    return ConditionSet(
        normal_map=normal_map,
        texture_map=texture_map,
        segmentation=seg,
        depth=depth,
        hand_orient=record.hand.global_orient,
        joints=joints,
        hand_mesh=hand_mesh,
        camera=camera,
        sequence_id=record.sequence_id,
        frame_index=record.frame_index,
        view_index=view_index,
        object_id=record.object_id,
        source=record.source.value,
    )


def view_tasks(records, views_per_pose: int, max_angle_deg: float, seed: int):
    """Per-record view plan: grasping records get views_per_pose perturbed
    views, everything else exactly one unperturbed view. Each task carries
    its own child seed so rendering order and worker count cannot matter."""
    if views_per_pose < 1:
        raise ConfigError(f"views_per_pose must be >= 1, got {views_per_pose}")
    tasks = []
    for i, record in enumerate(records):
        if record.grasping is None:
            raise InvalidInputError(
                f"record {record.sequence_id}/{record.frame_index} is unlabeled"
            )
        if record.grasping:
            for v in range(views_per_pose):
                tasks.append((record, v, _child_seed(seed, i, v), max_angle_deg))
        else:
            tasks.append((record, 0, None, max_angle_deg))
    return tasks


def _child_seed(seed: int, record_index: int, view: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(record_index), int(view)])
    return int(ss.generate_state(1, np.uint64)[0])


def realize_view(record: GraspRecord, child_seed, max_angle_deg: float) -> GraspRecord:
    """Apply the task's orientation perturbation (rigid about the hand root)."""
    from .pose import align_orientation, perturb_orientation

    if child_seed is None:
        return record
    rng = np.random.default_rng(child_seed)
    perturbed = perturb_orientation(record.hand.global_orient, max_angle_deg, rng)
    return align_orientation(record, perturbed)


def make_novel_view_batch(
    records,
    views_per_pose: int,
    max_angle_deg: float,
    camera,
    seed: int,
    rig: Rig,
    registry,
    resolution=DEFAULT_RESOLUTION,
) -> list[ConditionSet]:
    """Render novel views for grasping records and a single unchanged view
    otherwise. `camera` is a Camera or a callable mapping record -> Camera."""
    camera_for = camera if callable(camera) else (lambda _record: camera)
    out = []
    for record, view, child_seed, angle in view_tasks(records, views_per_pose, max_angle_deg, seed):
        posed = realize_view(record, child_seed, angle)
        out.append(
            render_conditions(posed, rig, registry, camera_for(posed), resolution, view_index=view)
        )
    return out


def _png_bytes(array: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array, mode).save(buf, format="PNG")
    return buf.getvalue()


def condition_file_payload(cs: ConditionSet, emit_variant_maps: bool = False) -> dict[str, bytes]:
    """Filename -> bytes for one condition set (PNG maps, sidecar, mesh OBJ)."""
    stem = cs.stem
    files: dict[str, bytes] = {
        f"{stem}.normal.png": _png_bytes(cs.normal_map, "RGB"),
        f"{stem}.texture.png": _png_bytes(cs.texture_map, "RGB"),
        f"{stem}.seg.png": _png_bytes(cs.segmentation, "L"),
    }
    if emit_variant_maps:
        finite = np.isfinite(cs.depth)
        depth_img = np.zeros(cs.depth.shape, dtype=np.uint8)
        if finite.any():
            lo = cs.depth[finite].min()
            hi = cs.depth[finite].max()
            span = hi - lo if hi > lo else 1.0
            depth_img[finite] = np.round((1.0 - (cs.depth[finite] - lo) / span) * 255).astype(np.uint8)
        files[f"{stem}.depth.png"] = _png_bytes(depth_img, "L")
        files[f"{stem}.skeleton.png"] = _png_bytes(_skeleton_map(cs), "L")
    obj_lines = []
    for v in cs.hand_mesh.vertices.tolist():
        obj_lines.append(f"v {v[0]!r} {v[1]!r} {v[2]!r}")
    for f in cs.hand_mesh.faces.tolist():
        obj_lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    files[f"{stem}.mesh.obj"] = ("\n".join(obj_lines) + "\n").encode()
    meta = {
        "sequence_id": cs.sequence_id,
        "frame_index": cs.frame_index,
        "view_index": cs.view_index,
        "object_id": cs.object_id,
        "source": cs.source,
        "hand_orient": cs.hand_orient.as_array().tolist(),
        "camera": cs.camera.to_json_dict(),
        "joints": cs.joints.tolist(),
        "mesh": f"{stem}.mesh.obj",
        "images": {
            "normal": f"{stem}.normal.png",
            "texture": f"{stem}.texture.png",
            "segmentation": f"{stem}.seg.png",
        },
    }
    files[f"{stem}.meta.json"] = (json.dumps(meta, sort_keys=True) + "\n").encode()
    return files


def _skeleton_map(cs: ConditionSet) -> np.ndarray:
    """2D bone rendering of the joint annotation (ablation condition variant)."""
    h, w = cs.segmentation.shape
    img = np.zeros((h, w), dtype=np.uint8)
    uv, z = cs.camera.project(cs.joints)
    if (z <= 0).any():
        return img
    pts = np.round(uv).astype(int)
    for a, b in _joint_chains(len(cs.joints)):
        n = max(abs(pts[b][0] - pts[a][0]), abs(pts[b][1] - pts[a][1]), 1)
        for t in np.linspace(0.0, 1.0, n + 1):
            x = int(round(pts[a][0] + t * (pts[b][0] - pts[a][0])))
            y = int(round(pts[a][1] + t * (pts[b][1] - pts[a][1])))
            if 0 <= x < w and 0 <= y < h:
                img[y, x] = 255
    return img


def _joint_chains(n_joints: int):
    """Bone edges assuming root + chains of three (five-finger layout)."""
    edges = []
    fingers = (n_joints - 1) // 3
    for f in range(fingers):
        base = 1 + 3 * f
        edges.append((0, base))
        edges.append((base, base + 1))
        edges.append((base + 1, base + 2))
    return edges


def write_condition_set(cs: ConditionSet, out_dir, emit_variant_maps: bool = False) -> list[str]:
    """Write one condition set into out_dir; returns relative file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = condition_file_payload(cs, emit_variant_maps)
    for name, blob in sorted(payload.items()):
        (out / name).write_bytes(blob)
    return sorted(payload)
