"""Self-contained toy fixtures: a procedural hand rig, object assets, and
seeded real/synthetic manifests.

The rig is a paddle hand: a palm box plus five three-segment cylinder
fingers (15 articulated joints, root at the wrist/origin, rigid skinning
weights). Segments keep small gaps at the joints so curls up to 25 degrees
per joint never self-intersect. Licensed hand models are deliberately not
required anywhere.

Generated grasps place the object in front of the palm at a controlled
surface gap, so contact, overlap, and self-penetration checks pass by
construction (or fail by construction for the contactless pool).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import (
    MeshGeometry,
    Quaternion,
    concatenate_meshes,
    make_box,
    make_cylinder,
    make_icosphere,
    save_obj,
    transform_mesh,
)
from .pose import GraspRecord, HandPose, ObjectPose, Source
from .manifest import write_manifest
from .skinning import Rig, save_rig

FINGER_X = (-28.0, -14.0, 0.0, 14.0, 28.0)
JOINT_Y = (76.0, 98.0, 120.0)
SEGMENT_RADIUS = 6.0
SEGMENT_SPAN = (1.5, 20.5)  # local y range within each 22 mm joint spacing
PALM_CENTER = (0.0, 37.0, 0.0)  # palm reaches down to the wrist root at y=0
PALM_SIZE = (70.0, 74.0, 18.0)
PALM_FRONT_Z = -9.0
MAX_CURL_DEG = 25.0

_SKIN = np.array([0.85, 0.64, 0.52])
_OBJECT_COLORS = {
    "block": (0.75, 0.25, 0.2),
    "ball": (0.2, 0.45, 0.75),
    "tube": (0.25, 0.65, 0.3),
}


def build_toy_rig() -> Rig:
    parts = []
    part_joint = []
    palm = make_box(PALM_SIZE, PALM_CENTER)
    parts.append(palm)
    part_joint.append(0)
    for f, x in enumerate(FINGER_X):
        for s, jy in enumerate(JOINT_Y):
            seg = make_cylinder(SEGMENT_RADIUS, SEGMENT_SPAN[1] - SEGMENT_SPAN[0])
            seg = transform_mesh(seg, translation=(x, jy + SEGMENT_SPAN[0], 0.0))
            parts.append(seg)
            part_joint.append(1 + 3 * f + s)
    mesh = concatenate_meshes(parts)
    # per-part skin shading: palm darkest, fingertips lightest
    colors = np.empty((mesh.vertex_count, 3))
    offset = 0
    for part, joint in zip(parts, part_joint):
        if joint == 0:
            shade = 0.92
        else:
            shade = 0.96 + 0.02 * ((joint - 1) % 3)
        colors[offset : offset + part.vertex_count] = np.clip(_SKIN * shade, 0.0, 1.0)
        offset += part.vertex_count
    mesh = MeshGeometry(mesh.vertices, mesh.faces, colors=colors)

    rest = np.zeros((16, 3))
    parents = np.empty(16, dtype=np.int64)
    parents[0] = -1
    for f, x in enumerate(FINGER_X):
        for s, jy in enumerate(JOINT_Y):
            j = 1 + 3 * f + s
            rest[j] = (x, jy, 0.0)
            parents[j] = 0 if s == 0 else j - 1

    weights = np.zeros((mesh.vertex_count, 16))
    offset = 0
    for part, joint in zip(parts, part_joint):
        weights[offset : offset + part.vertex_count, joint] = 1.0
        offset += part.vertex_count
    return Rig(template=mesh, joint_rest_positions=rest, parents=parents, weights=weights)


def build_toy_objects() -> dict[str, MeshGeometry]:
    block = make_box((36.0, 36.0, 36.0))
    ball = make_icosphere(25.0, subdivisions=1)
    tube = transform_mesh(make_cylinder(16.0, 50.0, segments=16), translation=(0.0, -25.0, 0.0))
    out = {}
    for name, mesh in (("block", block), ("ball", ball), ("tube", tube)):
        color = np.tile(_OBJECT_COLORS[name], (mesh.vertex_count, 1))
        out[name] = MeshGeometry(mesh.vertices, mesh.faces, colors=color)
    return out


def _random_quaternion(rng: np.random.Generator) -> Quaternion:
    v = rng.normal(size=4)
    while np.linalg.norm(v) < 1e-9:
        v = rng.normal(size=4)
    return Quaternion.from_array(v)


def _random_curl_pose(rng: np.random.Generator, global_orient: Quaternion) -> HandPose:
    joints = []
    for _ in range(15):
        angle = float(rng.uniform(0.0, MAX_CURL_DEG))
        joints.append(Quaternion.from_axis_angle((1.0, 0.0, 0.0), -angle))
    return HandPose(global_orient, tuple(joints))


def _contact_object_pose(
    objects: dict[str, MeshGeometry], object_id: str, rng: np.random.Generator, gap_mm: float
) -> ObjectPose:
    """Object pose in the hand frame: random orientation, top surface at
    gap_mm in front of the palm face, laterally inside the palm footprint."""
    rot = _random_quaternion(rng).to_matrix()
    verts = objects[object_id].vertices @ rot.T
    support = float(verts[:, 2].max())
    jitter = rng.uniform(-2.0, 2.0, size=2)
    center = np.array(
        [jitter[0], PALM_CENTER[1] + jitter[1], PALM_FRONT_Z - gap_mm - support]
    )
    return ObjectPose(rot, center)


def _compose_world(relative: ObjectPose, hand_orient: Quaternion, hand_translation) -> ObjectPose:
    rh = hand_orient.to_matrix()
    return ObjectPose(rh @ relative.rotation, rh @ relative.translation + np.asarray(hand_translation))


def _real_sequence(
    objects, object_id: str, sequence_id: str, n_frames: int, rng: np.random.Generator
) -> list[GraspRecord]:
    """Static object for the first part of the sequence, then the grasped
    object moves rigidly with the hand (3 mm and 2 degrees per frame)."""
    base_orient = _random_quaternion(rng)
    base_translation = rng.uniform(-150.0, 150.0, size=3)
    relative = _contact_object_pose(objects, object_id, rng, float(rng.uniform(0.3, 1.5)))
    static_frames = max(3, int(n_frames * 0.35))
    move_axis = rng.normal(size=3)
    move_axis /= np.linalg.norm(move_axis)
    drift_dir = rng.normal(size=3)
    drift_dir /= np.linalg.norm(drift_dir)
    records = []
    for t in range(n_frames):
        steps = max(0, t - static_frames + 1)
        extra = Quaternion.from_axis_angle(move_axis, 2.0 * steps)
        orient = extra * base_orient
        translation = base_translation + drift_dir * 3.0 * steps
        pose = _random_curl_pose(rng, orient)
        records.append(
            GraspRecord(
                hand=pose,
                object_id=object_id,
                object=_compose_world(relative, orient, translation),
                source=Source.REAL,
                sequence_id=sequence_id,
                frame_index=t,
                hand_translation=translation,
            )
        )
    return records


def _synthetic_record(
    objects, object_id: str, index: int, rng: np.random.Generator, contactless: bool
) -> GraspRecord:
    orient = _random_quaternion(rng)
    translation = rng.uniform(-150.0, 150.0, size=3)
    gap = 60.0 if contactless else float(rng.uniform(0.3, 1.5))
    relative = _contact_object_pose(objects, object_id, rng, gap)
    return GraspRecord(
        hand=_random_curl_pose(rng, orient),
        object_id=object_id,
        object=_compose_world(relative, orient, translation),
        source=Source.SYNTHETIC,
        sequence_id=f"pool-{object_id}",
        frame_index=index,
        grasping=True,
        hand_translation=translation,
    )


def generate_fixture(
    out_dir,
    seed: int = 0,
    real_frames: int = 100,
    synthetic_per_object: int = 100,
    contactless_pool: bool = False,
) -> Path:
    """Write rig.json, assets/, real.jsonl, synthetic.jsonl, pipeline.cfg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rig = build_toy_rig()
    save_rig(rig, out / "rig.json")
    objects = build_toy_objects()
    assets = out / "assets"
    assets.mkdir(exist_ok=True)
    for name, mesh in objects.items():
        save_obj(mesh, assets / f"{name}.obj")

    object_ids = sorted(objects)
    counts = [real_frames // 3 + (1 if k < real_frames % 3 else 0) for k in range(3)]
    real_records: list[GraspRecord] = []
    for k, (obj, n) in enumerate(zip(object_ids, counts)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, k]))
        real_records.extend(_real_sequence(objects, obj, f"real-{obj}-000", n, rng))
    write_manifest(out / "real.jsonl", real_records, 15, "assets")

    synthetic_records: list[GraspRecord] = []
    for k, obj in enumerate(object_ids):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2, k]))
        for i in range(synthetic_per_object):
            synthetic_records.append(
                _synthetic_record(objects, obj, i, rng, contactless_pool)
            )
    write_manifest(out / "synthetic.jsonl", synthetic_records, 15, "assets")

    cfg_lines = [
        "# toy fixture pipeline configuration",
        "real_manifest = real.jsonl",
        "synthetic_manifest = synthetic.jsonl",
        "asset_registry = assets",
        "rig = rig.json",
        "output_dir = out",
        f"seed = {seed}",
        "draws_per_object = 4",
        "views_per_pose = 1",
        "workers = 1",
    ]
    (out / "pipeline.cfg").write_text("\n".join(cfg_lines) + "\n")
    return out
