"""JSON-lines grasp manifests.

Line 1 is a header carrying the schema version, units, joint count, and
the asset-registry path as configured (informational; the pipeline always
resolves assets through its config). Every following line is one grasp
record. Serialization uses repr floats and sorted keys so identical data
produces identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assets import AssetRegistry
from .errors import AssetLookupError, InvalidInputError
from .geometry import Quaternion
from .pose import GraspRecord, HandPose, ObjectPose, Source

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ManifestHeader:
    schema_version: int
    units: str
    joint_count: int
    asset_registry: str


def record_to_dict(record: GraspRecord) -> dict:
    return {
        "kind": "grasp",
        "sequence_id": record.sequence_id,
        "frame_index": record.frame_index,
        "source": record.source.value,
        "object_id": record.object_id,
        "grasping": record.grasping,
        "hand": {
            "global_orient": record.hand.global_orient.as_array().tolist(),
            "translation": record.hand_translation.tolist(),
            "joint_rots": [q.as_array().tolist() for q in record.hand.joint_rots],
        },
        "object": {
            "rotation": record.object.rotation.tolist(),
            "translation": record.object.translation.tolist(),
        },
    }


def record_from_dict(row: dict, joint_count: int) -> GraspRecord:
    try:
        hand_raw = row["hand"]
        joint_rots = tuple(Quaternion.from_array(q) for q in hand_raw["joint_rots"])
        if len(joint_rots) != joint_count:
            raise InvalidInputError(
                f"record has {len(joint_rots)} joint rotations, header says {joint_count}"
            )
        return GraspRecord(
            hand=HandPose(Quaternion.from_array(hand_raw["global_orient"]), joint_rots),
            object_id=str(row["object_id"]),
            object=ObjectPose(
                np.array(row["object"]["rotation"], dtype=np.float64),
                np.array(row["object"]["translation"], dtype=np.float64),
            ),
            source=Source(row["source"]),
            sequence_id=str(row["sequence_id"]),
            frame_index=int(row["frame_index"]),
            grasping=row.get("grasping"),
            hand_translation=np.array(hand_raw["translation"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidInputError(f"malformed grasp record: {e}") from e


def write_manifest(path, records, joint_count: int, asset_registry: str, units: str = "mm") -> None:
    header = {
        "kind": "manifest-header",
        "schema_version": SCHEMA_VERSION,
        "units": units,
        "joint_count": joint_count,
        "asset_registry": asset_registry,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(record_to_dict(r), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> tuple[list[GraspRecord], ManifestHeader]:
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"manifest not found: {p}")
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError(f"manifest {p} is empty")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{p}:1: bad JSON header: {e}") from e
    if head.get("kind") != "manifest-header":
        raise InvalidInputError(f"{p}: first line must be the manifest header")
    if head.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInputError(
            f"{p}: unsupported schema version {head.get('schema_version')!r}"
        )
    header = ManifestHeader(
        schema_version=int(head["schema_version"]),
        units=str(head.get("units", "mm")),
        joint_count=int(head["joint_count"]),
        asset_registry=str(head.get("asset_registry", "")),
    )
    records = []
    seen: set[tuple[str, int]] = set()
    for lineno, line in enumerate(lines[1:], 2):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{p}:{lineno}: bad JSON: {e}") from e
        if row.get("kind") != "grasp":
            raise InvalidInputError(f"{p}:{lineno}: expected a grasp record")
        record = record_from_dict(row, header.joint_count)
        key = (record.sequence_id, record.frame_index)
        if key in seen:
            raise InvalidInputError(
                f"{p}:{lineno}: duplicate frame {record.frame_index} in sequence "
                f"{record.sequence_id!r}"
            )
        seen.add(key)
        records.append(record)
    return records, header


def validate_against_registry(records, registry: AssetRegistry) -> None:
    known = set(registry.ids())
    missing = sorted({r.object_id for r in records} - known)
    if missing:
        raise AssetLookupError(f"object ids missing from registry: {missing}")
