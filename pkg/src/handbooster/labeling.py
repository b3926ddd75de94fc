"""Grasping-status derivation from object-pose motion within a sequence.

A frame counts as grasping when the object has moved relative to the first
frame: relative rotation above 5 degrees or relative translation above
10 mm by default. Both signals are relative, so labeling is invariant to a
rigid transform applied to every frame alike.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError, InvalidInputError
from .geometry import rotation_angle_deg
from .pose import GraspRecord, ObjectPose

DEFAULT_RRE_THRESHOLD_DEG = 5.0
DEFAULT_RTE_THRESHOLD_MM = 10.0


def rre(first: ObjectPose, current: ObjectPose) -> float:
    """Isotropic relative rotation error in degrees, in [0, 180]."""
    return rotation_angle_deg(current.rotation.T @ first.rotation)


def rte(first: ObjectPose, current: ObjectPose) -> float:
    """Relative translation error: Euclidean distance in mm."""
    return float(np.linalg.norm(current.translation - first.translation))


def label_sequence(
    frames: list[GraspRecord],
    rre_thresh: float = DEFAULT_RRE_THRESHOLD_DEG,
    rte_thresh: float = DEFAULT_RTE_THRESHOLD_MM,
    combine: str = "or",
) -> list[GraspRecord]:
    """Label each frame against frame 0; comparisons are strictly greater,
    so boundary frames stay non-grasping. combine='or' flags motion in
    either signal, 'and' requires both. Frame 0 is always non-grasping."""
    if combine not in ("or", "and"):
        raise ConfigError(f"combine must be 'or' or 'and', got {combine!r}")
    if not frames:
        raise InvalidInputError("cannot label an empty sequence")
    seq_ids = {f.sequence_id for f in frames}
    if len(seq_ids) != 1:
        raise InvalidInputError(f"frames mix sequence ids: {sorted(seq_ids)}")
    first = frames[0].object
    out = [dataclasses.replace(frames[0], grasping=False)]
    for frame in frames[1:]:
        rot_moved = rre(first, frame.object) > rre_thresh
        trans_moved = rte(first, frame.object) > rte_thresh
        moved = (rot_moved or trans_moved) if combine == "or" else (rot_moved and trans_moved)
        out.append(dataclasses.replace(frame, grasping=moved))
    return out
