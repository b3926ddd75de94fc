"""Hand/object pose records and the canonical pose-vector embedding.

A grasp is canonicalized by moving the whole configuration into the hand
root frame: identity global orientation, hand root at the origin, object
pose expressed relative to it. Similarity between grasps is then the
cosine of their flattened pose vectors
``Concat(joint quaternions, object quaternion, object translation)``;
quaternions are sign-normalized first so antipodal representations embed
identically.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ContractViolationError, InvalidInputError
from .geometry import Quaternion, check_rotation, _readonly

DEFAULT_JOINT_COUNT = 15  # articulated joints; the root is carried separately

_CANONICAL_TOL = 1e-6


class Source(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class ObjectPose:
    """Object rotation (orthonormal, det +1) and translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = check_rotation(self.rotation, tol=1e-6)
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,):
            raise InvalidInputError(f"translation must be a 3-vector, got {t.shape}")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "ObjectPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q: Quaternion, translation) -> "ObjectPose":
        return cls(q.to_matrix(), translation)

    @property
    def rotation_quat(self) -> Quaternion:
        return Quaternion.from_matrix(self.rotation)


@dataclass(frozen=True)
class HandPose:
    """Global orientation plus per-joint rotations (fixed joint order)."""

    global_orient: Quaternion
    joint_rots: tuple[Quaternion, ...]

    def __post_init__(self):
        object.__setattr__(self, "joint_rots", tuple(self.joint_rots))

    @classmethod
    def neutral(cls, joint_count: int = DEFAULT_JOINT_COUNT) -> "HandPose":
        return cls(Quaternion.identity(), tuple(Quaternion.identity() for _ in range(joint_count)))

    @property
    def joint_count(self) -> int:
        return len(self.joint_rots)


@dataclass(frozen=True)
class GraspRecord:
    """One hand-object configuration within a sequence.

    hand_translation is the hand root's world position; it defaults to the
    origin and is zeroed by canonicalization.
    """

    hand: HandPose
    object_id: str
    object: ObjectPose
    source: Source
    sequence_id: str
    frame_index: int
    grasping: bool | None = None
    hand_translation: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.hand_translation, dtype=np.float64)
        if t.shape != (3,):
            raise InvalidInputError(f"hand_translation must be a 3-vector, got {t.shape}")
        object.__setattr__(self, "hand_translation", _readonly(t))
        object.__setattr__(self, "source", Source(self.source))


@dataclass(frozen=True)
class PoseVector:
    """Flattened embedding of a canonicalized grasp; length 4*J + 4 + 3."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise InvalidInputError(f"pose vector must be 1-d, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidInputError("pose vector contains non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def dimension(self) -> int:
        return len(self.values)


def is_canonical(record: GraspRecord, tol: float = _CANONICAL_TOL) -> bool:
    return (
        record.hand.global_orient.same_rotation(Quaternion.identity(), tol_deg=tol)
        and float(np.abs(record.hand_translation).max()) <= tol
    )


def canonicalize(record: GraspRecord) -> GraspRecord:
    """Express the grasp in the hand root frame.

    The returned record has identity global orientation and zero hand
    translation; the object pose is pre-multiplied by the inverse global
    hand transform. Grasps differing only by a rigid global motion map to
    the same canonical record.
    """
    rh = record.hand.global_orient.to_matrix()
    obj = ObjectPose(
        rh.T @ record.object.rotation,
        rh.T @ (record.object.translation - record.hand_translation),
    )
    hand = HandPose(Quaternion.identity(), record.hand.joint_rots)
    return dataclasses.replace(
        record, hand=hand, object=obj, hand_translation=np.zeros(3)
    )


def build_pose_vector(record: GraspRecord) -> PoseVector:
    """Embed a canonicalized grasp as Concat(joint quats, object quat, object t).

    Every quaternion is sign-normalized (w >= 0) so q and -q embed the same.
    Raises ContractViolationError when the record is not canonicalized.
    """
    if not is_canonical(record):
        raise ContractViolationError(
            "pose vectors are defined on canonicalized grasps; call canonicalize() first"
        )
    parts = [q.sign_normalized().as_array() for q in record.hand.joint_rots]
    parts.append(record.object.rotation_quat.sign_normalized().as_array())
    parts.append(record.object.translation)
    return PoseVector(np.concatenate(parts))


def _as_vector(v) -> np.ndarray:
    if isinstance(v, PoseVector):
        return v.values
    return np.asarray(v, dtype=np.float64)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two pose vectors, in [-1, 1]."""
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise InvalidInputError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < 1e-12 or nb < 1e-12:
        raise InvalidInputError("cosine similarity undefined for zero-norm vectors")
    return float(va @ vb / (na * nb))


def pose_distance(a, b) -> float:
    """1 - cosine similarity, in [0, 2]; 0 only for positively parallel vectors."""
    return 1.0 - cosine_similarity(a, b)


def perturb_orientation(q: Quaternion, max_angle_deg: float, rng: np.random.Generator) -> Quaternion:
    """Compose q with a random rotation: uniform axis, angle uniform in [0, max].

    Deterministic under a fixed generator state.
    """
    if not (0.0 < max_angle_deg <= 180.0):
        raise ConfigError(f"max perturbation angle must be in (0, 180], got {max_angle_deg}")
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-9:
        axis = rng.normal(size=3)
    angle = float(rng.uniform(0.0, max_angle_deg))
    return Quaternion.from_axis_angle(axis, angle) * q


def apply_rigid_transform(
    record: GraspRecord, rotation: Quaternion, translation=(0.0, 0.0, 0.0)
) -> GraspRecord:
    """Move hand and object together by one rigid world transform."""
    r = rotation.to_matrix()
    t = np.asarray(translation, dtype=np.float64)
    hand = HandPose(rotation * record.hand.global_orient, record.hand.joint_rots)
    obj = ObjectPose(r @ record.object.rotation, r @ record.object.translation + t)
    return dataclasses.replace(
        record, hand=hand, object=obj, hand_translation=r @ record.hand_translation + t
    )


def align_orientation(record: GraspRecord, reference: Quaternion) -> GraspRecord:
    """Replace the global hand orientation, co-rotating the object rigidly.

    The rotation pivots about the hand root, so the relative hand-object
    configuration (the canonicalized pose vector) is unchanged.
    """
    delta = reference * record.hand.global_orient.conjugate()
    d = delta.to_matrix()
    th = record.hand_translation
    hand = HandPose(reference, record.hand.joint_rots)
    obj = ObjectPose(
        d @ record.object.rotation,
        d @ (record.object.translation - th) + th,
    )
    return dataclasses.replace(record, hand=hand, object=obj)
