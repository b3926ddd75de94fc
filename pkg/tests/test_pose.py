import dataclasses
import math

import numpy as np
import pytest

from handbooster.errors import ConfigError, ContractViolationError, InvalidInputError
from handbooster.geometry import Quaternion, rotation_angle_deg
from handbooster.pose import (
    GraspRecord,
    HandPose,
    ObjectPose,
    Source,
    align_orientation,
    apply_rigid_transform,
    build_pose_vector,
    canonicalize,
    cosine_similarity,
    perturb_orientation,
    pose_distance,
)

from conftest import random_grasp, random_quaternion


def neutral_grasp(joint_count=15) -> GraspRecord:
    return GraspRecord(
        hand=HandPose.neutral(joint_count),
        object_id="ball",
        object=ObjectPose.identity(),
        source=Source.REAL,
        sequence_id="s",
        frame_index=0,
    )


class TestObjectPose:
    def test_rotation_quat_round_trips(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            r = random_quaternion(rng).to_matrix()
            pose = ObjectPose(r, rng.normal(size=3))
            assert np.abs(pose.rotation_quat.to_matrix() - r).max() < 1e-6

    def test_rejects_improper_rotation(self):
        with pytest.raises(InvalidInputError):
            ObjectPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
        with pytest.raises(InvalidInputError):
            ObjectPose(np.eye(3) * 1.1, np.zeros(3))


class TestCanonicalize:
    def test_identity_orientation_unchanged(self):
        g = neutral_grasp()
        c = canonicalize(g)
        assert c.hand.global_orient == Quaternion.identity()
        assert np.array_equal(c.object.rotation, g.object.rotation)
        assert np.array_equal(c.object.translation, g.object.translation)

    def test_global_rotation_gives_identical_vector(self):
        rng = np.random.default_rng(0)
        g = random_grasp(rng)
        rotated = apply_rigid_transform(g, Quaternion.from_axis_angle((0, 1, 0), 90))
        v1 = build_pose_vector(canonicalize(g)).values
        v2 = build_pose_vector(canonicalize(rotated)).values
        assert np.abs(v1 - v2).max() < 1e-5

    def test_full_rigid_transform_gives_identical_vector(self):
        rng = np.random.default_rng(1)
        g = random_grasp(rng)
        moved = apply_rigid_transform(g, random_quaternion(rng), rng.uniform(-200, 200, 3))
        v1 = build_pose_vector(canonicalize(g)).values
        v2 = build_pose_vector(canonicalize(moved)).values
        assert np.abs(v1 - v2).max() < 1e-5

    def test_distinct_articulations_distinct_vectors(self):
        rng = np.random.default_rng(2)
        g1 = random_grasp(rng)
        g2 = random_grasp(rng)
        v1 = build_pose_vector(canonicalize(g1)).values
        v2 = build_pose_vector(canonicalize(g2)).values
        assert np.abs(v1 - v2).max() > 1e-3

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            c1 = canonicalize(random_grasp(rng))
            c2 = canonicalize(c1)
            v1 = build_pose_vector(c1).values
            v2 = build_pose_vector(c2).values
            assert np.abs(v1 - v2).max() < 1e-6


class TestPoseVector:
    def test_neutral_layout(self):
        v = build_pose_vector(neutral_grasp()).values
        expected = np.concatenate([np.tile([1.0, 0, 0, 0], 16), np.zeros(3)])
        assert np.array_equal(v, expected)

    def test_translation_only_changes_tail(self):
        g = neutral_grasp()
        moved = dataclasses.replace(
            g, object=ObjectPose(np.eye(3), np.array([10.0, 0.0, 0.0]))
        )
        v1 = build_pose_vector(g).values
        v2 = build_pose_vector(moved).values
        assert np.array_equal(v1[:-3], v2[:-3])
        assert np.array_equal(v2[-3:], [10.0, 0.0, 0.0])

    def test_dimension_for_15_joints(self):
        assert build_pose_vector(neutral_grasp(15)).dimension == 4 * 15 + 4 + 3 == 67

    def test_rejects_uncanonicalized(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ContractViolationError):
            build_pose_vector(random_grasp(rng))

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(5)
        g = canonicalize(random_grasp(rng))
        joints = list(g.hand.joint_rots)
        q = joints[3]
        joints[3] = Quaternion(-q.w, -q.x, -q.y, -q.z)
        flipped = dataclasses.replace(g, hand=HandPose(g.hand.global_orient, tuple(joints)))
        assert np.array_equal(build_pose_vector(g).values, build_pose_vector(flipped).values)


class TestCosine:
    def test_equal_vectors(self):
        assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
        assert pose_distance([1.0, 2.0], [1.0, 2.0]) == pytest.approx(0.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
        assert pose_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_hand_arithmetic(self):
        s = cosine_similarity([1.0, 0.0], [1.0 / math.sqrt(2), 1.0 / math.sqrt(2)])
        assert s == pytest.approx(math.sqrt(2) / 2, abs=1e-12)

    def test_antiparallel(self):
        assert pose_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidInputError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_symmetry_and_scale(self):
        rng = np.random.default_rng(6)
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert pose_distance(a, b) == pytest.approx(pose_distance(b, a))
        assert pose_distance(3.0 * a, b) == pytest.approx(pose_distance(a, b), abs=1e-12)


class TestPerturb:
    def test_small_angle_limit(self):
        q = random_quaternion(np.random.default_rng(0))
        out = perturb_orientation(q, 1e-9, np.random.default_rng(1))
        assert q.angle_deg_to(out) < 1e-6

    def test_angle_bounded_over_many_draws(self):
        q = random_quaternion(np.random.default_rng(2))
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            out = perturb_orientation(q, 25.0, rng)
            # relative rotation angle, checked through the matrix path
            rel = (q.conjugate() * out).to_matrix()
            assert rotation_angle_deg(rel) <= 25.0 + 1e-9

    def test_deterministic_under_seed(self):
        q = random_quaternion(np.random.default_rng(4))
        a = perturb_orientation(q, 30.0, np.random.default_rng(99))
        b = perturb_orientation(q, 30.0, np.random.default_rng(99))
        assert a == b

    def test_range_validation(self):
        q = Quaternion.identity()
        for bad in (0.0, -1.0, 181.0):
            with pytest.raises(ConfigError):
                perturb_orientation(q, bad, np.random.default_rng(0))


class TestAlignOrientation:
    def test_own_orientation_is_noop(self):
        rng = np.random.default_rng(7)
        g = random_grasp(rng)
        out = align_orientation(g, g.hand.global_orient)
        assert out.hand.global_orient == g.hand.global_orient
        assert np.abs(out.object.rotation - g.object.rotation).max() < 1e-9
        assert np.abs(out.object.translation - g.object.translation).max() < 1e-9

    def test_identity_reference(self):
        rng = np.random.default_rng(8)
        g = random_grasp(rng)
        out = align_orientation(g, Quaternion.identity())
        assert out.hand.global_orient == Quaternion.identity()

    def test_canonical_vector_invariant(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            g = random_grasp(rng)
            ref = random_quaternion(rng)
            v1 = build_pose_vector(canonicalize(g)).values
            v2 = build_pose_vector(canonicalize(align_orientation(g, ref))).values
            assert np.abs(v1 - v2).max() < 1e-5
