import dataclasses

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from handbooster.errors import ConfigError, InvalidInputError
from handbooster.labeling import label_sequence, rre, rte
from handbooster.pose import GraspRecord, HandPose, ObjectPose, Source

from conftest import random_quaternion


def make_frame(seq, t, rotation=None, translation=(0.0, 0.0, 0.0)) -> GraspRecord:
    return GraspRecord(
        hand=HandPose.neutral(15),
        object_id="ball",
        object=ObjectPose(np.eye(3) if rotation is None else rotation, np.asarray(translation, float)),
        source=Source.REAL,
        sequence_id=seq,
        frame_index=t,
    )


class TestErrors:
    def test_rre_identical(self):
        p = ObjectPose.identity()
        assert rre(p, p) == 0.0

    def test_rre_constructed_five_degrees(self):
        rng = np.random.default_rng(0)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        first = ObjectPose(Rotation.random(random_state=np.random.RandomState(1)).as_matrix(), np.zeros(3))
        delta = Rotation.from_rotvec(np.radians(5.0) * axis).as_matrix()
        current = ObjectPose(delta @ first.rotation, np.zeros(3))
        assert rre(first, current) == pytest.approx(5.0, abs=1e-6)

    def test_rre_antipodal(self):
        first = ObjectPose.identity()
        current = ObjectPose(Rotation.from_euler("x", 180, degrees=True).as_matrix(), np.zeros(3))
        assert rre(first, current) == pytest.approx(180.0, abs=1e-6)

    def test_rte_identical(self):
        p = ObjectPose.identity()
        assert rte(p, p) == 0.0

    def test_rte_pythagorean(self):
        first = ObjectPose.identity()
        current = ObjectPose(np.eye(3), np.array([3.0, 4.0, 0.0]))
        assert rte(first, current) == pytest.approx(5.0)

    def test_rte_axis(self):
        first = ObjectPose.identity()
        current = ObjectPose(np.eye(3), np.array([0.0, 0.0, 10.0]))
        assert rte(first, current) == pytest.approx(10.0)


class TestLabelSequence:
    def test_static_sequence_all_non_grasping(self):
        frames = [make_frame("s", t) for t in range(8)]
        labeled = label_sequence(frames)
        assert all(f.grasping is False for f in labeled)

    def test_translation_from_frame_10(self):
        frames = [
            make_frame("s", t, translation=(20.0, 0.0, 0.0) if t >= 10 else (0.0, 0.0, 0.0))
            for t in range(15)
        ]
        labeled = label_sequence(frames)
        assert [f.grasping for f in labeled] == [False] * 10 + [True] * 5

    def test_default_thresholds_are_5deg_10mm(self):
        import inspect

        sig = inspect.signature(label_sequence)
        assert sig.parameters["rre_thresh"].default == 5.0
        assert sig.parameters["rte_thresh"].default == 10.0

    def test_strictly_greater_at_boundary(self):
        frames = [
            make_frame("s", 0),
            make_frame("s", 1, translation=(10.0, 0.0, 0.0)),  # exactly at threshold
            make_frame("s", 2, translation=(10.0001, 0.0, 0.0)),
        ]
        labeled = label_sequence(frames)
        assert [f.grasping for f in labeled] == [False, False, True]

    def test_or_vs_and(self):
        rot = Rotation.from_euler("z", 8, degrees=True).as_matrix()
        frames = [make_frame("s", 0), make_frame("s", 1, rotation=rot)]
        assert label_sequence(frames, combine="or")[1].grasping is True
        assert label_sequence(frames, combine="and")[1].grasping is False
        both = [make_frame("s", 0), make_frame("s", 1, rotation=rot, translation=(0, 0, 12.0))]
        assert label_sequence(both, combine="and")[1].grasping is True

    def test_first_frame_never_grasping(self):
        frames = [make_frame("s", t, translation=(50.0 * t, 0, 0)) for t in range(3)]
        assert label_sequence(frames)[0].grasping is False

    def test_empty_and_mixed_ids_rejected(self):
        with pytest.raises(InvalidInputError):
            label_sequence([])
        with pytest.raises(InvalidInputError):
            label_sequence([make_frame("a", 0), make_frame("b", 1)])
        with pytest.raises(ConfigError):
            label_sequence([make_frame("a", 0)], combine="xor")

    def test_invariant_to_common_rigid_transform(self):
        rng = np.random.default_rng(3)
        frames = []
        for t in range(12):
            rot = Rotation.from_euler("y", 1.5 * t, degrees=True).as_matrix()
            frames.append(make_frame("s", t, rotation=rot, translation=(2.0 * t, 0, 0)))
        base = [f.grasping for f in label_sequence(frames)]
        q = random_quaternion(rng)
        r, t0 = q.to_matrix(), rng.uniform(-100, 100, 3)
        moved = [
            dataclasses.replace(
                f, object=ObjectPose(r @ f.object.rotation, r @ f.object.translation + t0)
            )
            for f in frames
        ]
        assert [f.grasping for f in label_sequence(moved)] == base

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(4)
        frames = []
        for t in range(20):
            rot = Rotation.from_euler("x", rng.uniform(0, 10), degrees=True).as_matrix()
            frames.append(make_frame("s", t, rotation=rot, translation=rng.uniform(-15, 15, 3)))
        tight = [f.grasping for f in label_sequence(frames, rre_thresh=3, rte_thresh=6)]
        loose = [f.grasping for f in label_sequence(frames, rre_thresh=6, rte_thresh=12)]
        for a, b in zip(tight, loose):
            assert a or not b, "loosening thresholds must never add a grasping label"
