import numpy as np
import pytest

from handbooster.fixtures import build_toy_objects, build_toy_rig, generate_fixture
from handbooster.geometry import Quaternion
from handbooster.pose import GraspRecord, HandPose, ObjectPose, Source


@pytest.fixture(scope="session")
def toy_rig():
    return build_toy_rig()


@pytest.fixture(scope="session")
def toy_objects():
    return build_toy_objects()


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """Compact dataset for pipeline tests: 24 real frames, 8 synthetic/object."""
    root = tmp_path_factory.mktemp("small-fixture")
    return generate_fixture(root, seed=11, real_frames=24, synthetic_per_object=8)


def random_quaternion(rng) -> Quaternion:
    v = rng.normal(size=4)
    while np.linalg.norm(v) < 1e-9:
        v = rng.normal(size=4)
    return Quaternion.from_array(v)


def random_grasp(rng, object_id="ball", joint_count=15, source=Source.SYNTHETIC,
                 sequence_id="seq", frame_index=0) -> GraspRecord:
    joints = tuple(random_quaternion(rng) for _ in range(joint_count))
    return GraspRecord(
        hand=HandPose(random_quaternion(rng), joints),
        object_id=object_id,
        object=ObjectPose(random_quaternion(rng).to_matrix(), rng.uniform(-80, 80, 3)),
        source=source,
        sequence_id=sequence_id,
        frame_index=frame_index,
        hand_translation=rng.uniform(-80, 80, 3),
    )
