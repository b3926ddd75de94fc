"""Curation toolkit for hand-object grasp datasets."""

from .assets import AssetRegistry
from .conditions import (
    Camera,
    ConditionSet,
    Material,
    make_novel_view_batch,
    rasterize,
    render_conditions,
)
from .config import PipelineConfig, load_config
from .errors import (
    AssetLookupError,
    ConfigError,
    ContractViolationError,
    DataError,
    DegenerateGeometryError,
    InvalidInputError,
    NonWatertightMeshError,
    ToolkitError,
)
from .geometry import MeshGeometry, Quaternion, rotation_angle_deg
from .labeling import label_sequence, rre, rte
from .metrics import (
    EvalRecord,
    edge_case_filter,
    f_score,
    pck_auc,
    position_error,
    procrustes_align,
    root_relative,
)
from .pose import (
    GraspRecord,
    HandPose,
    ObjectPose,
    PoseVector,
    Source,
    align_orientation,
    build_pose_vector,
    canonicalize,
    cosine_similarity,
    perturb_orientation,
    pose_distance,
)
from .pipeline import run_pipeline, run_single_stage
from .sampling import (
    PoseSet,
    SamplingDistribution,
    cross_distribution_weights,
    draw,
    farthest_pose_sampling,
    greedy_minmax_oracle,
)
from .skinning import Rig, joint_positions, load_rig, pose_mesh, save_rig
from .validation import (
    GraspThresholds,
    GraspVerdict,
    intersection_volume,
    min_surface_distance,
    self_penetration,
    validate_grasp,
)

__version__ = "0.1.0"
