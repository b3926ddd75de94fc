"""Forward kinematics and linear blend skinning over a rig asset.

The rig replaces a licensed parametric hand model: a rest-pose template
mesh, a joint tree (J articulated joints plus one root), and row-stochastic
skinning weights over all J+1 joints. Rig assets are single JSON documents
with base64-embedded little-endian float32 arrays; see docs/rig_schema.md.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .geometry import MeshGeometry, compute_vertex_normals, _readonly
from .pose import HandPose

RIG_FORMAT = "rig-json/1"


@dataclass(frozen=True)
class Rig:
    """Immutable skinning asset; joint 0 may appear anywhere, root parent is -1."""

    template: MeshGeometry
    joint_rest_positions: np.ndarray  # (J+1, 3) mm
    parents: np.ndarray  # (J+1,) int, exactly one -1
    weights: np.ndarray  # (V, J+1) row-stochastic

    def __post_init__(self):
        rest = np.asarray(self.joint_rest_positions, dtype=np.float64)
        parents = np.asarray(self.parents, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        n_joints = len(rest)
        if rest.ndim != 2 or rest.shape[1] != 3:
            raise InvalidInputError("joint_rest_positions must be (J+1, 3)")
        if parents.shape != (n_joints,):
            raise InvalidInputError("parents length must match joint count")
        if w.shape != (self.template.vertex_count, n_joints):
            raise InvalidInputError(
                f"weights must be (V, J+1) == ({self.template.vertex_count}, {n_joints})"
            )
        if (w < 0).any():
            raise InvalidInputError("skinning weights must be non-negative")
        if np.abs(w.sum(axis=1) - 1.0).max() > 1e-5:
            raise InvalidInputError("each skinning weight row must sum to 1")
        roots = np.nonzero(parents < 0)[0]
        if len(roots) != 1:
            raise InvalidInputError(f"joint tree needs exactly one root, found {len(roots)}")
        order = self._toposort(parents, int(roots[0]))
        object.__setattr__(self, "joint_rest_positions", _readonly(rest))
        object.__setattr__(self, "parents", _readonly(parents))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "_topo_order", order)
        object.__setattr__(self, "_root", int(roots[0]))

    @staticmethod
    def _toposort(parents: np.ndarray, root: int) -> tuple[int, ...]:
        children: dict[int, list[int]] = {}
        for j, p in enumerate(parents):
            if p >= 0:
                children.setdefault(int(p), []).append(j)
        order = [root]
        stack = list(reversed(children.get(root, [])))
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(children.get(j, [])))
        if len(order) != len(parents):
            raise InvalidInputError("joint tree has a cycle or unreachable joints")
        return tuple(order)

    @property
    def joint_count(self) -> int:
        """Total joints including the root (J+1)."""
        return len(self.joint_rest_positions)

    @property
    def articulated_count(self) -> int:
        return self.joint_count - 1


def _joint_world_transforms(rig: Rig, pose: HandPose) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint world rotation (J+1,3,3) and origin (J+1,3) before the global transform."""
    if pose.joint_count != rig.articulated_count:
        raise InvalidInputError(
            f"pose has {pose.joint_count} joint rotations, rig expects {rig.articulated_count}"
        )
    n = rig.joint_count
    local = np.tile(np.eye(3), (n, 1, 1))
    root = rig._root
    art = [j for j in range(n) if j != root]
    for q, j in zip(pose.joint_rots, art):
        local[j] = q.to_matrix()
    rest = rig.joint_rest_positions
    rot = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    for j in rig._topo_order:
        p = rig.parents[j]
        if p < 0:
            rot[j] = local[j]
            pos[j] = rest[j]
        else:
            rot[j] = rot[p] @ local[j]
            pos[j] = rot[p] @ (rest[j] - rest[p]) + pos[p]
    return rot, pos


def joint_positions(rig: Rig, pose: HandPose, global_translation=(0.0, 0.0, 0.0)) -> np.ndarray:
    """World joint positions (J+1, 3); bone lengths are pose-invariant."""
    _, pos = _joint_world_transforms(rig, pose)
    rg = pose.global_orient.to_matrix()
    t = np.asarray(global_translation, dtype=np.float64)
    return pos @ rg.T + t


def pose_mesh(rig: Rig, pose: HandPose, global_translation=(0.0, 0.0, 0.0)) -> MeshGeometry:
    """Skin the template: FK along the tree, blend by weights, then apply
    the global orientation and translation. Faces and colors pass through;
    normals are recomputed on the posed surface."""
    rot, pos = _joint_world_transforms(rig, pose)
    rest = rig.joint_rest_positions
    # skinning transform per joint: x -> rot @ (x - rest) + pos
    offs = pos - np.einsum("jab,jb->ja", rot, rest)
    w = rig.weights
    blended_rot = np.einsum("vj,jab->vab", w, rot)
    blended_off = w @ offs
    v = np.einsum("vab,vb->va", blended_rot, rig.template.vertices) + blended_off
    rg = pose.global_orient.to_matrix()
    v = v @ rg.T + np.asarray(global_translation, dtype=np.float64)
    posed = MeshGeometry(v, rig.template.faces, colors=rig.template.colors,
                         uvs=rig.template.uvs)
    return compute_vertex_normals(posed)


def _encode_array(a: np.ndarray, dtype: str) -> dict:
    arr = np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<"))
    return {
        "dtype": dtype,
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_array(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
    return arr.reshape(entry["shape"]).astype(
        np.float64 if entry["dtype"].startswith("float") else np.int64
    )


def save_rig(rig: Rig, path) -> None:
    doc = {
        "format": RIG_FORMAT,
        "joint_count": rig.joint_count,
        "parents": [int(p) for p in rig.parents],
        "template_vertices": _encode_array(rig.template.vertices, "float32"),
        "faces": _encode_array(rig.template.faces, "int32"),
        "joint_rest_positions": _encode_array(rig.joint_rest_positions, "float32"),
        "skin_weights": _encode_array(rig.weights, "float32"),
    }
    if rig.template.colors is not None:
        doc["vertex_colors"] = _encode_array(rig.template.colors, "float32")
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_rig(path) -> Rig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"cannot read rig asset {path}: {e}") from e
    if doc.get("format") != RIG_FORMAT:
        raise InvalidInputError(f"unrecognized rig format {doc.get('format')!r}")
    colors = _decode_array(doc["vertex_colors"]) if "vertex_colors" in doc else None
    template = MeshGeometry(
        _decode_array(doc["template_vertices"]),
        _decode_array(doc["faces"]).astype(np.int32),
        colors=None if colors is None else np.clip(colors, 0.0, 1.0),
    )
    weights = _decode_array(doc["skin_weights"])
    # float32 storage: renormalize rows to keep the row-stochastic invariant
    weights = weights / weights.sum(axis=1, keepdims=True)
    return Rig(
        template=template,
        joint_rest_positions=_decode_array(doc["joint_rest_positions"]),
        parents=np.array(doc["parents"], dtype=np.int64),
        weights=weights,
    )
