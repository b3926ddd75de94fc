"""Diversity-aware pose sampling.

Two strategies per object category: greedy farthest-pose selection inside
one pose set (max-min over the cosine distance), and similarity-weighted
sampling of a synthetic set against a selected real set, where a synthetic
pose's probability grows with its total dissimilarity to the real poses.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .pose import GraspRecord, Source, build_pose_vector, canonicalize

EPSILON_FLOOR = 1e-3


@dataclass(frozen=True)
class PoseSet:
    """Parallel pose vectors and records for one object category."""

    object_id: str
    vectors: np.ndarray  # (k, n) float64
    records: tuple[GraspRecord, ...]
    source: Source
    source_indices: tuple[int, ...] | None = None  # indices into the parent set
    min_distance_trace: tuple[float, ...] | None = None  # per pick after the first

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidInputError(f"vectors must be (k, n), got shape {v.shape}")
        if len(v) != len(self.records):
            raise InvalidInputError("vectors and records must have equal length")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "source", Source(self.source))

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_records(cls, object_id: str, records, source: Source) -> "PoseSet":
        """Canonicalize records and stack their pose vectors."""
        records = tuple(records)
        if not records:
            return cls(object_id, np.zeros((0, 0)), (), source)
        canon = [canonicalize(r) for r in records]
        vectors = np.stack([build_pose_vector(r).values for r in canon])
        return cls(object_id, vectors, records, source)

    def subset(self, indices, trace=None) -> "PoseSet":
        idx = [int(i) for i in indices]
        return PoseSet(
            self.object_id,
            self.vectors[idx],
            tuple(self.records[i] for i in idx),
            self.source,
            source_indices=tuple(idx),
            min_distance_trace=None if trace is None else tuple(float(t) for t in trace),
        )


@dataclass(frozen=True)
class SamplingDistribution:
    """Categorical distribution over a synthetic pose set."""

    object_id: str
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or not len(p):
            raise InvalidInputError("probabilities must be a non-empty 1-d array")
        if (p < 0).any():
            raise InvalidInputError("probabilities must be non-negative")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise InvalidInputError(f"probabilities sum to {p.sum()!r}, expected 1")
        object.__setattr__(self, "probabilities", p)


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if (norms < 1e-12).any():
        raise InvalidInputError("pose set contains a zero-norm vector")
    return vectors / norms[:, None]


def farthest_point_indices(
    vectors: np.ndarray, m: int, start_index: int
) -> tuple[list[int], list[float]]:
    """Greedy max-min selection order plus the distance trace.

    Each round picks the remaining vector whose minimum cosine distance to
    the selection is largest; ties break toward the lowest index. The trace
    holds that max-min distance for every pick after the first.
    """
    u = _unit_rows(np.asarray(vectors, dtype=np.float64))
    k = len(u)
    if not 0 <= start_index < k:
        raise InvalidInputError(f"start index {start_index} out of range for {k} poses")
    if not 1 <= m <= k:
        raise InvalidInputError(f"sample count {m} out of range [1, {k}]")
    selected = [int(start_index)]
    trace: list[float] = []
    min_dist = 1.0 - u @ u[start_index]
    min_dist[start_index] = -np.inf
    while len(selected) < m:
        idx = int(np.argmax(min_dist))  # first max == lowest index on ties
        trace.append(float(min_dist[idx]))
        selected.append(idx)
        min_dist = np.minimum(min_dist, 1.0 - u @ u[idx])
        min_dist[idx] = -np.inf
    return selected, trace


def farthest_pose_sampling(pose_set: PoseSet, m: int, seed: int) -> PoseSet:
    """Farthest pose sampling: seed-selected start, then greedy max-min picks."""
    if not len(pose_set):
        raise InvalidInputError("cannot sample from an empty pose set")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(len(pose_set)))
    indices, trace = farthest_point_indices(pose_set.vectors, m, start)
    return pose_set.subset(indices, trace)


def greedy_minmax_oracle(pose_set: PoseSet, m: int, start_index: int) -> PoseSet:
    """Reference selection that re-scans all pairwise distances every round.

    Same contract as farthest_pose_sampling with an explicit start; kept
    free of the incremental min-distance update so the two paths check
    each other.
    """
    if not len(pose_set):
        raise InvalidInputError("cannot sample from an empty pose set")
    u = _unit_rows(pose_set.vectors)
    k = len(u)
    if not 1 <= m <= k:
        raise InvalidInputError(f"sample count {m} out of range [1, {k}]")
    dist = 1.0 - u @ u.T  # full pairwise matrix, rebuilt view each round below
    selected = [int(start_index)]
    trace: list[float] = []
    while len(selected) < m:
        candidate = dist[:, selected].min(axis=1)
        candidate[selected] = -np.inf
        idx = int(np.argmax(candidate))
        trace.append(float(candidate[idx]))
        selected.append(idx)
    return pose_set.subset(selected, trace)


def cross_distribution_weights(
    synthetic: PoseSet, real: PoseSet, floor: float = EPSILON_FLOOR
) -> SamplingDistribution:
    """Sampling probabilities over synthetic poses from dissimilarity scores.

    score_i = sum_j (1 - cos(v_i_synthetic, v_j_real)); scores are min-max
    normalized to [0, 1], floored at `floor` so the most-similar pose stays
    reachable, then divided by their sum. Equal scores yield the uniform
    distribution.
    """
    if not len(synthetic) or not len(real):
        raise InvalidInputError("cross-distribution weights need non-empty pose sets")
    if synthetic.vectors.shape[1] != real.vectors.shape[1]:
        raise InvalidInputError(
            f"vector dimension mismatch: {synthetic.vectors.shape[1]} vs {real.vectors.shape[1]}"
        )
    if synthetic.object_id != real.object_id:
        raise InvalidInputError(
            f"object mismatch: {synthetic.object_id!r} vs {real.object_id!r}"
        )
    us = _unit_rows(synthetic.vectors)
    ur = _unit_rows(real.vectors)
    scores = (1.0 - us @ ur.T).sum(axis=1)
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        probs = np.full(len(scores), 1.0 / len(scores))
    else:
        normed = (scores - lo) / (hi - lo)
        floored = np.maximum(normed, floor)
        probs = floored / floored.sum()
    return SamplingDistribution(synthetic.object_id, probs)


def draw(dist: SamplingDistribution, k: int, seed: int) -> np.ndarray:
    """k seeded categorical draws with replacement."""
    if k < 1:
        raise InvalidInputError(f"draw count must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    return rng.choice(len(dist.probabilities), size=k, replace=True, p=dist.probabilities)
