"""Hand-mesh evaluation metrics and the edge-case filter gate.

Errors are millimeters. Position errors are reported root-relative and
after a closed-form similarity alignment (rotation, uniform scale,
translation). AUC integrates the fraction-below-threshold curve over
[0, 50] mm by default; F-scores use nearest-neighbor matching at 5 and
15 mm like the public hand benchmarks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, InvalidInputError

F_SCORE_THRESHOLDS_MM = (5.0, 15.0)
AUC_MAX_THRESHOLD_MM = 50.0
AUC_STEPS = 100


def root_relative(points, root_index: int = 0) -> np.ndarray:
    """Subtract the root point from every point."""
    pts = np.asarray(points, dtype=np.float64)
    if not 0 <= root_index < len(pts):
        raise InvalidInputError(f"root index {root_index} out of range for {len(pts)} points")
    return pts - pts[root_index]


def position_error(pred, gt) -> float:
    """Mean per-point Euclidean distance in mm."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {g.shape}")
    return float(np.linalg.norm(p - g, axis=-1).mean())


def similarity_transform(pred, gt) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form (scale, rotation, translation) minimizing ||s R p + t - g||^2.

    Uses the cross-covariance SVD with a determinant correction so the
    rotation is proper. Raises on coincident or collinear point sets.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 3:
        raise InvalidInputError(f"expected matching (N, 3) arrays, got {p.shape} and {g.shape}")
    n = len(p)
    if n < 3:
        raise DegenerateGeometryError("similarity alignment needs at least 3 points")
    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    xp = p - mu_p
    xg = g - mu_g
    var_p = float((xp**2).sum()) / n
    cov = xg.T @ xp / n
    u, s, vt = np.linalg.svd(cov)
    if var_p < 1e-12 or s[1] <= 1e-9 * max(s[0], 1e-12):
        raise DegenerateGeometryError("point set is coincident or collinear")
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = float((s * d).sum()) / var_p
    trans = mu_g - scale * rot @ mu_p
    return scale, rot, trans


def procrustes_align(pred, gt) -> np.ndarray:
    """Predictions mapped through the optimal similarity transform onto gt."""
    scale, rot, trans = similarity_transform(pred, gt)
    return scale * np.asarray(pred, dtype=np.float64) @ rot.T + trans


def pck_auc(errors, t_max: float = AUC_MAX_THRESHOLD_MM, steps: int = AUC_STEPS) -> float:
    """Area under the threshold -> fraction-below curve, normalized to [0, 1].

    Thresholds get 1e-9 mm of slack so numerically-zero errors (e.g. the
    residue of an exact similarity alignment) count as correct at t=0.
    """
    e = np.asarray(errors, dtype=np.float64).ravel()
    if not len(e):
        raise InvalidInputError("AUC of an empty error list is undefined")
    if t_max <= 0 or steps < 1:
        raise InvalidInputError(f"bad AUC parameters t_max={t_max} steps={steps}")
    thresholds = np.linspace(0.0, t_max, steps + 1)
    fractions = (e[None, :] <= thresholds[:, None] + 1e-9).mean(axis=1)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(fractions, thresholds) / t_max)


def f_score(pred_vertices, gt_vertices, t: float, matching: str = "nearest") -> float:
    """Harmonic mean of point-cloud precision and recall at threshold t mm.

    matching='nearest' (default) pairs each point with the closest point of
    the other cloud; matching='index' compares same-index points instead.
    """
    p = np.asarray(pred_vertices, dtype=np.float64)
    g = np.asarray(gt_vertices, dtype=np.float64)
    if not len(p) or not len(g):
        raise InvalidInputError("f-score requires non-empty point sets")
    if matching == "nearest":
        d_pred = cKDTree(g).query(p)[0]
        d_gt = cKDTree(p).query(g)[0]
    elif matching == "index":
        if p.shape != g.shape:
            raise InvalidInputError("index matching requires equal shapes")
        d_pred = d_gt = np.linalg.norm(p - g, axis=-1)
    else:
        raise InvalidInputError(f"unknown matching mode {matching!r}")
    precision = float((d_pred <= t).mean())
    recall = float((d_gt <= t).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalRecord:
    """Predicted vs ground-truth joints/vertices plus derived errors (mm)."""

    sample_id: str
    pred_joints: np.ndarray
    gt_joints: np.ndarray
    pred_vertices: np.ndarray
    gt_vertices: np.ndarray
    j_pe: float
    v_pe: float
    j_pe_pa: float
    v_pe_pa: float

    @classmethod
    def from_arrays(cls, sample_id, pred_joints, gt_joints, pred_vertices, gt_vertices,
                    root_index: int = 0) -> "EvalRecord":
        pj = np.asarray(pred_joints, dtype=np.float64)
        gj = np.asarray(gt_joints, dtype=np.float64)
        pv = np.asarray(pred_vertices, dtype=np.float64)
        gv = np.asarray(gt_vertices, dtype=np.float64)
        if pj.shape != gj.shape or pv.shape != gv.shape:
            raise InvalidInputError(f"pred/gt shapes differ for sample {sample_id!r}")
        # vertices are root-centered by the respective root joint
        j_pe = position_error(root_relative(pj, root_index), root_relative(gj, root_index))
        v_pe = position_error(pv - pj[root_index], gv - gj[root_index])
        j_pe_pa = position_error(procrustes_align(pj, gj), gj)
        v_pe_pa = position_error(procrustes_align(pv, gv), gv)
        return cls(str(sample_id), pj, gj, pv, gv, j_pe, v_pe, j_pe_pa, v_pe_pa)


def edge_case_filter(records, j_thresh: float, v_thresh: float):
    """Partition records into (kept, dropped); a record drops when either
    its joint or vertex error exceeds its threshold. Order is preserved."""
    if j_thresh <= 0 or v_thresh <= 0:
        raise InvalidInputError("edge-case thresholds must be positive")
    kept, dropped = [], []
    for r in records:
        (dropped if (r.j_pe > j_thresh or r.v_pe > v_thresh) else kept).append(r)
    return kept, dropped


def _per_point_errors(records, kind: str, aligned: bool) -> list[np.ndarray]:
    chunks = []
    for r in records:
        if kind == "joints":
            pred, gt = r.pred_joints, r.gt_joints
        else:
            pred, gt = r.pred_vertices, r.gt_vertices
        if aligned:
            pred = procrustes_align(pred, gt)
        else:
            if kind == "joints":
                pred = root_relative(pred)
                gt = root_relative(gt)
            else:
                pred = pred - r.pred_joints[0]
                gt = gt - r.gt_joints[0]
        chunks.append(np.linalg.norm(pred - gt, axis=-1))
    return chunks


def _auc(chunks: list[np.ndarray], mode: str, t_max: float, steps: int) -> float:
    if mode == "pooled":
        return pck_auc(np.concatenate(chunks), t_max, steps)
    if mode == "per_point":
        # one AUC per keypoint column, averaged; needs uniform point counts
        matrix = np.stack(chunks)
        per_point = [pck_auc(matrix[:, j], t_max, steps) for j in range(matrix.shape[1])]
        return float(np.mean(per_point))
    raise InvalidInputError(f"unknown AUC mode {mode!r}")


def summarize(
    records,
    auc_max: float = AUC_MAX_THRESHOLD_MM,
    auc_steps: int = AUC_STEPS,
    auc_mode: str = "pooled",
) -> dict:
    """Aggregate metrics over records: mean PEs, AUCs, mean F-scores.

    auc_mode='pooled' integrates one curve over all point errors;
    'per_point' averages one AUC per keypoint index across records.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("cannot summarize zero records")
    out: dict[str, dict[str, float]] = {}
    for setting, aligned in (("root_relative", False), ("procrustes", True)):
        ej = _per_point_errors(records, "joints", aligned)
        ev = _per_point_errors(records, "vertices", aligned)
        f_scores = {}
        for t in F_SCORE_THRESHOLDS_MM:
            vals = []
            for r in records:
                pv = procrustes_align(r.pred_vertices, r.gt_vertices) if aligned else r.pred_vertices - r.pred_joints[0]
                gv = r.gt_vertices if aligned else r.gt_vertices - r.gt_joints[0]
                vals.append(f_score(pv, gv, t))
            f_scores[t] = float(np.mean(vals))
        out[setting] = {
            "j_pe": float(np.mean([r.j_pe_pa if aligned else r.j_pe for r in records])),
            "v_pe": float(np.mean([r.v_pe_pa if aligned else r.v_pe for r in records])),
            "j_auc": _auc(ej, auc_mode, auc_max, auc_steps),
            "v_auc": _auc(ev, auc_mode, auc_max, auc_steps),
            "f@5": f_scores[5.0],
            "f@15": f_scores[15.0],
        }
    out["samples"] = len(records)
    return out


def format_report_table(summary: dict) -> str:
    header = f"{'setting':<16}{'J-PE':>8}{'J-AUC':>8}{'V-PE':>8}{'V-AUC':>8}{'F@5':>8}{'F@15':>8}"
    rows = [header]
    for name, key in (("root-relative", "root_relative"), ("procrustes", "procrustes")):
        m = summary[key]
        rows.append(
            f"{name:<16}{m['j_pe']:>8.2f}{m['j_auc']:>8.3f}{m['v_pe']:>8.2f}"
            f"{m['v_auc']:>8.3f}{m['f@5']:>8.3f}{m['f@15']:>8.3f}"
        )
    return "\n".join(rows)


def read_predictions_jsonl(path) -> dict[str, dict]:
    """JSON-lines of {sample_id, joints, vertices} keyed by sample id."""
    out: dict[str, dict] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}:{lineno}: bad JSON: {e}") from e
        if "sample_id" not in row:
            raise InvalidInputError(f"{path}:{lineno}: missing sample_id")
        out[str(row["sample_id"])] = row
    return out
