"""Staged curation pipeline: label -> sample -> validate -> render -> filter.

Each stage reads and writes files inside one snapshot directory, so the
monolithic run and the per-stage CLI subcommands share identical code
paths and produce byte-identical outputs under the same seed. All
randomness derives from the root seed through keyed seed sequences, which
keeps results independent of worker count and scheduling.

Multi-view outputs: a condition set keeps its source record's sequence id
in its filename stem `{sequence}_{frame}_{view:03d}`; the corresponding
output-manifest row qualifies the sequence id as `{sequence}.{view:03d}`
so frame indices stay unique per manifest sequence.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assets import AssetRegistry
from .conditions import (
    Camera,
    condition_file_payload,
    realize_view,
    render_conditions,
    view_tasks,
)
from .config import PipelineConfig, config_hash
from .errors import ConfigError, DataError, ToolkitError
from .labeling import label_sequence
from .manifest import (
    read_manifest,
    record_from_dict,
    record_to_dict,
    validate_against_registry,
    write_manifest,
)
from .metrics import (
    F_SCORE_THRESHOLDS_MM,
    EvalRecord,
    edge_case_filter,
    read_predictions_jsonl,
)
from .pose import GraspRecord, Source, align_orientation, perturb_orientation
from .sampling import (
    PoseSet,
    SamplingDistribution,
    cross_distribution_weights,
    draw,
    farthest_pose_sampling,
)
from .skinning import load_rig
from .validation import GraspThresholds, validate_grasp

STAGE_ORDER = ("label", "sample", "validate", "render", "filter")

_STAGE_INPUTS = {
    "label": (),
    "sample": ("labeled.jsonl",),
    "validate": ("candidates.jsonl",),
    "render": ("labeled.jsonl", "accepted.jsonl"),
    "filter": ("output_manifest.jsonl",),
}


def derive_seed(root: int, *keys) -> int:
    parts = [int(root) & 0xFFFFFFFF]
    for k in keys:
        digest = hashlib.blake2b(str(k).encode(), digest_size=8).digest()
        parts.append(int.from_bytes(digest, "big"))
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint64)[0])


def derive_rng(root: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *keys))


def format_plan(cfg: PipelineConfig) -> str:
    lines = [
        "pipeline plan (dry run)",
        f"  config hash: {config_hash(cfg)}",
        f"  seed: {cfg.seed}",
        "  stages: " + " -> ".join(STAGE_ORDER),
        f"  real pose samples per object (M): {cfg.real_samples}",
        f"  synthetic pose samples per object (N): {cfg.synthetic_samples}",
        f"  grasp label thresholds: RRE > {cfg.rre_threshold_deg:g} deg "
        f"{cfg.grasp_rule.upper()} RTE > {cfg.rte_threshold_mm:g} mm",
        f"  condition resolution: {cfg.resolution}x{cfg.resolution}",
        f"  f-score thresholds: {F_SCORE_THRESHOLDS_MM[0]:g} mm / {F_SCORE_THRESHOLDS_MM[1]:g} mm",
        f"  contact threshold: {cfg.contact_threshold_mm:g} mm; "
        f"volume threshold: {cfg.volume_threshold_cm3:g} cm^3",
        f"  draws per object: {cfg.draws_per_object} (retry cap {cfg.retry_cap}); "
        f"views per grasping pose: {cfg.views_per_pose}",
        f"  orientation perturbation: up to {cfg.max_perturbation_deg:g} deg",
        f"  workers: {cfg.workers}",
        f"  output: {cfg.output_dir}",
    ]
    return "\n".join(lines)


def _new_report(cfg: PipelineConfig) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "stages": {},
        "warnings": [],
    }


def _write_report(work: Path, report: dict) -> None:
    (work / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")


def _registry_label(cfg: PipelineConfig) -> str:
    return cfg.asset_registry.name


def _joint_count(cfg: PipelineConfig) -> int:
    return load_rig(cfg.rig).articulated_count


def _check_inputs(cfg: PipelineConfig) -> None:
    if not Path(cfg.rig).is_file():
        raise DataError(f"rig asset not found: {cfg.rig}")
    if not Path(cfg.asset_registry).is_dir():
        raise DataError(f"asset registry not found: {cfg.asset_registry}")
    for name in ("real_manifest", "synthetic_manifest", "predictions"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).is_file():
            raise DataError(f"{name} not found: {p}")


# ---------------------------------------------------------------------------
# stages


def stage_label(cfg: PipelineConfig, work: Path, report: dict) -> None:
    registry = AssetRegistry(cfg.asset_registry)
    records: list[GraspRecord] = []
    if cfg.real_manifest is not None:
        raw, _header = read_manifest(cfg.real_manifest)
        validate_against_registry(raw, registry)
        groups: dict[str, list[GraspRecord]] = {}
        for r in raw:
            groups.setdefault(r.sequence_id, []).append(r)
        for seq in sorted(groups):
            frames = sorted(groups[seq], key=lambda r: r.frame_index)
            records.extend(
                label_sequence(
                    frames,
                    rre_thresh=cfg.rre_threshold_deg,
                    rte_thresh=cfg.rte_threshold_mm,
                    combine=cfg.grasp_rule,
                )
            )
    write_manifest(work / "labeled.jsonl", records, _joint_count(cfg), _registry_label(cfg))
    report["stages"]["label"] = {
        "sequences": len({r.sequence_id for r in records}),
        "frames": len(records),
        "grasping": sum(1 for r in records if r.grasping),
    }


def stage_sample(cfg: PipelineConfig, work: Path, report: dict) -> None:
    real, header = read_manifest(work / "labeled.jsonl")
    registry = AssetRegistry(cfg.asset_registry)
    synthetic: list[GraspRecord] = []
    if cfg.synthetic_manifest is not None:
        synthetic, _ = read_manifest(cfg.synthetic_manifest)
        validate_against_registry(synthetic, registry)
    objects = sorted({r.object_id for r in real} | {r.object_id for r in synthetic})
    candidates: list[GraspRecord] = []
    sampling_report: dict = {"objects": {}}
    for obj in objects:
        real_obj = [r for r in real if r.object_id == obj]
        real_grasping = [r for r in real_obj if r.grasping]
        syn_obj = [r for r in synthetic if r.object_id == obj]
        entry: dict = {
            "real_pool": len(real_grasping),
            "synthetic_pool": len(syn_obj),
        }
        q_real = None
        if real_grasping:
            pool = PoseSet.from_records(obj, real_grasping, Source.REAL)
            m_eff = min(cfg.real_samples, len(pool))
            q_real = farthest_pose_sampling(pool, m_eff, derive_seed(cfg.seed, "fps-real", obj))
            entry["real_selected"] = list(q_real.source_indices)
            entry["real_min_distance_trace"] = list(q_real.min_distance_trace)
        if syn_obj:
            pool = PoseSet.from_records(obj, syn_obj, Source.SYNTHETIC)
            n_eff = min(cfg.synthetic_samples, len(pool))
            q_syn = farthest_pose_sampling(pool, n_eff, derive_seed(cfg.seed, "fps-syn", obj))
            entry["synthetic_selected"] = list(q_syn.source_indices)
            entry["synthetic_min_distance_trace"] = list(q_syn.min_distance_trace)
            if q_real is not None:
                dist = cross_distribution_weights(q_syn, q_real)
                # audit view of the sampled real-vs-synthetic similarity mix
                us = q_syn.vectors / np.linalg.norm(q_syn.vectors, axis=1, keepdims=True)
                ur = q_real.vectors / np.linalg.norm(q_real.vectors, axis=1, keepdims=True)
                counts, edges = np.histogram((us @ ur.T).ravel(), bins=20, range=(-1.0, 1.0))
                entry["similarity_histogram"] = {
                    "bin_edges": edges.tolist(),
                    "counts": counts.tolist(),
                }
            else:
                dist = SamplingDistribution(obj, np.full(len(q_syn), 1.0 / len(q_syn)))
                report["warnings"].append(
                    f"object {obj}: no real grasping poses, sampling synthetic uniformly"
                )
            entry["probabilities"] = dist.probabilities.tolist()
            idx = draw(
                dist, cfg.draws_per_object * cfg.retry_cap, derive_seed(cfg.seed, "draw", obj)
            )
            entry["draws"] = [int(i) for i in idx]
            ref_pool = real_grasping or real_obj
            for slot in range(cfg.draws_per_object):
                for attempt in range(cfg.retry_cap):
                    i = int(idx[slot * cfg.retry_cap + attempt])
                    base = q_syn.records[i]
                    rng = derive_rng(cfg.seed, "orient", obj, slot, attempt)
                    if ref_pool:
                        ref = ref_pool[int(rng.integers(len(ref_pool)))].hand.global_orient
                    else:
                        ref = base.hand.global_orient
                    target = perturb_orientation(ref, cfg.max_perturbation_deg, rng)
                    cand = align_orientation(base, target)
                    cand = dataclasses.replace(
                        cand,
                        sequence_id=f"syn-{obj}-s{slot:03d}",
                        frame_index=attempt,
                        grasping=True,
                    )
                    candidates.append(cand)
        sampling_report["objects"][obj] = entry
    novel_view_only = not synthetic
    write_manifest(work / "candidates.jsonl", candidates, header.joint_count, _registry_label(cfg))
    (work / "sampling_report.json").write_text(
        json.dumps(sampling_report, sort_keys=True) + "\n"
    )
    if novel_view_only:
        report["warnings"].append("synthetic pool empty: running in novel-view-only mode")
    report["stages"]["sample"] = {
        "objects": len(objects),
        "candidates": len(candidates),
        "novel_view_only": novel_view_only,
    }


def stage_validate(cfg: PipelineConfig, work: Path, report: dict) -> None:
    candidates, header = read_manifest(work / "candidates.jsonl")
    rig = load_rig(cfg.rig)
    registry = AssetRegistry(cfg.asset_registry)
    thresholds = GraspThresholds(
        contact_mm=cfg.contact_threshold_mm,
        volume_cm3=cfg.volume_threshold_cm3,
        voxel_mm=cfg.voxel_pitch_mm,
    )
    slots: dict[str, dict[str, list[GraspRecord]]] = {}
    for c in candidates:
        slots.setdefault(c.object_id, {}).setdefault(c.sequence_id, []).append(c)
    accepted: list[GraspRecord] = []
    rejected: dict[str, int] = {}
    skipped_objects: list[str] = []
    evaluated = 0
    rejected_count = 0
    for obj in sorted(slots):
        obj_accepted: list[GraspRecord] = []
        exhausted = False
        for seq in sorted(slots[obj]):
            attempts = sorted(slots[obj][seq], key=lambda r: r.frame_index)
            chosen = None
            for cand in attempts:
                verdict = validate_grasp(cand, rig, registry, thresholds)
                evaluated += 1
                if verdict.valid:
                    chosen = cand
                    break
                rejected_count += 1
                for reason in verdict.reasons:
                    rejected[reason] = rejected.get(reason, 0) + 1
            if chosen is None:
                exhausted = True
                break
            obj_accepted.append(chosen)
        if exhausted:
            skipped_objects.append(obj)
            report["warnings"].append(
                f"object {obj}: retry cap exhausted, no valid synthetic pose; object skipped"
            )
        else:
            accepted.extend(obj_accepted)
    write_manifest(work / "accepted.jsonl", accepted, header.joint_count, _registry_label(cfg))
    report["stages"]["validate"] = {
        "accepted": len(accepted),
        "evaluated": evaluated,
        "rejected_total": rejected_count,
        "unused_candidates": len(candidates) - evaluated,
        "rejected": dict(sorted(rejected.items())),
        "skipped_objects": skipped_objects,
    }


def default_camera(record: GraspRecord, resolution: int, distance_mm: float) -> Camera:
    """Frame the hand-object region from a fixed world direction."""
    rh = record.hand.global_orient.to_matrix()
    target = record.hand_translation + rh @ np.array([0.0, 60.0, -20.0])
    eye = target + np.array([0.0, 0.0, -distance_mm])
    f = 1.6 * resolution
    return Camera.look_at(eye, target, fx=f, fy=f, cx=resolution / 2.0, cy=resolution / 2.0)


_WORKER: dict = {}


def _render_worker_init(rig_path, registry_path, resolution, distance, emit_variant, joint_count):
    _WORKER["rig"] = load_rig(rig_path)
    _WORKER["registry"] = AssetRegistry(registry_path)
    _WORKER["resolution"] = resolution
    _WORKER["distance"] = distance
    _WORKER["emit_variant"] = emit_variant
    _WORKER["joint_count"] = joint_count


def _render_one(task: tuple) -> tuple[dict[str, bytes], dict]:
    record_dict, view, child_seed, max_angle = task
    record = record_from_dict(record_dict, _WORKER["joint_count"])
    posed = realize_view(record, child_seed, max_angle)
    camera = default_camera(posed, _WORKER["resolution"], _WORKER["distance"])
    cs = render_conditions(
        posed, _WORKER["rig"], _WORKER["registry"], camera, _WORKER["resolution"], view
    )
    row = record_to_dict(posed)
    row["sequence_id"] = f"{posed.sequence_id}.{view:03d}"
    return condition_file_payload(cs, _WORKER["emit_variant"]), row


def stage_render(cfg: PipelineConfig, work: Path, report: dict) -> None:
    real, header = read_manifest(work / "labeled.jsonl")
    accepted, _ = read_manifest(work / "accepted.jsonl")
    real_tasks = view_tasks(
        real, cfg.views_per_pose, cfg.max_perturbation_deg, derive_seed(cfg.seed, "views")
    )
    syn_tasks = [(r, 0, None, cfg.max_perturbation_deg) for r in accepted]
    tasks = sorted(
        real_tasks + syn_tasks,
        key=lambda t: (t[0].sequence_id, t[0].frame_index, t[1]),
    )
    payload_tasks = [
        (record_to_dict(record), view, child_seed, angle)
        for record, view, child_seed, angle in tasks
    ]
    init_args = (
        cfg.rig,
        cfg.asset_registry,
        cfg.resolution,
        cfg.camera_distance_mm,
        cfg.emit_variant_maps,
        header.joint_count,
    )
    if cfg.workers == 1:
        _render_worker_init(*init_args)
        results = [_render_one(t) for t in payload_tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=cfg.workers,
            initializer=_render_worker_init,
            initargs=init_args,
        ) as pool:
            results = list(pool.map(_render_one, payload_tasks, chunksize=1))
    cond_dir = work / "conditions"
    cond_dir.mkdir(exist_ok=True)
    rows = []
    for files, row in results:
        for name in sorted(files):
            (cond_dir / name).write_bytes(files[name])
        rows.append(row)
    out_records = [record_from_dict(r, header.joint_count) for r in rows]
    write_manifest(
        work / "output_manifest.jsonl", out_records, header.joint_count, _registry_label(cfg)
    )
    n_real = len(real_tasks)
    report["stages"]["render"] = {
        "condition_sets": len(results),
        "from_real": n_real,
        "from_synthetic": len(syn_tasks),
    }


def stage_filter(cfg: PipelineConfig, work: Path, report: dict) -> None:
    rows, header = read_manifest(work / "output_manifest.jsonl")
    if cfg.predictions is None:
        report["stages"]["filter"] = {
            "skipped": True,
            "reason": "no predictions file configured",
        }
        return
    preds = read_predictions_jsonl(cfg.predictions)
    from .geometry import load_obj

    cond_dir = work / "conditions"
    eval_records = []
    missing = 0
    for meta_path in sorted(cond_dir.glob("*.meta.json")):
        meta = json.loads(meta_path.read_text())
        stem = meta_path.name[: -len(".meta.json")]
        if stem not in preds:
            missing += 1
            continue
        row = preds[stem]
        gt_vertices = load_obj(cond_dir / meta["mesh"]).vertices
        eval_records.append(
            EvalRecord.from_arrays(
                stem,
                np.array(row["joints"], dtype=np.float64),
                np.array(meta["joints"], dtype=np.float64),
                np.array(row["vertices"], dtype=np.float64),
                gt_vertices,
            )
        )
    kept, dropped = edge_case_filter(
        eval_records, cfg.joint_error_threshold_mm, cfg.vertex_error_threshold_mm
    )
    kept_ids = set()
    for r in kept:
        seq, frame, view = r.sample_id.rsplit("_", 2)
        kept_ids.add((f"{seq}.{view}", int(frame)))
    kept_rows = [r for r in rows if (r.sequence_id, r.frame_index) in kept_ids]
    write_manifest(
        work / "kept_manifest.jsonl", kept_rows, header.joint_count, _registry_label(cfg)
    )
    report["stages"]["filter"] = {
        "evaluated": len(eval_records),
        "kept": len(kept),
        "dropped": len(dropped),
        "dropped_ids": sorted(r.sample_id for r in dropped),
        "missing_predictions": missing,
    }


_STAGE_FUNCS = {
    "label": stage_label,
    "sample": stage_sample,
    "validate": stage_validate,
    "render": stage_render,
    "filter": stage_filter,
}


# ---------------------------------------------------------------------------
# runners


def _prepare_output(out: Path) -> Path:
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} exists and is not empty")
    tmp = out.parent / (out.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    return tmp


def _publish(tmp: Path, out: Path) -> None:
    if out.exists():
        out.rmdir()
    tmp.rename(out)


def _run_stages(cfg: PipelineConfig, work: Path, report: dict, stages) -> None:
    for name in stages:
        for required in _STAGE_INPUTS[name]:
            if not (work / required).exists():
                raise DataError(
                    f"stage {name}: missing input {required}; run the earlier stages first"
                )
        try:
            _STAGE_FUNCS[name](cfg, work, report)
        except ToolkitError as e:
            raise type(e)(f"stage {name}: {e}") from e
        _write_report(work, report)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """All stages into cfg.output_dir; partial outputs are discarded on error."""
    _check_inputs(cfg)
    out = Path(cfg.output_dir)
    tmp = _prepare_output(out)
    report = _new_report(cfg)
    try:
        _run_stages(cfg, tmp, report, STAGE_ORDER)
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _publish(tmp, out)
    return report


def run_single_stage(cfg: PipelineConfig, stage: str, input_dir, output_dir) -> dict:
    """One stage as a standalone step: copies the input snapshot, applies the
    stage, and publishes atomically. Chaining the stages reproduces
    run_pipeline byte for byte under the same config and seed."""
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}; choose from {list(STAGE_ORDER)}")
    _check_inputs(cfg)
    out = Path(output_dir)
    tmp = _prepare_output(out)
    try:
        if input_dir is not None:
            src = Path(input_dir)
            if not src.is_dir():
                raise DataError(f"input snapshot directory not found: {src}")
            for item in sorted(src.iterdir()):
                if item.is_dir():
                    shutil.copytree(item, tmp / item.name)
                else:
                    shutil.copy(item, tmp / item.name)
        report_path = tmp / "report.json"
        report = json.loads(report_path.read_text()) if report_path.exists() else _new_report(cfg)
        _run_stages(cfg, tmp, report, [stage])
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _publish(tmp, out)
    return report
