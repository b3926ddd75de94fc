import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from handbooster.errors import DegenerateGeometryError, InvalidInputError
from handbooster.metrics import (
    AUC_MAX_THRESHOLD_MM,
    AUC_STEPS,
    F_SCORE_THRESHOLDS_MM,
    EvalRecord,
    edge_case_filter,
    f_score,
    format_report_table,
    pck_auc,
    position_error,
    procrustes_align,
    root_relative,
    similarity_transform,
    summarize,
)


class TestRootRelative:
    def test_already_centered(self):
        pts = np.array([[0.0, 0, 0], [1, 2, 3], [-1, -2, -3]])
        assert np.array_equal(root_relative(pts), pts)

    def test_offset_invariance(self):
        pts = np.random.default_rng(0).normal(size=(5, 3))
        shifted = pts + (10.0, -4.0, 2.0)
        assert np.allclose(root_relative(shifted), root_relative(pts))

    def test_root_maps_to_origin(self):
        pts = np.random.default_rng(1).normal(size=(6, 3))
        out = root_relative(pts, root_index=2)
        assert np.array_equal(out[2], np.zeros(3))


class TestPositionError:
    def test_zero_for_equal(self):
        pts = np.random.default_rng(2).normal(size=(8, 3))
        assert position_error(pts, pts) == 0.0

    def test_single_point(self):
        assert position_error([[0.0, 0, 0]], [[5.0, 12, 0]]) == pytest.approx(13.0)

    def test_uniform_offset_closed_form(self):
        rng = np.random.default_rng(3)
        gt = rng.normal(size=(21, 3))
        pred = gt + (0.0, 0.0, 5.0)
        assert position_error(pred, gt) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            position_error(np.zeros((3, 3)), np.zeros((4, 3)))


class TestProcrustes:
    def test_recovers_similarity_transform(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            gt = rng.normal(scale=50, size=(21, 3))
            r = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
            s = rng.uniform(0.5, 2.0)
            t = rng.uniform(-100, 100, 3)
            pred = s * gt @ r.T + t
            aligned = procrustes_align(pred, gt)
            assert position_error(aligned, gt) < 1e-6

    def test_identity_for_equal(self):
        pts = np.random.default_rng(5).normal(size=(10, 3))
        scale, rot, trans = similarity_transform(pts, pts)
        assert scale == pytest.approx(1.0)
        assert np.abs(rot - np.eye(3)).max() < 1e-9
        assert np.abs(trans).max() < 1e-9

    def test_reflection_guard(self):
        rng = np.random.default_rng(6)
        gt = rng.normal(size=(12, 3))
        pred = gt * (-1.0, 1.0, 1.0)  # mirrored
        scale, rot, trans = similarity_transform(pred, gt)
        assert np.linalg.det(rot) == pytest.approx(1.0)

    def test_pa_error_bounded_by_root_relative(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            gt = rng.normal(scale=40, size=(21, 3))
            r = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
            pred = 1.3 * gt @ r.T + rng.normal(scale=1.0, size=(21, 3)) + (30, 0, 0)
            pa = position_error(procrustes_align(pred, gt), gt)
            rr = position_error(root_relative(pred), root_relative(gt))
            assert pa <= rr + 1e-9

    def test_invariant_to_prealigned_similarity(self):
        rng = np.random.default_rng(8)
        gt = rng.normal(scale=30, size=(15, 3))
        pred = gt + rng.normal(scale=2.0, size=(15, 3))
        base = position_error(procrustes_align(pred, gt), gt)
        r = Rotation.random(random_state=np.random.RandomState(3)).as_matrix()
        moved = 0.7 * pred @ r.T + (5.0, -8.0, 11.0)
        again = position_error(procrustes_align(moved, gt), gt)
        assert again == pytest.approx(base, abs=1e-6)

    def test_degenerate_rejected(self):
        line = np.stack([np.linspace(0, 1, 8)] * 3, axis=1)  # collinear
        target = np.random.default_rng(9).normal(size=(8, 3))
        with pytest.raises(DegenerateGeometryError):
            similarity_transform(line, target)
        with pytest.raises(DegenerateGeometryError):
            similarity_transform(np.zeros((8, 3)), target)
        with pytest.raises(DegenerateGeometryError):
            similarity_transform(target[:2], target[:2])


class TestPckAuc:
    def test_all_zero_errors(self):
        assert pck_auc(np.zeros(100)) == pytest.approx(1.0)

    def test_all_beyond_max(self):
        assert pck_auc(np.full(50, 60.0)) == pytest.approx(0.0)

    def test_uniform_errors_half(self):
        errors = np.random.default_rng(10).uniform(0, 50.0, 10_000)
        assert pck_auc(errors, t_max=50.0) == pytest.approx(0.5, abs=0.01)

    def test_monotone_in_tmax_for_scaled_errors(self):
        errors = np.random.default_rng(11).uniform(0, 30.0, 500)
        aucs = [pck_auc(errors, t_max=t) for t in (30.0, 40.0, 50.0)]
        assert aucs[0] <= aucs[1] <= aucs[2]

    def test_defaults(self):
        assert AUC_MAX_THRESHOLD_MM == 50.0
        assert AUC_STEPS == 100

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            pck_auc([])


class TestFScore:
    def test_equal_clouds(self):
        pts = np.random.default_rng(12).normal(size=(40, 3))
        for t in F_SCORE_THRESHOLDS_MM:
            assert f_score(pts, pts, t) == pytest.approx(1.0)

    def test_everything_beyond_threshold(self):
        gt = np.zeros((10, 3))
        pred = np.full((10, 3), 100.0)
        assert f_score(pred, gt, 5.0) == 0.0

    def test_half_matched_two_thirds(self):
        gt = np.array([[0.0, 0, 0]])
        pred = np.array([[0.0, 0, 0], [100.0, 0, 0]])
        # precision 1/2, recall 1 -> F = 2/3
        assert f_score(pred, gt, 5.0) == pytest.approx(2.0 / 3.0)

    def test_symmetric(self):
        rng = np.random.default_rng(13)
        a = rng.normal(size=(30, 3))
        b = rng.normal(size=(25, 3))
        assert f_score(a, b, 1.0) == pytest.approx(f_score(b, a, 1.0))

    def test_index_matching_mode(self):
        gt = np.array([[0.0, 0, 0], [10.0, 0, 0]])
        pred = np.array([[10.0, 0, 0], [0.0, 0, 0]])  # swapped
        assert f_score(pred, gt, 1.0, matching="nearest") == pytest.approx(1.0)
        assert f_score(pred, gt, 1.0, matching="index") == 0.0

    def test_thresholds_constant(self):
        assert F_SCORE_THRESHOLDS_MM == (5.0, 15.0)


def make_record(sample_id, j_err=0.0, v_err=0.0, rng=None):
    rng = rng or np.random.default_rng(14)
    gt_j = rng.normal(scale=40, size=(16, 3))
    gt_v = rng.normal(scale=40, size=(50, 3))
    pred_j = gt_j.copy()
    pred_v = gt_v.copy()
    if j_err:
        pred_j[1:] += np.array([0.0, 0.0, j_err]) * len(gt_j) / (len(gt_j) - 1)
    if v_err:
        pred_v += np.array([0.0, 0.0, v_err])
    return EvalRecord.from_arrays(sample_id, pred_j, gt_j, pred_v, gt_v)


class TestEdgeCaseFilter:
    def test_all_zero_kept(self):
        records = [make_record(f"r{i}") for i in range(4)]
        kept, dropped = edge_case_filter(records, 20.0, 20.0)
        assert len(kept) == 4 and not dropped

    def test_tiny_thresholds_drop_any_error(self):
        records = [make_record("good"), make_record("bad", j_err=1.0)]
        kept, dropped = edge_case_filter(records, 1e-9, 1e-9)
        assert [r.sample_id for r in dropped] == ["bad"]

    def test_mixed_batch_5_and_25(self):
        records = [make_record("a", j_err=5.0), make_record("b", j_err=25.0)]
        kept, dropped = edge_case_filter(records, 20.0, 20.0)
        assert [r.sample_id for r in kept] == ["a"]
        assert [r.sample_id for r in dropped] == ["b"]

    def test_vertex_error_alone_drops(self):
        records = [make_record("v", v_err=30.0)]
        kept, dropped = edge_case_filter(records, 20.0, 20.0)
        assert dropped and not kept

    def test_idempotent_on_kept(self):
        rng = np.random.default_rng(15)
        records = [
            make_record(f"r{i}", j_err=float(rng.uniform(0, 40)), rng=rng) for i in range(10)
        ]
        kept, _ = edge_case_filter(records, 20.0, 20.0)
        kept2, dropped2 = edge_case_filter(kept, 20.0, 20.0)
        assert kept2 == kept and not dropped2

    def test_threshold_validation(self):
        with pytest.raises(InvalidInputError):
            edge_case_filter([], 0.0, 1.0)


class TestSummaries:
    def test_identical_pred_gt(self):
        records = [make_record(f"r{i}") for i in range(3)]
        s = summarize(records)
        for setting in ("root_relative", "procrustes"):
            m = s[setting]
            assert m["j_pe"] == pytest.approx(0.0, abs=1e-9)
            assert m["v_pe"] == pytest.approx(0.0, abs=1e-9)
            assert m["j_auc"] == pytest.approx(1.0)
            assert m["v_auc"] == pytest.approx(1.0)
            assert m["f@5"] == pytest.approx(1.0)
            assert m["f@15"] == pytest.approx(1.0)

    def test_table_format(self):
        records = [make_record("x", j_err=3.0, v_err=2.0)]
        table = format_report_table(summarize(records))
        assert "root-relative" in table and "procrustes" in table
        assert "J-PE" in table and "F@15" in table

    def test_eval_record_derived_errors(self):
        r = make_record("e", v_err=7.0)
        assert r.v_pe == pytest.approx(7.0)
        assert r.j_pe == pytest.approx(0.0, abs=1e-9)
        # PA removes the uniform offset entirely
        assert r.v_pe_pa < 1e-6

    def test_per_point_auc_mode(self):
        records = [make_record(f"r{i}", j_err=5.0) for i in range(4)]
        pooled = summarize(records, auc_mode="pooled")
        per_point = summarize(records, auc_mode="per_point")
        # all joints but the root share one error level: averaging per-point
        # AUCs must land close to the pooled curve here
        assert per_point["root_relative"]["j_auc"] == pytest.approx(
            pooled["root_relative"]["j_auc"], abs=0.02
        )
        with pytest.raises(InvalidInputError):
            summarize(records, auc_mode="sideways")
