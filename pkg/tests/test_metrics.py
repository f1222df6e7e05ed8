import numpy as np
import pytest

from agarsynth.clusters import BBox
from agarsynth.metrics import (
    Detection,
    GroundTruth,
    IOU_THRESHOLDS,
    average_precision,
    count_from_detections,
    counting_metrics,
    counting_report,
    iou,
    map_coco,
)


def ap_exhaustive_oracle(dets, gts, iou_thresh):
    """Independent AP oracle: rebuild the PR curve by re-matching the
    detection subset at every score cutoff, then 101-point interpolate."""
    if not gts:
        return None
    if not dets:
        return 0.0

    def greedy(subset):
        matched = [False] * len(gts)
        tp = 0
        for det in sorted(subset, key=lambda d: -d.score):
            best, best_ov = -1, 0.0
            for gi, gt in enumerate(gts):
                if matched[gi] or gt.image_id != det.image_id:
                    continue
                ov = iou(det.bbox, gt.bbox)
                if ov >= iou_thresh and ov > best_ov:
                    best, best_ov = gi, ov
            if best >= 0:
                matched[best] = True
                tp += 1
        return tp

    points = []
    for cutoff in sorted({d.score for d in dets}, reverse=True):
        subset = [d for d in dets if d.score >= cutoff]
        tp = greedy(subset)
        points.append((tp / len(gts), tp / len(subset)))
    ap = 0.0
    for r in [k / 100 for k in range(101)]:
        precisions = [p for (rec, p) in points if rec >= r]
        ap += max(precisions) if precisions else 0.0
    return ap / 101


def det(x, score, image_id=1, cls=1, w=10):
    return Detection(image_id, cls, BBox(x, 0, w, 10), score)


def gt(x, image_id=1, cls=1, w=10):
    return GroundTruth(image_id, cls, BBox(x, 0, w, 10))


class TestIoU:
    def test_identical(self):
        b = BBox(2, 3, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(50, 0, 10, 10)) == 0.0

    def test_direct_arithmetic(self):
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_symmetric_bounded(self, rng):
        for _ in range(100):
            a = BBox(int(rng.integers(0, 50)), int(rng.integers(0, 50)), 10, 8)
            b = BBox(int(rng.integers(0, 50)), int(rng.integers(0, 50)), 7, 12)
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0


class TestAveragePrecision:
    def test_perfect_predictions(self):
        gts = [gt(0), gt(30), gt(60)]
        dets = [det(0, 1.0), det(30, 1.0), det(60, 1.0)]
        assert average_precision(dets, gts, 0.5) == 1.0

    def test_no_predictions(self):
        assert average_precision([], [gt(0)], 0.5) == 0.0

    def test_no_ground_truth_undefined(self):
        assert average_precision([det(0, 0.9)], [], 0.5) is None

    def test_five_detection_fixture_matches_oracle(self):
        gts = [gt(0), gt(30), gt(60), gt(90, image_id=2)]
        dets = [
            det(2, 0.95),        # TP (IoU 0.667 at thresh 0.5)
            det(300, 0.9),       # FP
            det(31, 0.85),       # TP
            det(61, 0.85),       # TP (tied score)
            det(200, 0.3),       # FP
        ]
        for thresh in (0.5, 0.6, 0.75):
            got = average_precision(dets, gts, thresh)
            want = ap_exhaustive_oracle(dets, gts, thresh)
            assert got == pytest.approx(want, abs=1e-9)

    def test_random_fixtures_match_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            gts = [gt(int(x), image_id=int(i)) for x, i in
                   zip(rng.integers(0, 200, 6), rng.integers(1, 3, 6))]
            dets = [det(int(x), float(s), image_id=int(i)) for x, s, i in
                    zip(rng.integers(0, 200, 10), rng.random(10).round(2), rng.integers(1, 3, 10))]
            for thresh in (0.5, 0.7):
                got = average_precision(dets, gts, thresh)
                want = ap_exhaustive_oracle(dets, gts, thresh)
                assert got == pytest.approx(want, abs=1e-9)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(8)
        gts = [gt(int(x)) for x in rng.integers(0, 300, 8)]
        dets = [det(int(x) + int(d), float(s)) for x, d, s in
                zip(rng.integers(0, 300, 12), rng.integers(-4, 5, 12), rng.random(12))]
        aps = [average_precision(dets, gts, t) for t in IOU_THRESHOLDS]
        assert all(b <= a + 1e-12 for a, b in zip(aps, aps[1:]))


class TestMapCoco:
    def test_perfect(self):
        gts = [gt(0, cls=1), gt(40, cls=2)]
        dets = [det(0, 1.0, cls=1), det(40, 1.0, cls=2)]
        mean_ap, table = map_coco(dets, gts)
        assert mean_ap == 1.0
        assert set(table) == {1, 2}

    def test_shifted_boxes_give_half(self):
        # width 17 shifted by 3: IoU = 14/20 = 0.70 exactly, so thresholds
        # 0.50..0.70 score AP 1 and 0.75..0.95 score 0
        gts = [gt(j * 40, w=17) for j in range(5)]
        dets = [det(j * 40 + 3, 1.0, w=17) for j in range(5)]
        assert iou(gts[0].bbox, dets[0].bbox) == 0.7
        mean_ap, table = map_coco(dets, gts)
        assert mean_ap == pytest.approx(0.5, abs=1e-12)
        assert table[1][0.70] == 1.0
        assert table[1][0.75] == 0.0

    def test_class_without_gt_excluded(self):
        gts = [gt(0, cls=1)]
        dets = [det(0, 1.0, cls=1), det(100, 0.9, cls=2)]
        mean_ap, table = map_coco(dets, gts)
        assert set(table) == {1}
        assert mean_ap == 1.0

    def test_no_ground_truth_error(self):
        with pytest.raises(ValueError):
            map_coco([det(0, 1.0)], [])


class TestCountingMetrics:
    def test_all_exact(self):
        mae, smape = counting_metrics([(3, 3), (0, 0), (7, 7)])
        assert mae == 0.0 and smape == 0.0

    def test_single_image_formula(self):
        mae, smape = counting_metrics([(10, 8)])
        assert mae == 2.0
        assert smape == pytest.approx(100 * 2 / 9)

    def test_batch_with_zero_convention(self):
        mae, smape = counting_metrics([(10, 8), (0, 0), (5, 5)])
        assert mae == pytest.approx(2 / 3)
        assert smape == pytest.approx(100 * (2 / 9) / 3)

    def test_permutation_invariant_and_bounded(self, rng):
        pairs = [(int(t), int(p)) for t, p in rng.integers(0, 30, (50, 2))]
        mae1, smape1 = counting_metrics(pairs)
        rng.shuffle(pairs)
        mae2, smape2 = counting_metrics(pairs)
        assert mae1 == pytest.approx(mae2)
        assert smape1 == pytest.approx(smape2)
        assert 0.0 <= smape1 <= 200.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            counting_metrics([])


class TestCountFromDetections:
    def test_threshold_zero_counts_all(self):
        dets = [det(0, 0.3), det(20, 0.6), det(40, 0.9)]
        assert count_from_detections(dets, 0.0) == 3

    def test_threshold_one(self):
        dets = [det(0, 1.0), det(20, 0.999)]
        assert count_from_detections(dets, 1.0) == 1

    def test_mid_threshold(self):
        dets = [det(0, 0.3), det(20, 0.6), det(40, 0.9)]
        assert count_from_detections(dets, 0.5) == 2

    def test_per_class(self):
        dets = [det(0, 0.9, cls=1), det(20, 0.9, cls=2)]
        assert count_from_detections(dets, 0.5, category_id=2) == 1


class TestCountingReport:
    def test_perfect_rows_on_diagonal(self):
        csv = counting_report([(1, 4, 4), (2, 9, 9)])
        lines = csv.strip().splitlines()
        assert lines[0] == "image_id,true_count,predicted_count"
        assert lines[1] == "1,4,4"
        assert "MAE=0.000000" in lines[-1]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            counting_report([])

    def test_byte_stable(self):
        pairs = [(1, 10, 8), (2, 0, 0), (3, 5, 6)]
        assert counting_report(pairs) == counting_report(pairs)
