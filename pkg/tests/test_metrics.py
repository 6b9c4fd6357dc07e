import pytest

from autobox.annotations import Annotation, LabeledBox
from autobox.errors import NoGroundTruth, ZeroGroundTruth
from autobox.geometry import Box
from autobox.metrics import (
    Detection,
    average_precision,
    compute_report,
    load_detections_jsonl,
    match_detections,
    pr_curves,
    render_text_table,
    save_detections_jsonl,
    write_report_json,
)

from oracles import ap_bruteforce, report_bruteforce


def gt(image, *objs):
    width = height = 400
    return Annotation(image, width, height, [LabeledBox(lb, b) for lb, b in objs])


def det(image, label, box, score):
    return Detection(image, label, box, score)


B1 = Box(10, 10, 50, 40)
B2 = Box(200, 100, 60, 60)


def test_exact_match_is_tp():
    outcome = match_detections([det("i", "a", B1, 0.9)], [gt("i", ("a", B1))], 0.5)
    assert outcome.tp_flags == [True]
    assert outcome.gt_matched[("i", "a")] == [True]


def test_wrong_label_is_fp_and_gt_unmatched():
    outcome = match_detections([det("i", "b", B1, 0.9)], [gt("i", ("a", B1))], 0.5)
    assert outcome.tp_flags == [False]
    assert outcome.gt_matched[("i", "a")] == [False]


def test_duplicate_detections_only_best_scores_tp():
    preds = [det("i", "a", B1, 0.8), det("i", "a", B1, 0.9)]
    outcome = match_detections(preds, [gt("i", ("a", B1))], 0.5)
    assert outcome.tp_flags == [False, True]  # 0.9 wins despite input order
    assert outcome.class_order["a"] == [1, 0]


def test_matching_prefers_highest_iou_gt():
    wide = Box(0, 0, 100, 40)
    preds = [det("i", "a", Box(0, 0, 90, 40), 0.9)]
    truth = gt("i", ("a", wide), ("a", Box(0, 0, 40, 40)))
    outcome = match_detections(preds, [truth], 0.5)
    assert outcome.tp_flags == [True]
    assert outcome.gt_matched[("i", "a")] == [True, False]


def test_matching_is_per_image():
    preds = [det("other", "a", B1, 0.9)]
    outcome = match_detections(preds, [gt("i", ("a", B1))], 0.5)
    assert outcome.tp_flags == [False]


def test_ap_perfect_and_empty():
    assert average_precision([True, True], 2) == 1.0
    assert average_precision([], 3) == 0.0


def test_ap_hand_derived_case():
    ap = average_precision([True, False, True], 2)
    assert ap == pytest.approx(5 / 6, abs=1e-12)
    assert ap == pytest.approx(ap_bruteforce([True, False, True], 2), abs=1e-12)


def test_ap_zero_ground_truth():
    with pytest.raises(ZeroGroundTruth):
        average_precision([True], 0)


def test_ap_matches_bruteforce_on_random_flags(rng):
    for _ in range(200):
        total_gt = int(rng.integers(1, 8))
        n = int(rng.integers(0, 10))
        flags = list(rng.integers(0, 2, size=n).astype(bool))
        # keep flags consistent: no more TPs than ground truths
        while sum(flags) > total_gt:
            flags[flags.index(True)] = False
        assert average_precision(flags, total_gt) == pytest.approx(
            ap_bruteforce(flags, total_gt), abs=1e-12
        )


def test_report_perfect_predictions():
    truths = [gt("i", ("a", B1), ("b", B2))]
    preds = [det("i", "a", B1, 1.0), det("i", "b", B2, 1.0)]
    report = compute_report(preds, truths)
    assert report.map_score == 1.0
    assert report.ap_max == 1.0 and report.ap_min == 1.0
    assert report.recall_score == 1.0
    assert report.per_class_ap == {"a": 1.0, "b": 1.0}


def test_report_empty_predictions():
    report = compute_report([], [gt("i", ("a", B1))])
    assert report.map_score == 0.0
    assert report.recall_score == 0.0


def test_report_two_class_hand_case():
    truths = [gt("i", ("a", B1), ("b", B2))]
    preds = [
        det("i", "a", B1, 0.95),
        det("i", "b", Box(0, 200, 30, 30), 0.9),  # FP, no overlap
        det("i", "b", B2, 0.8),
    ]
    report = compute_report(preds, truths)
    assert report.per_class_ap == pytest.approx({"a": 1.0, "b": 0.5})
    assert report.map_score == pytest.approx(0.75)
    assert report.ap_max == pytest.approx(1.0)
    assert report.ap_min == pytest.approx(0.5)
    assert report.recall_score == pytest.approx(1.0)


def test_report_no_ground_truth():
    with pytest.raises(NoGroundTruth):
        compute_report([], [])
    with pytest.raises(NoGroundTruth):
        compute_report([], [Annotation("i", 10, 10, [])])


def test_score_suppress_filters_low_scores():
    truths = [gt("i", ("a", B1))]
    preds = [det("i", "a", B1, 0.6)]
    full = compute_report(preds, truths)
    assert full.recall_score == 1.0
    cut = compute_report(preds, truths, score_suppress=0.7)
    assert cut.recall_score == 0.0


def random_instance(rng, n_classes=3, n_boxes=10):
    labels = [f"c{k}" for k in range(int(rng.integers(1, n_classes + 1)))]
    images = ["img0", "img1"]
    truths, gt_tuples = [], []
    for image in images:
        objs = []
        for _ in range(int(rng.integers(1, 4))):
            label = labels[int(rng.integers(len(labels)))]
            box = Box(int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                      int(rng.integers(8, 40)), int(rng.integers(8, 40)))
            objs.append((label, box))
            gt_tuples.append((image, label, box))
        truths.append(gt("%s" % image, *objs))
    preds, det_tuples = [], []
    for _ in range(int(rng.integers(0, n_boxes + 1))):
        image = images[int(rng.integers(2))]
        label = labels[int(rng.integers(len(labels)))]
        box = Box(int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                  int(rng.integers(8, 40)), int(rng.integers(8, 40)))
        score = round(float(rng.uniform()), 3)
        preds.append(det(image, label, box, score))
        det_tuples.append((image, label, box, score))
    return preds, truths, det_tuples, gt_tuples


def test_report_matches_bruteforce_oracle(rng):
    for _ in range(10):
        preds, truths, det_tuples, gt_tuples = random_instance(rng)
        report = compute_report(preds, truths)
        expected = report_bruteforce(det_tuples, gt_tuples, 0.5)
        assert report.map_score == pytest.approx(expected["mAP"], abs=1e-9)
        assert report.recall_score == pytest.approx(expected["recall"], abs=1e-9)
        for label, ap in expected["per_class_ap"].items():
            assert report.per_class_ap[label] == pytest.approx(ap, abs=1e-9)


def test_adding_trailing_fp_never_increases_ap(rng):
    for _ in range(50):
        total_gt = int(rng.integers(1, 6))
        flags = list(rng.integers(0, 2, size=int(rng.integers(0, 8))).astype(bool))
        while sum(flags) > total_gt:
            flags[flags.index(True)] = False
        assert average_precision(flags + [False], total_gt) <= average_precision(flags, total_gt) + 1e-12


def test_matching_tp_never_decreases_recall(rng):
    for _ in range(20):
        preds, truths, _, _ = random_instance(rng)
        report = compute_report(preds, truths)
        # find an unmatched gt and add a perfect detection for it
        outcome = match_detections(preds, truths, 0.5)
        target = None
        for ann in truths:
            for obj in ann.objects:
                key = (ann.image_filename, obj.label)
                idx = [o.box for o in ann.objects if o.label == obj.label].index(obj.box)
                if not outcome.gt_matched[key][idx]:
                    target = det(ann.image_filename, obj.label, obj.box, 1.0)
                    break
            if target:
                break
        if target is None:
            continue
        grown = compute_report(preds + [target], truths)
        assert grown.recall_score >= report.recall_score


def test_equal_score_permutation_gives_identical_report():
    truths = [gt("i", ("a", B1), ("a", B2))]
    d1 = det("i", "a", B1, 0.7)
    d2 = det("i", "a", B2, 0.7)
    r1 = compute_report([d1, d2], truths)
    r2 = compute_report([d2, d1], truths)
    assert r1 == r2


def test_report_invariants(rng):
    for _ in range(10):
        preds, truths, _, _ = random_instance(rng)
        report = compute_report(preds, truths)
        assert 0.0 <= report.ap_min <= report.map_score <= report.ap_max <= 1.0
        assert 0.0 <= report.recall_score <= 1.0


def test_text_table_rows():
    report = compute_report([det("i", "a", B1, 1.0)], [gt("i", ("a", B1))])
    table = render_text_table(report)
    for row in ("mAP", "AP_max", "AP_min", "recall"):
        assert row in table
    assert "1.0000" in table


def test_detection_jsonl_round_trip(tmp_path):
    dets = [det("i.png", "a", B1, 0.912), det("j.png", "b", B2, 0.5)]
    path = tmp_path / "preds.jsonl"
    save_detections_jsonl(dets, path)
    assert load_detections_jsonl(path) == dets


def test_report_json_contents(tmp_path):
    report = compute_report([det("i", "a", B1, 1.0)], [gt("i", ("a", B1))])
    path = tmp_path / "report.json"
    write_report_json(report, path)
    import json

    data = json.loads(path.read_text())
    assert data["mAP"] == 1.0 and data["recall"] == 1.0
    assert data["per_class_ap"] == {"a": 1.0}


def test_pr_curves_monotone_recall():
    truths = [gt("i", ("a", B1), ("a", B2))]
    preds = [det("i", "a", B1, 0.9), det("i", "a", Box(0, 300, 20, 20), 0.8),
             det("i", "a", B2, 0.7)]
    curves = pr_curves(preds, truths)
    recalls, precisions = curves["a"]
    assert recalls == sorted(recalls)
    assert recalls[-1] == 1.0
    assert len(recalls) == len(precisions) == 4


def test_detection_score_validation():
    with pytest.raises(ValueError):
        Detection("i", "a", B1, 1.5)
