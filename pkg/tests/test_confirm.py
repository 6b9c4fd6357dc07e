import threading
import time

import numpy as np
import pytest

from autobox.confirm import (
    REASON_INVALID_LABEL,
    REASON_LOW_SCORE,
    SCORER_RESPONSE,
    ClassScore,
    ConfirmPolicy,
    HistogramModel,
    confirm_boxes,
    poll_scoring_response,
    read_scoring_response,
    train_baseline,
    write_scoring_request,
)
from autobox.errors import EmptyCategory, ScorerProtocolError
from autobox.features import crop_feature
from autobox.geometry import Box
from autobox.raster import new_image
from autobox.synth import SPRITE_FAMILIES, make_sprite

from conftest import random_image


def solid_crop(color, width=16, height=16):
    return new_image(width, height, color)


def sprite_crop(label, rng=None):
    sprite = make_sprite(label, rng=rng)
    h, w = sprite.pixels.shape[:2]
    canvas = new_image(w, h, (204, 204, 204))
    canvas[sprite.mask] = sprite.pixels[sprite.mask]
    return canvas


class StubModel:
    """Fixed per-box answers, for exercising the gate in isolation."""

    def __init__(self, answers):
        self.answers = list(answers)
        self.calls = 0

    def classify(self, image):
        answer = self.answers[self.calls]
        self.calls += 1
        return ClassScore(*answer)


def test_train_identical_crops_centroid_equals_feature(rng):
    crop_img = random_image(rng, 12, 12)
    other = solid_crop((255, 0, 0))
    model = train_baseline([("a", crop_img), ("a", crop_img), ("a", crop_img), ("b", other)])
    assert np.allclose(model.centroids[model.labels.index("a")], crop_feature(crop_img))


def test_train_solid_colors_put_mass_in_their_hue_bins():
    red = solid_crop((255, 0, 0))
    green = solid_crop((0, 255, 0))
    model = train_baseline([("red", red), ("green", green)])
    red_centroid = model.centroids[model.labels.index("red")]
    green_centroid = model.centroids[model.labels.index("green")]
    # hue 0 -> bin 0; hue 1/3 -> bin floor(25/3) = 8
    assert red_centroid[0] == pytest.approx(1 / 3, abs=1e-9)
    assert green_centroid[8] == pytest.approx(1 / 3, abs=1e-9)


def test_train_requires_two_categories():
    with pytest.raises(ValueError):
        train_baseline([("only", solid_crop((1, 2, 3)))])


def test_train_empty_category_error():
    crops = [("a", solid_crop((255, 0, 0))), ("b", solid_crop((0, 0, 255)))]
    with pytest.raises(EmptyCategory):
        train_baseline(crops, categories=["a", "b", "missing"])


def test_classify_training_crop_wins_argmax(rng):
    crops = [(label, sprite_crop(label)) for label in list(SPRITE_FAMILIES)[:4]]
    model = train_baseline(crops)
    for label, img in crops:
        assert model.classify(img).label == label


def test_classify_equal_distances_split_evenly():
    crop_img = solid_crop((10, 200, 30))
    feature = crop_feature(crop_img)
    model = HistogramModel(labels=["a", "b"], centroids=np.stack([feature, feature]))
    dist = model.distribution(crop_img)
    assert dist["a"] == pytest.approx(0.5, abs=1e-9)
    assert dist["b"] == pytest.approx(0.5, abs=1e-9)


def test_distribution_matches_hand_computed_softmax(monkeypatch):
    model = HistogramModel(labels=["a", "b", "c"], centroids=np.zeros((3, 4)), temperature=1.0)
    monkeypatch.setattr(model, "distances", lambda img: np.array([0.0, 1.0, 2.0]))
    dist = model.distribution(None)
    z = 1.0 + np.exp(-1.0) + np.exp(-2.0)
    assert dist["a"] == pytest.approx(1.0 / z, abs=1e-12)
    assert dist["b"] == pytest.approx(np.exp(-1.0) / z, abs=1e-12)
    assert dist["c"] == pytest.approx(np.exp(-2.0) / z, abs=1e-12)


def test_distribution_sums_to_one(rng):
    crops = [(label, sprite_crop(label)) for label in list(SPRITE_FAMILIES)[:5]]
    model = train_baseline(crops)
    for _ in range(10):
        probs = model.distribution(random_image(rng, 20, 20))
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-6)


def test_distribution_invariant_under_distance_rescale(monkeypatch):
    base = np.array([0.3, 0.9, 0.1, 0.55])
    m1 = HistogramModel(labels=list("abcd"), centroids=np.zeros((4, 4)), temperature=8.0)
    monkeypatch.setattr(m1, "distances", lambda img: base)
    m2 = HistogramModel(labels=list("abcd"), centroids=np.zeros((4, 4)), temperature=2.0)
    monkeypatch.setattr(m2, "distances", lambda img: base * 4.0)
    d1, d2 = m1.distribution(None), m2.distribution(None)
    for label in "abcd":
        assert d1[label] == pytest.approx(d2[label], abs=1e-12)


def test_train_and_classify_deterministic():
    crops = [(label, sprite_crop(label)) for label in list(SPRITE_FAMILIES)[:3]]
    m1, m2 = train_baseline(crops), train_baseline(crops)
    assert np.array_equal(m1.centroids, m2.centroids)
    probe = sprite_crop(list(SPRITE_FAMILIES)[0])
    assert m1.classify(probe) == m2.classify(probe)


def test_baseline_heldout_accuracy_at_least_95_percent():
    train_rng = np.random.default_rng(101)
    test_rng = np.random.default_rng(202)
    labels = list(SPRITE_FAMILIES)[:10]
    train = [(lb, sprite_crop(lb, rng=train_rng)) for lb in labels for _ in range(20)]
    model = train_baseline(train)
    total, correct = 0, 0
    for lb in labels:
        for _ in range(5):
            result = model.classify(sprite_crop(lb, rng=test_rng))
            total += 1
            correct += result.label == lb
    assert correct / total >= 0.95


def gate(img, score, label, valid=("a",), threshold=0.8):
    model = StubModel([(label, score)])
    policy = ConfirmPolicy(score_threshold=threshold, valid_labels=frozenset(valid))
    return confirm_boxes(img, [Box(0, 0, 4, 4)], model, policy)[0]


def test_gate_truth_table(gray_image):
    accepted = gate(gray_image, 0.85, "a")
    assert accepted.accepted and accepted.reason is None
    low = gate(gray_image, 0.5, "a")
    assert not low.accepted and low.reason == REASON_LOW_SCORE
    invalid = gate(gray_image, 0.95, "z")
    assert not invalid.accepted and invalid.reason == REASON_INVALID_LABEL
    both = gate(gray_image, 0.5, "z")
    assert not both.accepted and both.reason == REASON_INVALID_LABEL


def test_gate_rejects_exactly_at_threshold(gray_image):
    boundary = gate(gray_image, 0.80, "a")
    assert not boundary.accepted and boundary.reason == REASON_LOW_SCORE
    above = gate(gray_image, 0.8000001, "a")
    assert above.accepted


def test_gate_monotone_in_threshold(gray_image, rng):
    for _ in range(25):
        n = int(rng.integers(1, 8))
        answers = [("a", float(rng.uniform())) for _ in range(n)]
        boxes = [Box(0, 0, 4, 4)] * n
        t1, t2 = sorted(rng.uniform(size=2))
        low = confirm_boxes(gray_image, boxes, StubModel(answers),
                            ConfirmPolicy(float(t1), frozenset("a")))
        high = confirm_boxes(gray_image, boxes, StubModel(answers),
                             ConfirmPolicy(float(t2), frozenset("a")))
        accepted_low = {i for i, d in enumerate(low) if d.accepted}
        accepted_high = {i for i, d in enumerate(high) if d.accepted}
        assert accepted_high <= accepted_low


def test_policy_validation():
    with pytest.raises(ValueError):
        ConfirmPolicy(score_threshold=1.5, valid_labels=frozenset("a"))
    with pytest.raises(ValueError):
        ConfirmPolicy(score_threshold=0.5, valid_labels=frozenset())


# --- external scorer protocol ---------------------------------------------


def test_scorer_request_and_response_round_trip(tmp_path, rng):
    crops = [("img1_00", random_image(rng, 8, 8)), ("img1_01", random_image(rng, 9, 7))]
    manifest = write_scoring_request(crops, tmp_path)
    lines = manifest.read_text().splitlines()
    assert lines == ["img1_00\tcrops/img1_00.png", "img1_01\tcrops/img1_01.png"]
    assert (tmp_path / "crops" / "img1_00.png").exists()

    response = tmp_path / SCORER_RESPONSE
    response.write_text("img1_00\twidget\t0.91\nimg1_01\tgadget\t0.4\n")
    scores = read_scoring_response(response, ["img1_00", "img1_01"])
    assert scores["img1_00"] == ClassScore("widget", 0.91)
    assert scores["img1_01"] == ClassScore("gadget", 0.4)


def test_scorer_missing_crop_id_named_in_error(tmp_path):
    response = tmp_path / SCORER_RESPONSE
    response.write_text("img1_00\twidget\t0.91\n")
    with pytest.raises(ScorerProtocolError, match="img1_01"):
        read_scoring_response(response, ["img1_00", "img1_01"])


def test_scorer_malformed_line_and_score(tmp_path):
    response = tmp_path / SCORER_RESPONSE
    response.write_text("img1_00 widget 0.91\n")
    with pytest.raises(ScorerProtocolError):
        read_scoring_response(response, ["img1_00"])
    response.write_text("img1_00\twidget\tnot-a-number\n")
    with pytest.raises(ScorerProtocolError, match="img1_00"):
        read_scoring_response(response, ["img1_00"])
    response.write_text("img1_00\twidget\t1.4\n")
    with pytest.raises(ScorerProtocolError, match="img1_00"):
        read_scoring_response(response, ["img1_00"])


def test_poll_times_out(tmp_path):
    with pytest.raises(ScorerProtocolError, match="timed out"):
        poll_scoring_response(tmp_path / SCORER_RESPONSE, ["x"], timeout=0.2, interval=0.05)


def test_poll_picks_up_late_response(tmp_path):
    response = tmp_path / SCORER_RESPONSE

    def responder():
        time.sleep(0.3)
        response.write_text("c0\tthing\t0.99\n")

    thread = threading.Thread(target=responder)
    thread.start()
    try:
        scores = poll_scoring_response(response, ["c0"], timeout=5.0, interval=0.05)
    finally:
        thread.join()
    assert scores["c0"].label == "thing"
