import json

import numpy as np
import pytest

from autobox.errors import EmptyPatchDb, ParseError
from autobox.patchdb import Patch, PatchDb

from conftest import random_image


def make_patch(rng, label="widget", w=9, h=7):
    mask = rng.integers(0, 2, size=(h, w)).astype(bool)
    mask[0, 0] = True
    return Patch(random_image(rng, w, h), mask, label, "source.png")


def test_add_get_round_trip_exact(tmp_path, rng):
    db = PatchDb(tmp_path)
    patch = make_patch(rng)
    db.add(patch, "p0")
    loaded = db.get("p0")
    assert np.array_equal(loaded.pixels, patch.pixels)
    assert np.array_equal(loaded.mask, patch.mask)
    assert loaded.label == "widget"
    assert loaded.source_image == "source.png"


def test_add_is_idempotent(tmp_path, rng):
    db = PatchDb(tmp_path)
    patch = make_patch(rng)
    db.add(patch, "p0")
    db.add(patch, "p0")
    assert len(db) == 1
    assert len(db.index_path.read_text().splitlines()) == 1


def test_index_records_expected_fields(tmp_path, rng):
    db = PatchDb(tmp_path)
    db.add(make_patch(rng, w=11, h=5), "p0")
    record = json.loads(db.index_path.read_text())
    assert record == {
        "patch_id": "p0",
        "category": "widget",
        "source_image": "source.png",
        "width": 11,
        "height": 5,
    }
    assert (tmp_path / "patches" / "widget" / "p0.png").exists()


def test_reload_from_disk(tmp_path, rng):
    db = PatchDb(tmp_path)
    original = make_patch(rng)
    db.add(original, "p0")
    db.add(make_patch(rng, label="gadget"), "p1")

    reopened = PatchDb(tmp_path)
    assert len(reopened) == 2
    assert "p0" in reopened and "p1" in reopened
    assert reopened.categories() == ["gadget", "widget"]
    loaded = reopened.get("p0")
    assert np.array_equal(loaded.pixels, original.pixels)
    assert np.array_equal(loaded.mask, original.mask)


def test_sample_follows_index_order(tmp_path, rng):
    db = PatchDb(tmp_path)
    for i in range(5):
        db.add(make_patch(rng, label=f"cat{i}"), f"p{i}")
    drawn_a = PatchDb(tmp_path).sample(np.random.default_rng(7)).label
    drawn_b = PatchDb(tmp_path).sample(np.random.default_rng(7)).label
    assert drawn_a == drawn_b


def test_sample_empty_db_raises(tmp_path, rng):
    with pytest.raises(EmptyPatchDb):
        PatchDb(tmp_path).sample(np.random.default_rng(0))


def test_rejects_empty_mask(tmp_path, rng):
    patch = Patch(random_image(rng, 4, 4), np.zeros((4, 4), dtype=bool), "w", "s")
    with pytest.raises(ValueError):
        PatchDb(tmp_path).add(patch, "p0")


def test_mismatched_mask_shape_rejected(rng):
    with pytest.raises(ValueError):
        Patch(random_image(rng, 4, 4), np.ones((5, 4), dtype=bool), "w", "s")


def test_corrupt_index_raises(tmp_path):
    (tmp_path / "index.jsonl").write_text("not json\n")
    with pytest.raises(ParseError):
        PatchDb(tmp_path)


def test_get_unknown_id(tmp_path):
    with pytest.raises(KeyError):
        PatchDb(tmp_path).get("nope")
