"""Synthetic corpus generator: determinism, balance, box validity."""

import numpy as np
import pytest

from fgbg.errors import ConfigError
from fgbg.synth import SHAPE_KINDS, SynthConfig, synth_generate, write_corpus
from fgbg.manifest import read_manifest


def small_config(**kw):
    defaults = dict(categories=4, train_per_category=5, test_per_category=3)
    defaults.update(kw)
    return SynthConfig(**defaults)


class TestConfigValidation:
    def test_needs_two_categories(self):
        with pytest.raises(ConfigError):
            SynthConfig(categories=1)

    def test_shape_must_fit_canvas(self):
        with pytest.raises(ConfigError):
            small_config(image_size=32, max_shape=40)

    def test_min_not_above_max(self):
        with pytest.raises(ConfigError):
            small_config(min_shape=30, max_shape=20)

    def test_labels_are_stable(self):
        assert small_config().labels == ["cat00", "cat01", "cat02", "cat03"]


class TestGeneration:
    def test_deterministic_given_seed(self):
        c = small_config()
        t1, e1 = synth_generate(c, 99)
        t2, e2 = synth_generate(c, 99)
        for a, b in zip(t1 + e1, t2 + e2):
            assert a.source_id == b.source_id
            assert a.label == b.label
            assert a.boxes == b.boxes
            assert (a.image == b.image).all()

    def test_different_seed_differs(self):
        c = small_config()
        t1, _ = synth_generate(c, 1)
        t2, _ = synth_generate(c, 2)
        assert any((a.image != b.image).any() for a, b in zip(t1, t2))

    def test_counts_and_balance(self):
        c = SynthConfig(categories=10, train_per_category=20, test_per_category=5)
        train, test = synth_generate(c, 0)
        assert len(train) == 200 and len(test) == 50
        for label in c.labels:
            assert sum(1 for s in train if s.label == label) == 20

    def test_every_box_within_bounds_and_tight(self):
        c = small_config(train_per_category=10)
        train, test = synth_generate(c, 5)
        for s in train + test:
            assert len(s.boxes) == 1
            b = s.boxes[0]
            assert b.within(s.image.shape[1], s.image.shape[0])
            # the box is tight: all four 1px-inset borders contain shape pixels
            assert c.min_shape - 1 <= b.width <= c.max_shape
            assert c.min_shape - 1 <= b.height <= c.max_shape

    def test_shape_kind_registry_complete(self):
        for kind in SHAPE_KINDS:
            cfg = SynthConfig(
                categories=2, train_per_category=2, test_per_category=1,
                shape_kinds=(kind, kind),
            )
            train, _ = synth_generate(cfg, 3)
            assert len(train) == 4

    def test_neutral_regime_flag(self):
        c = small_config(background_informative=False, train_per_category=30)
        train, _ = synth_generate(c, 11)
        assert len(train) == 120  # smoke: families no longer tied to labels


class TestWriteCorpus:
    def test_manifests_and_rerun_identical(self, tmp_path):
        c = small_config()
        m1 = write_corpus(c, 7, tmp_path / "a")
        m2 = write_corpus(c, 7, tmp_path / "b")
        recs1 = read_manifest(m1["train"])
        recs2 = read_manifest(m2["train"])
        assert [r.to_json() for r in recs1] == [r.to_json() for r in recs2]
        img = recs1[0].image_path
        assert (m1["train"].parent / img).read_bytes() == (
            m2["train"].parent / img
        ).read_bytes()

    def test_split_sizes(self, tmp_path):
        c = small_config()
        m = write_corpus(c, 7, tmp_path)
        assert len(read_manifest(m["train"])) == 20
        assert len(read_manifest(m["test"])) == 12
