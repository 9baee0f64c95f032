"""Dataset variant construction rules, the 50% filter and label merging."""

import json
from pathlib import Path

import numpy as np
import pytest

from fgbg.datasets import (
    AnnotatedSample,
    LabelMerge,
    build_bg,
    build_fg,
    build_hybrid,
    build_variants,
    filter_bg_train,
    merge_labels,
)
from fgbg.errors import DataError, NoBoxesError
from fgbg.geometry import Box, enclosing_frame, frame_area_ratio
from fgbg.manifest import (
    ManifestRecord,
    load_png,
    read_manifest,
    save_png,
    write_manifest,
)


def sample_with(boxes, size=8, label="a", source_id="s0", fill=None):
    rng = np.random.default_rng(0)
    image = rng.integers(1, 255, size=(size, size, 3), dtype=np.uint8)
    if fill is not None:
        image[:] = fill
    return AnnotatedSample(image=image, boxes=boxes, label=label, source_id=source_id)


def membership_zero_oracle(sample, crop, frame):
    """Oracle: a crop pixel must be zero iff inside the frame, outside all boxes."""
    for y in range(crop.shape[0]):
        for x in range(crop.shape[1]):
            gx, gy = x + frame.x0, y + frame.y0
            inside_any = any(
                b.x0 <= gx < b.x1 and b.y0 <= gy < b.y1 for b in sample.boxes
            )
            if inside_any:
                assert (crop[y, x] == sample.image[gy, gx]).all()
            else:
                assert (crop[y, x] == 0).all()


class TestBuildFg:
    def test_single_box_crop_unmodified(self):
        s = sample_with([Box(2, 2, 6, 6)])
        out = build_fg(s)
        assert out.shape == (4, 4, 3)
        assert (out == s.image[2:6, 2:6]).all()

    def test_multibox_zeroes_between(self):
        s = sample_with([Box(0, 0, 2, 4), Box(4, 0, 6, 4)])
        out = build_fg(s)
        assert out.shape == (4, 6, 3)
        assert (out[:, 2:4] == 0).all()
        membership_zero_oracle(s, out, enclosing_frame(s.boxes))

    def test_full_image_box_identity(self):
        s = sample_with([Box(0, 0, 8, 8)])
        assert (build_fg(s) == s.image).all()

    def test_no_boxes_errors(self):
        with pytest.raises(NoBoxesError):
            build_fg(sample_with([]))

    def test_dimensions_equal_frame(self):
        s = sample_with([Box(1, 2, 3, 5), Box(2, 1, 7, 4)])
        frame = enclosing_frame(s.boxes)
        assert build_fg(s).shape[:2] == (frame.height, frame.width)


class TestBuildBg:
    def test_full_box_all_zero(self):
        s = sample_with([Box(0, 0, 8, 8)])
        assert build_bg(s).sum() == 0

    def test_half_zeroed(self):
        s = sample_with([Box(0, 0, 4, 8)])
        out = build_bg(s)
        assert out.shape == s.image.shape
        assert (out[:, :4] == 0).all()
        assert (out[:, 4:] == s.image[:, 4:]).all()

    def test_overlapping_boxes_idempotent(self):
        s = sample_with([Box(0, 0, 5, 5), Box(3, 3, 8, 8)])
        once = build_bg(s)
        again = build_bg(
            AnnotatedSample(image=once, boxes=s.boxes, label="a", source_id="s")
        )
        assert (once == again).all()

    def test_no_boxes_errors(self):
        with pytest.raises(NoBoxesError):
            build_bg(sample_with([]))


class TestBuildHybrid:
    def test_boxed_equals_fg(self):
        s = sample_with([Box(1, 1, 5, 6)])
        assert (build_hybrid(s) == build_fg(s)).all()

    def test_unboxed_is_identity(self):
        s = sample_with([])
        out = build_hybrid(s)
        assert (out == s.image).all()

    def test_counts_preserved(self):
        corpus = [sample_with([Box(0, 0, 4, 4)], source_id=f"b{i}") for i in range(3)]
        corpus += [sample_with([], source_id=f"u{i}") for i in range(2)]
        assert len([build_hybrid(s) for s in corpus]) == 5


class TestFilterBgTrain:
    def test_boundary_retained(self):
        s = sample_with([Box(0, 0, 4, 8)])  # frame ratio exactly 0.5
        assert frame_area_ratio(s) == 0.5
        assert filter_bg_train([s]) == [s]

    def test_full_image_discarded(self):
        s = sample_with([Box(0, 0, 8, 8)])
        assert filter_bg_train([s]) == []

    def test_mixed_corpus(self):
        keep = [sample_with([Box(0, 0, 4, 4)], source_id=f"k{i}") for i in range(6)]
        drop = [sample_with([Box(0, 0, 8, 7)], source_id=f"d{i}") for i in range(4)]
        kept = filter_bg_train(keep + drop)
        assert [s.source_id for s in kept] == [s.source_id for s in keep]

    def test_union_measure(self):
        # two small separated boxes: big frame, small union
        s = sample_with([Box(0, 0, 2, 2), Box(6, 6, 8, 8)])
        assert filter_bg_train([s], measure="frame") == []
        assert filter_bg_train([s], measure="union") == [s]


class TestMergeLabels:
    def rec(self, label, sid="r0"):
        return ManifestRecord(
            source_id=sid,
            image_path="images/x.png",
            kind="orig",
            split="train",
            label=label,
            fine_label=label,
            boxes=[],
            frame=None,
            foreground_pixel_ratio=0.0,
            frame_area_ratio=None,
        )

    def test_identity(self):
        recs = [self.rec("a"), self.rec("b", "r1")]
        merge = LabelMerge.identity(["a", "b"])
        out = merge_labels(recs, merge)
        assert [r.label for r in out] == ["a", "b"]

    def test_counts_preserved(self):
        recs = [self.rec(f"fine{i % 10}", f"r{i}") for i in range(100)]
        merge = LabelMerge({f"fine{i}": f"coarse{i % 3}" for i in range(10)})
        assert merge.coarse_count == 3
        out = merge_labels(recs, merge)
        assert len(out) == 100
        assert {r.label for r in out} == {"coarse0", "coarse1", "coarse2"}
        assert [r.fine_label for r in out] == [r.fine_label for r in recs]

    def test_unmapped_label_errors_by_name(self):
        with pytest.raises(DataError, match="oddball"):
            merge_labels([self.rec("oddball")], LabelMerge({"a": "b"}))


class TestManifestRoundTrip:
    def test_record_field_order_and_roundtrip(self, tmp_path):
        rec = ManifestRecord(
            source_id="s1",
            image_path="images/s1.png",
            kind="fg",
            split="test",
            label="cat01",
            fine_label="cat01",
            boxes=[Box(1, 2, 5, 6)],
            frame=Box(1, 2, 5, 6),
            foreground_pixel_ratio=0.25,
            frame_area_ratio=0.25,
        )
        line = rec.to_json()
        keys = list(json.loads(line).keys())
        assert keys == [
            "source_id", "image_path", "kind", "split", "label", "fine_label",
            "boxes", "frame", "foreground_pixel_ratio", "frame_area_ratio",
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, [rec])
        back = read_manifest(path)
        assert back[0] == rec

    def test_png_zeroes_roundtrip(self, tmp_path):
        s = sample_with([Box(0, 0, 4, 8)])
        out = build_bg(s)
        save_png(tmp_path / "x.png", out)
        assert (load_png(tmp_path / "x.png") == out).all()


class TestBuildVariants:
    @pytest.fixture()
    def corpus(self, tmp_path):
        rng = np.random.default_rng(7)
        src = tmp_path / "src" / "orig" / "train"
        records = []
        for i in range(6):
            img = rng.integers(1, 255, size=(16, 16, 3), dtype=np.uint8)
            # half the corpus gets a big frame (filtered from bg train)
            box = Box(0, 0, 12, 12) if i % 2 else Box(2, 2, 6, 6)
            sid = f"train-{i:03d}"
            save_png(src / "images" / f"{sid}.png", img)
            records.append(
                ManifestRecord(
                    source_id=sid,
                    image_path=f"images/{sid}.png",
                    kind="orig",
                    split="train",
                    label=f"cat{i % 2}",
                    fine_label=f"cat{i % 2}",
                    boxes=[box],
                    frame=box,
                    foreground_pixel_ratio=box.area / 256,
                    frame_area_ratio=box.area / 256,
                )
            )
        write_manifest(src / "manifest.jsonl", records)
        return src / "manifest.jsonl"

    def test_bg_train_filtered_fg_not(self, corpus, tmp_path):
        out = tmp_path / "built"
        variants = {
            (v.kind, v.split): v
            for v in build_variants([corpus], out, kinds=("orig", "fg", "bg", "hybrid"))
        }
        assert len(variants[("orig", "train")]) == 6
        assert len(variants[("fg", "train")]) == 6
        assert len(variants[("bg", "train")]) == 3  # 12x12 frames > 0.5 dropped
        assert len(variants[("hybrid", "train")]) == 6

    def test_bg_images_zeroed_inside_boxes(self, corpus, tmp_path):
        out = tmp_path / "built"
        variants = build_variants([corpus], out, kinds=("bg",))
        for v in variants:
            for rec in v.records:
                img = load_png(v.manifest_path.parent / rec.image_path)
                for b in rec.boxes:
                    assert img[b.y0 : b.y1, b.x0 : b.x1].sum() == 0

    def test_orig_copy_is_byte_identical(self, corpus, tmp_path):
        out = tmp_path / "built"
        build_variants([corpus], out, kinds=("orig",))
        src_img = (corpus.parent / "images" / "train-000.png").read_bytes()
        dst_img = (out / "orig" / "train" / "images" / "train-000.png").read_bytes()
        assert src_img == dst_img
