import os
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facemood.errors import ParseError, UnsupportedCascadeError
from facemood.facedetect import (
    DetectParams,
    FaceBox,
    crop_largest_face,
    detect,
    group_detections,
    integral_images,
    parse_cascade,
    rect_sum,
    tilted_rect_sum,
)
from facemood.image import ImagePlane

OLD_XML = """<?xml version="1.0"?>
<opencv_storage>
<test_cascade type_id="opencv-haar-classifier">
  <size>4 4</size>
  <stages>
    <_>
      <trees>
        <_>
          <_>
            <feature>
              <rects>
                <_>0 0 4 2 -1.</_>
                <_>0 2 4 2 2.</_>
              </rects>
              <tilted>0</tilted>
            </feature>
            <threshold>0.5</threshold>
            <left_val>-1.</left_val>
            <right_val>1.</right_val>
          </_>
        </_>
      </trees>
      <stage_threshold>0.</stage_threshold>
      <parent>-1</parent>
      <next>-1</next>
    </_>
  </stages>
</test_cascade>
</opencv_storage>
"""

NEW_XML = """<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier">
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>4</height>
  <width>4</width>
  <stageParams><maxWeakCount>1</maxWeakCount></stageParams>
  <featureParams><maxCatCount>0</maxCatCount></featureParams>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>0.</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.5</internalNodes>
          <leafValues>-1. 1.</leafValues>
        </_>
      </weakClassifiers>
    </_>
  </stages>
  <features>
    <_>
      <rects>
        <_>0 0 4 2 -1.</_>
        <_>0 2 4 2 2.</_>
      </rects>
    </_>
  </features>
</cascade>
</opencv_storage>
"""


@pytest.fixture
def old_cascade(tmp_path):
    path = tmp_path / "old.xml"
    path.write_text(OLD_XML)
    return parse_cascade(path)


@pytest.fixture
def new_cascade(tmp_path):
    path = tmp_path / "new.xml"
    path.write_text(NEW_XML)
    return parse_cascade(path)


def bottom_bright(size=4):
    img = np.zeros((size, size), np.uint8)
    img[size // 2 :, :] = 255
    return ImagePlane(img)


class TestParse:
    def test_old_schema(self, old_cascade):
        assert (old_cascade.base_width, old_cascade.base_height) == (4, 4)
        assert len(old_cascade.stages) == 1
        assert old_cascade.stages[0].threshold == 0.0
        node = old_cascade.stages[0].trees[0].nodes[0]
        assert node.threshold == 0.5
        assert (node.left_val, node.right_val) == (-1.0, 1.0)

    def test_new_schema(self, new_cascade):
        assert (new_cascade.base_width, new_cascade.base_height) == (4, 4)
        node = new_cascade.stages[0].trees[0].nodes[0]
        assert (node.left_val, node.right_val) == (-1.0, 1.0)

    def test_schemas_agree(self, old_cascade, new_cascade):
        img = bottom_bright(8)
        params = DetectParams(scale_factor=1.2, min_neighbors=0)
        assert detect(img, old_cascade, params) == detect(img, new_cascade, params)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "cut.xml"
        path.write_text(OLD_XML[: len(OLD_XML) // 2])
        with pytest.raises(ParseError):
            parse_cascade(path)

    def test_missing_file(self):
        with pytest.raises(ParseError):
            parse_cascade("/nonexistent/cascade.xml")

    def test_unsupported_feature_type(self, tmp_path):
        path = tmp_path / "lbp.xml"
        path.write_text(NEW_XML.replace("HAAR", "LBP"))
        with pytest.raises(UnsupportedCascadeError):
            parse_cascade(path)

    def test_rect_outside_window_rejected(self, tmp_path):
        path = tmp_path / "bad.xml"
        path.write_text(OLD_XML.replace("0 2 4 2 2.", "0 2 9 2 2."))
        with pytest.raises(ParseError):
            parse_cascade(path)

    def _text_scan(self, path):
        """Independent oracle: count stages and read the base window straight
        from the XML text, without the parser."""
        text = path.read_text()
        if "opencv-haar-classifier" in text:
            size = re.search(r"<size>\s*(\d+)\s+(\d+)\s*</size>", text)
            base = (int(size.group(1)), int(size.group(2)))
            stages = text.count("<stage_threshold>")
        else:
            base = (
                int(re.search(r"<width>\s*(\d+)", text).group(1)),
                int(re.search(r"<height>\s*(\d+)", text).group(1)),
            )
            stages = text.count("<stageThreshold>")
        return base, stages

    def test_bundled_cascade_matches_text_scan(self):
        from facemood.cli import bundled_cascade_path

        path = bundled_cascade_path()
        cascade = parse_cascade(path)
        base, stages = self._text_scan(path)
        assert (cascade.base_width, cascade.base_height) == base == (20, 20)
        assert len(cascade.stages) == stages

    def test_frontalface_alt2_matches_text_scan(self):
        path = os.environ.get("FACEMOOD_ALT2_XML")
        if not path:
            pytest.skip(
                "set FACEMOOD_ALT2_XML to a haarcascade_frontalface_alt2.xml "
                "to check the parser against it"
            )
        from pathlib import Path

        cascade = parse_cascade(path)
        base, stages = self._text_scan(Path(path))
        assert (cascade.base_width, cascade.base_height) == base == (20, 20)
        assert len(cascade.stages) == stages


class TestIntegralImages:
    def test_all_ones_corner(self):
        tables = integral_images(ImagePlane(np.ones((2, 2), np.uint8)))
        assert tables.ii[2, 2] == 4

    def test_full_image_sum(self):
        rng = np.random.default_rng(0)
        px = rng.integers(0, 256, (9, 7)).astype(np.uint8)
        tables = integral_images(ImagePlane(px))
        assert tables.ii[-1, -1] == px.sum()
        assert tables.ii2[-1, -1] == (px.astype(np.int64) ** 2).sum()

    def test_rect_sums_match_direct_summation(self):
        rng = np.random.default_rng(1)
        px = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        tables = integral_images(ImagePlane(px))
        for y in range(8):
            for x in range(8):
                for h in range(1, 8 - y + 1):
                    for w in range(1, 8 - x + 1):
                        expected = px[y : y + h, x : x + w].astype(np.int64).sum()
                        assert rect_sum(tables.ii, x, y, w, h) == expected

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.integers(0, 7), st.integers(0, 7),
        st.integers(1, 8), st.integers(1, 8),
    )
    def test_rect_sum_identity_property(self, seed, x, y, w, h):
        rng = np.random.default_rng(seed)
        px = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        tables = integral_images(ImagePlane(px))
        w = min(w, 8 - x)
        h = min(h, 8 - y)
        if w < 1 or h < 1:
            return
        assert rect_sum(tables.ii, x, y, w, h) == px[y:y+h, x:x+w].astype(np.int64).sum()

    def test_tilted_sums_match_documented_pixel_set(self):
        rng = np.random.default_rng(2)
        px = rng.integers(0, 256, (12, 14)).astype(np.int64)
        tables = integral_images(ImagePlane(px.astype(np.uint8)))

        def brute(x, y, w, h):
            total = 0
            for py in range(12):
                for qx in range(14):
                    u = (qx - x) + (py - y)
                    v = (py - y) - (qx - x)
                    if 0 <= u <= 2 * w - 1 and 0 <= v <= 2 * h - 1:
                        total += px[py, qx]
            return total

        cases = [(5, 1, 3, 2), (4, 0, 2, 3), (6, 2, 1, 1), (5, 0, 4, 4), (3, 3, 2, 2)]
        for x, y, w, h in cases:
            assert tilted_rect_sum(tables.tilted, x, y, w, h) == brute(x, y, w, h)
            # pixel count sanity: the covered set has exactly 2*w*h members
            ones = integral_images(ImagePlane(np.ones((12, 14), np.uint8)))
            assert tilted_rect_sum(ones.tilted, x, y, w, h) == 2 * w * h


class TestDetect:
    def test_bright_bottom_pattern_detected(self, old_cascade):
        boxes = detect(bottom_bright(4), old_cascade, DetectParams(min_neighbors=0))
        assert boxes == [FaceBox(0, 0, 4)]

    def test_inverted_pattern_rejected(self, old_cascade):
        img = ImagePlane(255 - bottom_bright(4).data)
        assert detect(img, old_cascade, DetectParams(min_neighbors=0)) == []

    def test_blank_image_rejected_by_variance(self, old_cascade):
        img = ImagePlane(np.full((16, 16), 128, np.uint8))
        assert detect(img, old_cascade, DetectParams(min_neighbors=0)) == []

    def test_min_neighbors_monotonic(self, old_cascade):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, (24, 24)).astype(np.uint8)
        img[12:, :] = np.minimum(img[12:, :] + 120, 255)
        plane = ImagePlane(img)
        loose = detect(plane, old_cascade, DetectParams(min_neighbors=0))
        strict = detect(plane, old_cascade, DetectParams(min_neighbors=3))
        assert set(strict) <= set(loose)

    def test_deterministic(self, old_cascade):
        rng = np.random.default_rng(4)
        plane = ImagePlane(rng.integers(0, 256, (30, 30)).astype(np.uint8))
        params = DetectParams(min_neighbors=1)
        assert detect(plane, old_cascade, params) == detect(plane, old_cascade, params)

    def test_min_size_filters_small_scales(self, old_cascade):
        img = bottom_bright(4)
        assert detect(img, old_cascade, DetectParams(min_neighbors=0, min_size=8)) == []

    def test_sorted_by_descending_side(self, old_cascade):
        img = np.zeros((40, 40), np.uint8)
        img[2:4, 0:4] = 255  # small bright-bottom pattern at the origin
        img[20:40, 8:40] = 255  # large pattern lower right
        boxes = detect(ImagePlane(img), old_cascade, DetectParams(min_neighbors=0))
        sides = [b.side for b in boxes]
        assert sides == sorted(sides, reverse=True)


class TestGrouping:
    def test_singleton_idempotent(self):
        boxes = group_detections([(10, 10, 50)], min_neighbors=0)
        assert boxes == [FaceBox(10, 10, 50)]
        again = group_detections([(boxes[0].x, boxes[0].y, boxes[0].side)], 0)
        assert again == boxes

    def test_cluster_averaging(self):
        raw = [(10, 10, 50), (12, 12, 50), (8, 8, 50)]
        boxes = group_detections(raw, min_neighbors=3)
        assert boxes == [FaceBox(10, 10, 50)]

    def test_min_neighbors_threshold(self):
        raw = [(10, 10, 50), (11, 11, 50), (200, 200, 50)]
        assert len(group_detections(raw, 0)) == 2
        assert len(group_detections(raw, 2)) == 1
        assert group_detections(raw, 3) == []

    def test_distant_boxes_not_merged(self):
        raw = [(0, 0, 20), (100, 100, 20)]
        assert len(group_detections(raw, 0)) == 2


class TestCrop:
    def test_crop_largest(self, old_cascade):
        img = np.zeros((40, 40), np.uint8)
        img[22:40, 6:40] = 255  # large bottom-bright block starting around y=20
        plane = ImagePlane(img)
        boxes = detect(plane, old_cascade, DetectParams(min_neighbors=0))
        assert boxes, "fixture should produce at least one detection"
        face = crop_largest_face(plane, old_cascade, DetectParams(min_neighbors=0))
        assert face is not None
        assert face.width == face.height == boxes[0].side

    def test_none_when_no_detection(self, old_cascade):
        img = ImagePlane(np.full((20, 20), 100, np.uint8))
        assert crop_largest_face(img, old_cascade, DetectParams(min_neighbors=0)) is None
