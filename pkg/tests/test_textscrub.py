import sys

import numpy as np
import pytest
from PIL import Image, ImageDraw, ImageFont

from ecgtize.errors import OcrUnavailable
from ecgtize.raster import RasterPage
from ecgtize.textscrub import PageMetadata, TextBox, detect_text, scrub
from ecgtize.tracefind import TraceBand


def white_page(h=200, w=300):
    return RasterPage(pixels=np.full((h, w, 3), 255, np.uint8), dpi=300)


def test_blank_page_no_text():
    assert detect_text(white_page(), engine="heuristic") == []


def test_rendered_label_found_with_good_iou():
    page = white_page()
    img = Image.fromarray(page.pixels)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    draw.text((40, 80), "V1", font=font, fill=(0, 0, 0))
    truth = draw.textbbox((40, 80), "V1", font=font)
    page = RasterPage(pixels=np.asarray(img), dpi=300)
    boxes = detect_text(page, engine="heuristic", glyph_height_frac=0.1)
    assert boxes
    x0 = min(b.x0 for b in boxes)
    y0 = min(b.y0 for b in boxes)
    x1 = max(b.x1 for b in boxes)
    y1 = max(b.y1 for b in boxes)
    ix = max(0, min(x1, truth[2]) - max(x0, truth[0]))
    iy = max(0, min(y1, truth[3]) - max(y0, truth[1]))
    inter = ix * iy
    union = (x1 - x0) * (y1 - y0) + (truth[2] - truth[0]) * (truth[3] - truth[1]) - inter
    assert inter / union >= 0.8


def test_horizontal_line_is_not_text():
    page = white_page()
    page.pixels[100:102, 10:290] = 0
    bits = (page.pixels[..., 0] > 128).astype(np.uint8)
    band = TraceBand(row_start=95, row_end=107, col_start=10, col_end=290)
    assert detect_text(page, engine="heuristic", bands=[band]) == []


def test_tall_component_rejected_by_ceiling():
    page = white_page()
    page.pixels[20:180, 50:54] = 0     # tall vertical bar
    assert detect_text(page, engine="heuristic") == []


def test_boxes_never_intersect_bands():
    page = white_page()
    page.pixels[100:102, 10:290] = 0          # the trace
    page.pixels[99:99 + 2, 60:70] = 0         # mark touching the trace rows
    page.pixels[20:26, 150:170] = 0           # free-standing mark
    band = TraceBand(row_start=96, row_end=106, col_start=10, col_end=290)
    boxes = detect_text(page, engine="heuristic", bands=[band],
                        glyph_height_frac=0.05)
    assert boxes
    assert all(not b.intersects_band(band) for b in boxes)


class TestScrub:
    def test_empty_boxes_identity(self):
        page = white_page()
        page.pixels[5:10, 5:10] = 3
        out, meta = scrub(page, [])
        assert np.array_equal(out.pixels, page.pixels)
        assert meta.entries == []

    def test_black_box_on_white_becomes_white(self):
        page = white_page()
        page.pixels[50:54, 60:64] = 0
        out, _ = scrub(page, [TextBox(x0=60, y0=50, x1=64, y1=54)])
        assert (out.pixels == 255).all()

    def test_half_black_ring_mean(self):
        page = white_page()
        box = TextBox(x0=10, y0=10, x1=12, y1=12)
        # ring is the 16-pixel frame around [10,12)x[10,12); paint half black
        ring = [(9, x) for x in range(9, 13)] + [(12, x) for x in range(9, 13)] \
             + [(y, 9) for y in (10, 11)] + [(y, 12) for y in (10, 11)]
        for k, (y, x) in enumerate(ring):
            page.pixels[y, x] = 0 if k % 2 == 0 else 255
        out, _ = scrub(page, [box])
        assert (out.pixels[10:12, 10:12] == 128).all()   # round(127.5) half up

    def test_pixels_outside_boxes_untouched(self):
        rng = np.random.default_rng(0)
        page = RasterPage(pixels=rng.integers(0, 256, (60, 80, 3), dtype=np.uint8).astype(np.uint8), dpi=300)
        box = TextBox(x0=20, y0=10, x1=40, y1=30)
        out, _ = scrub(page, [box])
        mask = np.ones((60, 80), bool)
        mask[10:30, 20:40] = False
        assert np.array_equal(out.pixels[mask], page.pixels[mask])

    def test_scrub_idempotent(self):
        page = white_page()
        page.pixels[50:60, 60:80] = 0
        boxes = [TextBox(x0=60, y0=50, x1=80, y1=60, text="x")]
        once, _ = scrub(page, boxes)
        twice, _ = scrub(once, boxes)
        assert np.array_equal(once.pixels, twice.pixels)

    def test_metadata_collects_strings(self):
        page = white_page()
        boxes = [TextBox(x0=1, y0=1, x1=5, y1=5, text="JOHN DOE", confidence=0.9),
                 TextBox(x0=10, y0=1, x1=15, y1=5, text="", confidence=0.5)]
        _, meta = scrub(page, boxes)
        assert meta.strings() == ["JOHN DOE"]
        assert len(meta.entries) == 2


class TestExternal:
    def test_unconfigured_raises(self):
        with pytest.raises(OcrUnavailable):
            detect_text(white_page(), engine="external", ocr_cmd=None)

    def test_missing_executable_raises(self):
        with pytest.raises(OcrUnavailable):
            detect_text(white_page(), engine="external",
                        ocr_cmd="/nonexistent/ocr-binary")

    def test_parses_detection_lines(self, tmp_path):
        script = tmp_path / "fakeocr.py"
        script.write_text(
            "import sys\n"
            "print('10 20 60 35 0.93 HELLO WORLD')\n"
            "print('5 5 9 9 0.4')\n")
        boxes = detect_text(white_page(), engine="external",
                            ocr_cmd=f"{sys.executable} {script}")
        assert len(boxes) == 2
        assert boxes[0] == TextBox(x0=10, y0=20, x1=60, y1=35,
                                   text="HELLO WORLD", confidence=0.93)
        assert boxes[1].text == ""

    def test_bad_output_line_raises(self, tmp_path):
        script = tmp_path / "fakeocr.py"
        script.write_text("print('only three words')\n")
        with pytest.raises(OcrUnavailable):
            detect_text(white_page(), engine="external",
                        ocr_cmd=f"{sys.executable} {script}")
