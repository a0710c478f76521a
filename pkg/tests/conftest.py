import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ecgtize import render, synth
from ecgtize.layouts import preset
from ecgtize.pipeline import DigitizeOptions, digitize_page


@pytest.fixture(scope="session")
def synth_record():
    record, truth = synth.make_record(seed=11)
    return record, truth


@pytest.fixture(scope="session")
def layout_3x4r():
    return preset("3x4", rhythm=True)


@pytest.fixture(scope="session")
def rendered_png(tmp_path_factory, synth_record, layout_3x4r):
    record, _ = synth_record
    page = render.render_page(record, layout_3x4r, render.RenderStyle())
    path = tmp_path_factory.mktemp("pages") / "synth.png"
    render.save_page(page, path)
    return path


@pytest.fixture(scope="session")
def digitized(rendered_png):
    return digitize_page(rendered_png, DigitizeOptions(layout="auto"))


def random_binary_matrix(rng: np.random.Generator) -> np.ndarray:
    """0 = ink, 1 = background, with varied densities and sizes."""
    n = int(rng.integers(1, 13))
    m = int(rng.integers(1, 13))
    density = rng.uniform(0.05, 0.95)
    return (rng.random((n, m)) >= density).astype(np.uint8)
