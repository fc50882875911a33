import numpy as np
import pytest

from sigkit.dataset import SyntheticSpec, generate_signature
from sigkit.imagecore import GrayImage


@pytest.fixture(scope="session")
def signature():
    return generate_signature(SyntheticSpec(subject_seed=11))


@pytest.fixture(scope="session")
def signatures():
    return [generate_signature(SyntheticSpec(subject_seed=s)) for s in range(5)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def stroke_image(rng, width=40, height=30, strokes=3):
    """Small white raster with a few dark line segments."""
    px = np.full((height, width), 255, dtype=np.uint8)
    for _ in range(strokes):
        x0, x1 = sorted(rng.integers(4, width - 4, 2))
        y0, y1 = rng.integers(4, height - 4, 2)
        n = max(x1 - x0, abs(y1 - y0)) + 1
        xs = np.rint(np.linspace(x0, x1, n)).astype(int)
        ys = np.rint(np.linspace(y0, y1, n)).astype(int)
        px[ys, xs] = 0
    return GrayImage(px)
