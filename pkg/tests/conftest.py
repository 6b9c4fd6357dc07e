import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from autobox.raster import new_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gray_image():
    return new_image(64, 48, (204, 204, 204))


def random_image(rng, width=32, height=24):
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
