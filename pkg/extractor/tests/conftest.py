import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_folder(tmp_path_factory):
    """Two classes, three 48x48 PNGs each, seeded content."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    for class_name in ("class_a", "class_b"):
        d = root / class_name
        d.mkdir()
        for i in range(3):
            pixels = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(d / f"img{i}.png")
    return root
