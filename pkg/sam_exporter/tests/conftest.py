import numpy as np
import pytest
from PIL import Image


def _blob_image(seed: int) -> np.ndarray:
    """Dark field with two bright rectangles the stub backend will find."""
    rng = np.random.default_rng(seed)
    data = rng.integers(10, 40, size=(32, 32, 3), dtype=np.uint8)
    y, x = int(rng.integers(2, 8)), int(rng.integers(2, 8))
    data[y : y + 8, x : x + 8] = rng.integers(180, 255, size=3, dtype=np.uint8)
    data[20:28, 18:30] = rng.integers(180, 255, size=3, dtype=np.uint8)
    return data


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Three PNGs, one of them in a subdirectory."""
    root = tmp_path_factory.mktemp("images")
    (root / "nested").mkdir()
    for seed, rel in enumerate(["apple.png", "pear.png", "nested/plum.png"]):
        Image.fromarray(_blob_image(seed)).save(root / rel)
    return root
