import numpy as np
import pytest
from PIL import Image


def desk_image() -> np.ndarray:
    """Three saturated rectangles on a gray background, 32x32."""
    img = np.full((32, 32, 3), 140, dtype=np.uint8)
    img[4:12, 4:12] = (220, 40, 40)
    img[18:28, 6:16] = (40, 200, 60)
    img[6:14, 20:30] = (50, 70, 220)
    return img


@pytest.fixture(scope="session")
def image_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "desk.png"
    Image.fromarray(desk_image()).save(path)
    return path
