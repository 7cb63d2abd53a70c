import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_folder(tmp_path):
    """Two classes x four 32x32 images with distinct color statistics."""
    rng = np.random.default_rng(7)
    root = tmp_path / "data"
    for label, name in enumerate(["aquatic", "terrestrial"]):
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(4):
            base = np.full((32, 32, 3), 40 + 150 * label, dtype=np.float64)
            noisy = np.clip(base + 40 * rng.standard_normal((32, 32, 3)),
                            0, 255).astype(np.uint8)
            Image.fromarray(noisy).save(folder / f"img{i}.png")
    return root


@pytest.fixture
def prompt_files(tmp_path):
    """Two raw f32 prompt files with shape (4, 16)."""
    rng = np.random.default_rng(11)
    paths = []
    for i in range(2):
        path = tmp_path / f"p{i}.bin"
        rng.standard_normal((4, 16)).astype("<f4").tofile(path)
        paths.append(str(path))
    return paths
