import numpy as np
import pytest
from PIL import Image

CLASS_COLORS = {
    "crimson": (200, 40, 50),
    "emerald": (30, 190, 90),
    "cobalt": (40, 70, 210),
}


@pytest.fixture(scope="session")
def toy_folder(tmp_path_factory):
    """12 synthetic images (4 per class) in class subfolders + class list."""
    root = tmp_path_factory.mktemp("toy")
    images = root / "images"
    rng = np.random.default_rng(99)
    for name, color in CLASS_COLORS.items():
        sub = images / name
        sub.mkdir(parents=True)
        for i in range(4):
            base = np.tile(np.array(color, dtype=np.float64), (24, 24, 1))
            noisy = np.clip(base + rng.normal(0, 25, base.shape), 0, 255)
            Image.fromarray(noisy.astype(np.uint8)).save(sub / f"img_{i}.png")
    classes = root / "classes.txt"
    classes.write_text("\n".join(CLASS_COLORS) + "\n")
    return images, classes
