import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from litedepthwise import precision
from litedepthwise.data import HsiScene


@pytest.fixture
def double_precision():
    with precision.use_precision("double"):
        yield


@pytest.fixture(autouse=True)
def _restore_precision():
    previous = precision.get_precision()
    yield
    precision.set_precision(previous)


def class_spectrum(cls, bands, width=1.6):
    """Gaussian reflectance bump; class centers are spread across the range."""
    centers = np.linspace(bands * 0.15, bands * 0.85, max(cls, 3))
    axis = np.arange(bands, dtype=np.float64)
    return np.exp(-((axis - centers[cls - 1]) ** 2) / (2.0 * width**2))


def build_scene(labels, bands, noise=0.05, seed=0):
    """Synthetic scene: each class follows its own clean spectral signature."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels, dtype=np.int32)
    h, w = labels.shape
    cube = np.full((h, w, bands), 0.5, dtype=np.float64)
    for cls in range(1, int(labels.max()) + 1):
        cube[labels == cls] = class_spectrum(cls, bands)
    cube += noise * rng.normal(size=cube.shape)
    return HsiScene(cube=cube.astype(precision.dtype()), labels=labels)


def block_labels(h, w, classes, block=10):
    """Spatially homogeneous class regions, round-robin over blocks."""
    labels = np.zeros((h, w), dtype=np.int32)
    cls = 0
    for r0 in range(0, h, block):
        for c0 in range(0, w, block):
            labels[r0 : r0 + block, c0 : c0 + block] = cls % classes + 1
            cls += 1
    return labels


def separable_scene(bands=16, seed=0):
    """30x30 three-class scene with clean, well-separated spectra."""
    labels = block_labels(30, 30, classes=3, block=10)
    return build_scene(labels, bands=bands, noise=0.05, seed=seed)


def imbalanced_scene(bands=16, seed=0):
    """Two classes at roughly a 1:20 pixel ratio."""
    labels = np.ones((30, 30), dtype=np.int32)
    labels[12:18, 12:19] = 2  # 42 pixels of class 2 vs 858 of class 1
    return build_scene(labels, bands=bands, noise=0.05, seed=seed)


def scatter_label_raster(shape, class_totals, seed=0):
    """A label raster with exact per-class pixel totals, randomly placed."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(shape[0] * shape[1], dtype=np.int32)
    order = rng.permutation(flat.size)
    pos = 0
    for cls, count in enumerate(class_totals, start=1):
        flat[order[pos : pos + count]] = cls
        pos += count
    return flat.reshape(shape)


# Published per-class pixel totals and 5%-protocol training counts for the
# 145x145, 16-class benchmark scene.
IP_CLASS_TOTALS = [46, 1428, 830, 237, 483, 730, 28, 478, 20, 972, 2455, 593,
                   205, 1265, 386, 93]
IP_TRAIN_COUNTS = [5, 71, 41, 12, 24, 37, 5, 24, 5, 49, 109, 30, 12, 63, 19, 6]

# 610x340, 9-class scene: totals and the 0.5% training counts.
UP_CLASS_TOTALS = [6631, 18649, 2099, 3064, 1345, 5029, 1330, 3682, 947]
UP_TRAIN_COUNTS = [33, 93, 10, 15, 7, 25, 7, 19, 5]

# 1096x715, 9-class scene: totals and the 0.1% training counts.
PC_CLASS_TOTALS = [65971, 7598, 3090, 2685, 6584, 9248, 7287, 42826, 2863]
PC_TRAIN_COUNTS = [65, 7, 3, 3, 6, 9, 7, 42, 3]
