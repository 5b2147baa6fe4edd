"""Scene ingestion, normalization, patch extraction and stratified splits.

File formats:
  HSC1 cube   magic "HSC1", u32 LE h, w, bands, then h*w*bands little-endian
              float32 in (row, col, band) order.
  HSL1 labels magic "HSL1", u32 LE h, w, then h*w little-endian int32,
              0 = unlabeled, 1..K = classes.
Split plans persist as CSV with header split,row,col,label.
"""

import csv
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import precision
from .tensor import Tensor

CUBE_MAGIC = b"HSC1"
LABEL_MAGIC = b"HSL1"


@dataclass
class HsiScene:
    cube: np.ndarray  # (h, w, bands), engine float dtype
    labels: np.ndarray  # (h, w) int32, 0 = unlabeled
    class_names: list = None

    def __post_init__(self):
        if self.cube.ndim != 3:
            raise ValueError(f"cube must be rank 3, got {self.cube.shape}")
        if self.labels.shape != self.cube.shape[:2]:
            raise ValueError(
                f"label raster {self.labels.shape} does not match cube "
                f"{self.cube.shape[:2]}"
            )
        if self.labels.min() < 0:
            raise ValueError("labels must be >= 0 (0 = unlabeled)")
        if not np.isfinite(self.cube).all():
            raise ValueError("cube contains non-finite values")

    @property
    def h(self):
        return self.cube.shape[0]

    @property
    def w(self):
        return self.cube.shape[1]

    @property
    def bands(self):
        return self.cube.shape[2]

    @property
    def num_classes(self):
        return int(self.labels.max())

    def labeled_count(self):
        return int((self.labels > 0).sum())

    def class_counts(self):
        """Pixel count per class 1..K as an array of length K."""
        k = self.num_classes
        return np.bincount(self.labels.reshape(-1), minlength=k + 1)[1:]


def write_cube(path, cube):
    cube = np.asarray(cube)
    h, w, bands = cube.shape
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC)
        fh.write(struct.pack("<III", h, w, bands))
        fh.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())


def read_cube(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != CUBE_MAGIC:
            raise ValueError(f"{path}: bad cube magic {head[:4]!r}")
        h, w, bands = struct.unpack("<III", head[4:16])
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != h * w * bands:
        raise ValueError(
            f"{path}: payload has {payload.size} floats, header implies {h * w * bands}"
        )
    return payload.reshape(h, w, bands)


def write_labels(path, labels):
    labels = np.asarray(labels)
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(np.ascontiguousarray(labels, dtype="<i4").tobytes())


def read_labels(path):
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != LABEL_MAGIC:
            raise ValueError(f"{path}: bad label magic {head[:4]!r}")
        h, w = struct.unpack("<II", head[4:12])
        payload = np.frombuffer(fh.read(), dtype="<i4")
    if payload.size != h * w:
        raise ValueError(
            f"{path}: payload has {payload.size} labels, header implies {h * w}"
        )
    return payload.reshape(h, w)


def save_scene(cube_path, label_path, scene):
    write_cube(cube_path, scene.cube)
    write_labels(label_path, scene.labels)


def load_scene(cube_path, label_path, class_names=None):
    """Read and validate an HSC1/HSL1 pair into an HsiScene."""
    cube = read_cube(cube_path).astype(precision.dtype())
    labels = read_labels(label_path).astype(np.int32)
    if labels.shape != cube.shape[:2]:
        raise ValueError(
            f"cube {cube.shape[:2]} and labels {labels.shape} disagree on raster size"
        )
    return HsiScene(cube=cube, labels=labels, class_names=class_names)


def normalize(scene, mode="per-band-standardize"):
    """Per-band standardization or min-max scaling; returns a new scene."""
    cube = scene.cube.astype(np.float64)
    if mode == "per-band-standardize":
        mean = cube.mean(axis=(0, 1))
        std = cube.std(axis=(0, 1))
        std[std == 0] = 1.0  # constant band maps to zeros
        out = (cube - mean) / std
    elif mode == "minmax":
        lo = cube.min(axis=(0, 1))
        hi = cube.max(axis=(0, 1))
        span = hi - lo
        span[span == 0] = 1.0  # constant band maps to zeros
        out = (cube - lo) / span
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return HsiScene(
        cube=out.astype(precision.dtype()),
        labels=scene.labels,
        class_names=scene.class_names,
    )


@dataclass
class SplitPlan:
    train: list  # of (row, col)
    val: list
    test: list
    seed: int
    train_ratio: float
    val_ratio: float

    def coords(self, split):
        return {"train": self.train, "val": self.val, "test": self.test}[split]

    def per_class_counts(self, labels, split):
        """Training/val/test pixel count per class 1..K."""
        k = int(labels.max())
        counts = np.zeros(k, dtype=int)
        for r, c in self.coords(split):
            counts[labels[r, c] - 1] += 1
        return counts


def stratified_split(scene, train_ratio, val_ratio, min_per_class, seed):
    """Deterministic per-class split of all labeled pixels.

    Per class: n_train = max(min_per_class, floor(train_ratio * count)) and
    the same rule for validation (zero when val_ratio is 0); selection is a
    seeded shuffle of the class's pixel list, remainder goes to test.
    Classes smaller than min_per_class are reported and placed wholly in
    train.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must lie in (0, 1)")
    if val_ratio < 0 or train_ratio + val_ratio >= 1.0:
        raise ValueError("need train_ratio + val_ratio < 1 and val_ratio >= 0")
    rng = np.random.default_rng(seed)
    labels = scene.labels
    train, val, test = [], [], []
    for cls in range(1, scene.num_classes + 1):
        rows, cols = np.nonzero(labels == cls)
        count = rows.size
        if count == 0:
            continue
        order = rng.permutation(count)
        coords = [(int(rows[i]), int(cols[i])) for i in order]
        if count < min_per_class:
            warnings.warn(
                f"class {cls} has only {count} labeled pixels "
                f"(< min_per_class={min_per_class}); placing all of them in train"
            )
            train.extend(coords)
            continue
        n_train = max(min_per_class, int(np.floor(train_ratio * count)))
        n_val = max(min_per_class, int(np.floor(val_ratio * count))) if val_ratio > 0 else 0
        n_train = min(n_train, count)
        n_val = min(n_val, count - n_train)
        train.extend(coords[:n_train])
        val.extend(coords[n_train : n_train + n_val])
        test.extend(coords[n_train + n_val :])
    return SplitPlan(
        train=train, val=val, test=test,
        seed=seed, train_ratio=train_ratio, val_ratio=val_ratio,
    )


def save_split(path, plan, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "row", "col", "label"])
        for split in ("train", "val", "test"):
            for r, c in plan.coords(split):
                writer.writerow([split, r, c, int(labels[r, c])])


def load_split(path, seed=0, train_ratio=0.0, val_ratio=0.0):
    buckets = {"train": [], "val": [], "test": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["split", "row", "col", "label"]:
            raise ValueError(f"{path}: unexpected split header {header}")
        for split, r, c, _label in reader:
            buckets[split].append((int(r), int(c)))
    return SplitPlan(
        train=buckets["train"], val=buckets["val"], test=buckets["test"],
        seed=seed, train_ratio=train_ratio, val_ratio=val_ratio,
    )


@dataclass
class PatchBatch:
    tensors: Tensor  # (n, 1, patch, patch, bands)
    labels: np.ndarray  # (n,) zero-based class indices
    coords: list  # source (row, col) per sample


def _mirror_pad_cube(cube, margin):
    # reflect without repeating the border pixel, so index -k maps to +k
    return np.pad(cube, ((margin, margin), (margin, margin), (0, 0)), mode="reflect")


def extract_batch(scene, coords, patch_size, padded=None):
    """Patches centered on the given pixels; borders are mirror-padded."""
    if patch_size % 2 == 0:
        raise ValueError("patch size must be odd")
    margin = patch_size // 2
    if padded is None:
        padded = _mirror_pad_cube(scene.cube, margin)
    n = len(coords)
    out = np.empty((n, 1, patch_size, patch_size, scene.bands), dtype=scene.cube.dtype)
    labels = np.empty(n, dtype=np.int64)
    for i, (r, c) in enumerate(coords):
        out[i, 0] = padded[r : r + patch_size, c : c + patch_size, :]
        labels[i] = scene.labels[r, c] - 1
    return PatchBatch(tensors=Tensor(out), labels=labels, coords=list(coords))


def extract_patches(scene, plan, split, patch_size, batch_size=32):
    """Stream PatchBatch objects over one split of a plan."""
    coords = plan.coords(split)
    margin = patch_size // 2
    padded = _mirror_pad_cube(scene.cube, margin)
    for start in range(0, len(coords), batch_size):
        yield extract_batch(scene, coords[start : start + batch_size], patch_size, padded)
