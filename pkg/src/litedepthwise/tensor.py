"""Dense N-D numeric arrays, the substrate for every other module.

Layout is row-major with axis order (batch, channel, height, width, depth)
for rank-5 tensors: flat index of (n, c, h, w, d) is
((((n*C + c)*H + h)*W + w)*D + d). Channels sit before the spatial and
spectral axes so per-channel depthwise loops are contiguous in the spectral
dimension.

Tensors are treated as immutable once an op has constructed them; ops
allocate fresh outputs, so sharing across threads for reading is safe.
"""

from typing import NamedTuple

import numpy as np

from . import precision


class ShapeError(ValueError):
    """Raised when tensor extents are inconsistent with an op's contract."""


class Shape5(NamedTuple):
    """Canonical rank-5 extents: batch, channels, height, width, depth."""

    n: int
    c: int
    h: int
    w: int
    d: int

    def validate(self):
        if min(self) < 1:
            raise ShapeError(f"all extents must be >= 1, got {tuple(self)}")
        return self

    @staticmethod
    def of(t):
        arr = t.array if isinstance(t, Tensor) else np.asarray(t)
        if arr.ndim != 5:
            raise ShapeError(f"expected a rank-5 tensor, got {arr.shape}")
        return Shape5(*arr.shape).validate()


class Tensor:
    """A dense value grid: a shape plus a flat row-major payload."""

    __slots__ = ("array",)

    def __init__(self, array, copy=False, check_finite=False):
        arr = np.array(array, copy=copy) if copy else np.asarray(array)
        if arr.dtype != precision.dtype():
            arr = arr.astype(precision.dtype())
        if arr.ndim < 1 or arr.ndim > 5:
            raise ShapeError(f"tensor rank must be 1..5, got {arr.ndim}")
        if any(e < 1 for e in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        if check_finite and not np.isfinite(arr).all():
            raise ValueError("tensor contains non-finite values")
        self.array = np.ascontiguousarray(arr)

    @property
    def shape(self):
        return self.array.shape

    @property
    def ndim(self):
        return self.array.ndim

    @property
    def size(self):
        return self.array.size

    @property
    def dtype(self):
        return self.array.dtype

    def flat(self):
        """The row-major linearization of the payload (a view)."""
        return self.array.reshape(-1)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.array.astype(dtype)
        return self.array

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.array.dtype})"

    @staticmethod
    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=precision.dtype()))

    @staticmethod
    def full(shape, value):
        return Tensor(np.full(shape, value, dtype=precision.dtype()))

    @staticmethod
    def from_flat(data, shape):
        arr = np.asarray(data, dtype=precision.dtype())
        if arr.size != int(np.prod(shape)):
            raise ShapeError(
                f"flat payload of {arr.size} values cannot fill shape {tuple(shape)}"
            )
        return Tensor(arr.reshape(shape))


def as_ndarray(t):
    """Accept a Tensor or a bare ndarray at an op boundary."""
    if isinstance(t, Tensor):
        return t.array
    return np.asarray(t)


def reshape(t, new_shape):
    """Reinterpret the flat payload under a new shape; no value changes."""
    arr = as_ndarray(t)
    new_shape = tuple(int(e) for e in new_shape)
    if int(np.prod(new_shape)) != arr.size:
        raise ShapeError(
            f"cannot reshape {arr.shape} (size {arr.size}) to {new_shape}"
        )
    return Tensor(arr.reshape(new_shape))


def concat_channels(tensors):
    """Concatenate along the channel axis (axis 1), input order preserved.

    All inputs must agree on batch and spatial/spectral extents; channel
    counts may differ.
    """
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    arrays = [as_ndarray(t) for t in tensors]
    first = arrays[0]
    for a in arrays[1:]:
        if a.ndim != first.ndim:
            raise ShapeError("concat_channels inputs must share rank")
        if a.shape[0] != first.shape[0] or a.shape[2:] != first.shape[2:]:
            raise ShapeError(
                f"concat_channels spatial/spectral mismatch: {a.shape} vs {first.shape}"
            )
    if len(arrays) == 1:
        return Tensor(first)
    return Tensor(np.concatenate(arrays, axis=1))


def slice_channels(t, start, stop):
    """Inverse of concat_channels: take channels [start, stop)."""
    arr = as_ndarray(t)
    if not (0 <= start < stop <= arr.shape[1]):
        raise ShapeError(f"channel slice [{start}:{stop}) out of range for {arr.shape}")
    return Tensor(np.ascontiguousarray(arr[:, start:stop]))


def add(a, b):
    x, y = as_ndarray(a), as_ndarray(b)
    if x.shape != y.shape:
        raise ShapeError(f"add shape mismatch: {x.shape} vs {y.shape}")
    return Tensor(x + y)


def mul(a, b):
    x, y = as_ndarray(a), as_ndarray(b)
    if x.shape != y.shape:
        raise ShapeError(f"mul shape mismatch: {x.shape} vs {y.shape}")
    return Tensor(x * y)


def relu(t):
    return Tensor(np.maximum(as_ndarray(t), 0))


def scale(t, factor):
    return Tensor(as_ndarray(t) * float(factor))
