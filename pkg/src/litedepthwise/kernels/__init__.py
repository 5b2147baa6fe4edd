"""Kernel backend selection: compiled extension with a numpy fallback.

The compiled Cython kernels are preferred when the extension built; the
vectorized numpy implementation is the fallback. Set
LITEDEPTHWISE_KERNELS=numpy (or =cython) to force a backend, e.g. for the
benchmark in benchmarks/bench_conv3d.py or to reproduce fallback behaviour
in tests.
"""

import os
import warnings

from . import conv3d_numpy

try:
    from . import _conv3d
except ImportError:  # extension not built on this install
    _conv3d = None

_forced = os.environ.get("LITEDEPTHWISE_KERNELS", "").strip().lower()
if _forced == "numpy":
    _impl = conv3d_numpy
    BACKEND = "numpy"
elif _forced == "cython":
    if _conv3d is None:
        warnings.warn(
            "LITEDEPTHWISE_KERNELS=cython requested but the extension is not "
            "built; falling back to numpy kernels",
            RuntimeWarning,
        )
        _impl = conv3d_numpy
        BACKEND = "numpy"
    else:
        _impl = _conv3d
        BACKEND = "cython"
elif _conv3d is not None:
    _impl = _conv3d
    BACKEND = "cython"
else:
    _impl = conv3d_numpy
    BACKEND = "numpy"


def available_backends():
    """Names of the kernel implementations importable in this install."""
    names = ["numpy"]
    if _conv3d is not None:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """The kernel module for `name` (default: the active backend)."""
    if name is None:
        return _impl
    if name == "numpy":
        return conv3d_numpy
    if name == "cython":
        if _conv3d is None:
            raise RuntimeError("cython kernel extension is not built")
        return _conv3d
    raise ValueError(f"unknown kernel backend {name!r}")


def conv3d_forward(x_pad, weights, bias, stride, groups):
    return _impl.conv3d_forward(x_pad, weights, bias, stride, groups)


def conv3d_backward(x_pad, weights, grad_out, stride, groups, with_bias):
    return _impl.conv3d_backward(x_pad, weights, grad_out, stride, groups, with_bias)
