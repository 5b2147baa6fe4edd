"""Engine-wide floating point precision switch.

Single precision is the default for speed; gradient-check suites switch to
double because central finite differences with step 1e-5 are meaningless in
float32. Convolution kernels always accumulate in double regardless of the
engine dtype.
"""

from contextlib import contextmanager

import numpy as np

_DTYPES = {"single": np.float32, "double": np.float64}

_current = "single"


def set_precision(name):
    """Set the engine dtype: "single" (float32) or "double" (float64)."""
    global _current
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}, expected 'single' or 'double'")
    _current = name


def get_precision():
    return _current


def dtype():
    """The numpy dtype all newly constructed tensors use."""
    return _DTYPES[_current]


@contextmanager
def use_precision(name):
    """Temporarily switch precision (used by the gradient-check suites)."""
    previous = _current
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)
