"""Lightweight 3D depthwise-separable CNN engine for hyperspectral imagery.

A from-scratch numerical stack: tensors, analytic forward/backward layer
primitives (with a compiled convolution core and a numpy fallback), the
branch-and-concatenate network topology, selectable cross-entropy/balanced/
focal losses, an exact parameter/FLOP cost model, scene ingestion with
stratified splitting, a training loop with OA/AA/kappa evaluation, and a
CLI tying it together.
"""

__version__ = "0.1.0"

from .precision import get_precision, set_precision, use_precision
from .tensor import Tensor
