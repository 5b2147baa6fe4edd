"""Forward and backward passes for every layer primitive the network uses.

Convolution semantics are cross-correlation (no kernel flip), the usual
deep-learning convention. Padding is zero-padding. All ops are pure
functions over their inputs; batchnorm_forward in train mode additionally
updates the running statistics held in the parameter state (single-writer).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, precision
from .tensor import ShapeError, Tensor, as_ndarray


@dataclass(frozen=True)
class Conv3dSpec:
    """Static description of one 3D convolution layer.

    Depthwise convolution is the special case groups == in_channels ==
    out_channels; pointwise is kernel (1,1,1) with groups == 1.
    """

    kernel: tuple
    in_channels: int
    out_channels: int
    groups: int = 1
    stride: tuple = (1, 1, 1)
    padding: tuple = (0, 0, 0)
    has_bias: bool = True

    def __post_init__(self):
        kh, kw, kd = self.kernel
        if min(kh, kw, kd) < 1:
            raise ShapeError(f"kernel extents must be positive: {self.kernel}")
        if self.in_channels < 1 or self.out_channels < 1 or self.groups < 1:
            raise ShapeError("channel and group counts must be positive")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"groups={self.groups} must divide in={self.in_channels} "
                f"and out={self.out_channels}"
            )
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ShapeError(f"bad stride/padding: {self.stride}/{self.padding}")

    @property
    def is_depthwise(self):
        return self.groups == self.in_channels == self.out_channels

    @property
    def is_pointwise(self):
        return self.kernel == (1, 1, 1) and self.groups == 1

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels // self.groups) + tuple(self.kernel)

    def out_extents(self, in_extents):
        """Output (h, w, d) from input extents; errors if any collapses."""
        outs = []
        for ext, k, s, p in zip(in_extents, self.kernel, self.stride, self.padding):
            o = (ext + 2 * p - k) // s + 1
            if o < 1:
                raise ShapeError(
                    f"non-positive output extent for input {in_extents} with "
                    f"kernel {self.kernel}, stride {self.stride}, padding {self.padding}"
                )
            outs.append(o)
        return tuple(outs)


@dataclass(frozen=True)
class BatchNormSpec:
    channels: int
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        if self.channels < 1:
            raise ShapeError("batchnorm channel count must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")


def _check_conv_input(x, w, spec):
    if x.ndim != 5:
        raise ShapeError(f"conv3d expects a rank-5 input, got {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, spec expects {spec.in_channels}"
        )
    if tuple(w.shape) != spec.weight_shape:
        raise ShapeError(
            f"weight shape {tuple(w.shape)} does not match spec {spec.weight_shape}"
        )


def _pad(x, padding):
    ph, pw, pd = padding
    if ph == pw == pd == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw), (pd, pd)))


def conv3d_forward(x, weights, bias, spec):
    """Grouped 3D cross-correlation; deterministic for fixed inputs."""
    xa = as_ndarray(x)
    wa = as_ndarray(weights)
    _check_conv_input(xa, wa, spec)
    spec.out_extents(xa.shape[2:])
    if bias is not None:
        ba = as_ndarray(bias)
        if ba.shape != (spec.out_channels,):
            raise ShapeError(f"bias shape {ba.shape} != ({spec.out_channels},)")
    else:
        ba = None
    xp = _pad(xa, spec.padding)
    out = kernels.conv3d_forward(xp, wa, ba, spec.stride, spec.groups)
    return Tensor(out)


def conv3d_backward(grad_out, x, weights, spec):
    """Analytic gradients of conv3d_forward.

    Returns (grad_input, grad_weights, grad_bias); grad_bias is None when
    the spec carries no bias.
    """
    xa = as_ndarray(x)
    wa = as_ndarray(weights)
    ga = as_ndarray(grad_out)
    _check_conv_input(xa, wa, spec)
    expect = (xa.shape[0], spec.out_channels) + spec.out_extents(xa.shape[2:])
    if tuple(ga.shape) != expect:
        raise ShapeError(f"grad_out shape {ga.shape} != forward output {expect}")
    xp = _pad(xa, spec.padding)
    gxp, gw, gb = kernels.conv3d_backward(
        xp, wa, ga, spec.stride, spec.groups, spec.has_bias
    )
    ph, pw, pd = spec.padding
    h, w, d = xa.shape[2:]
    gx = gxp[:, :, ph : ph + h, pw : pw + w, pd : pd + d]
    return Tensor(np.ascontiguousarray(gx)), Tensor(gw), None if gb is None else Tensor(gb)


def depthwise_separable_forward(x, dw_weights, dw_bias, pw_weights, pw_bias, dw_spec, pw_spec):
    """Depthwise stage followed directly by pointwise, nothing in between.

    No normalization or activation separates the two stages; that is the
    defining structural property of the modified block.
    """
    if not dw_spec.is_depthwise:
        raise ShapeError("first stage must be depthwise (groups == channels)")
    if pw_spec.kernel != (1, 1, 1):
        raise ShapeError("second stage must be pointwise (1,1,1 kernel)")
    if pw_spec.in_channels != dw_spec.out_channels:
        raise ShapeError("pointwise input channels must match depthwise output")
    mid = conv3d_forward(x, dw_weights, dw_bias, dw_spec)
    return conv3d_forward(mid, pw_weights, pw_bias, pw_spec)


def init_batchnorm_state(spec):
    dt = precision.dtype()
    return {
        "scale": np.ones(spec.channels, dtype=dt),
        "shift": np.zeros(spec.channels, dtype=dt),
        "running_mean": np.zeros(spec.channels, dtype=dt),
        "running_var": np.ones(spec.channels, dtype=dt),
    }


def batchnorm_forward(x, state, spec, mode):
    """Per-channel standardization with learned scale/shift.

    Train mode standardizes by batch statistics (biased variance) and
    updates the running stats in `state` with the spec's momentum; infer
    mode uses the running statistics only. Returns (output, cache); the
    cache feeds batchnorm_backward and is None in infer mode.
    """
    xa = as_ndarray(x)
    if xa.shape[1] != spec.channels:
        raise ShapeError(f"input has {xa.shape[1]} channels, spec {spec.channels}")
    axes = (0,) + tuple(range(2, xa.ndim))
    scale = state["scale"].reshape((1, -1) + (1,) * (xa.ndim - 2))
    shift = state["shift"].reshape(scale.shape)

    if mode == "train":
        count = xa.size // spec.channels
        if count < 2:
            raise ShapeError("train-mode batchnorm needs at least 2 values per channel")
        mean = xa.mean(axis=axes, dtype=np.float64)
        var = xa.var(axis=axes, dtype=np.float64)
        inv_std = 1.0 / np.sqrt(var + spec.epsilon)
        xhat = (xa - mean.reshape(scale.shape)) * inv_std.reshape(scale.shape)
        out = xhat * scale + shift
        m = spec.momentum
        dt = state["running_mean"].dtype
        # running variance uses the unbiased estimate, as is conventional
        unbiased = var * (count / (count - 1))
        state["running_mean"][:] = ((1 - m) * state["running_mean"] + m * mean).astype(dt)
        state["running_var"][:] = ((1 - m) * state["running_var"] + m * unbiased).astype(dt)
        cache = (xhat.astype(xa.dtype, copy=False), inv_std, count)
        return Tensor(out.astype(xa.dtype, copy=False)), cache
    if mode == "infer":
        inv_std = 1.0 / np.sqrt(state["running_var"].astype(np.float64) + spec.epsilon)
        xhat = (xa - state["running_mean"].reshape(scale.shape)) * inv_std.reshape(scale.shape)
        return Tensor((xhat * scale + shift).astype(xa.dtype, copy=False)), None
    raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")


def batchnorm_backward(grad_out, cache, state):
    """Gradients through train-mode batchnorm: (grad_x, grad_scale, grad_shift)."""
    xhat, inv_std, count = cache
    ga = as_ndarray(grad_out)
    axes = (0,) + tuple(range(2, ga.ndim))
    bshape = (1, -1) + (1,) * (ga.ndim - 2)

    gshift = ga.sum(axis=axes, dtype=np.float64)
    gscale = (ga * xhat).sum(axis=axes, dtype=np.float64)
    scale = state["scale"].astype(np.float64).reshape(bshape)
    gx = (scale * inv_std.reshape(bshape) / count) * (
        count * ga - gshift.reshape(bshape) - xhat * gscale.reshape(bshape)
    )
    dt = ga.dtype
    return (
        Tensor(gx.astype(dt, copy=False)),
        Tensor(gscale.astype(dt, copy=False)),
        Tensor(gshift.astype(dt, copy=False)),
    )


def relu_forward(x):
    xa = as_ndarray(x)
    return Tensor(np.maximum(xa, 0)), xa > 0


def relu_backward(grad_out, mask):
    return Tensor(as_ndarray(grad_out) * mask)


def global_avg_pool_forward(x):
    """Mean over the spatial and spectral axes: (n, c, h, w, d) -> (n, c)."""
    xa = as_ndarray(x)
    if xa.ndim != 5:
        raise ShapeError(f"global average pool expects rank-5 input, got {xa.shape}")
    out = xa.mean(axis=(2, 3, 4), dtype=np.float64)
    return Tensor(out.astype(xa.dtype, copy=False)), xa.shape


def global_avg_pool_backward(grad_out, in_shape):
    ga = as_ndarray(grad_out)
    n, c, h, w, d = in_shape
    g = ga / float(h * w * d)
    return Tensor(np.broadcast_to(g[:, :, None, None, None], in_shape).copy())


def fully_connected_forward(x, weights, bias):
    """Affine map: (n, in) @ (in, out) + (out,)."""
    xa = as_ndarray(x)
    wa = as_ndarray(weights)
    if xa.ndim != 2 or xa.shape[1] != wa.shape[0]:
        raise ShapeError(f"fc shapes incompatible: input {xa.shape}, weights {wa.shape}")
    out = xa.astype(np.float64) @ wa.astype(np.float64)
    if bias is not None:
        out = out + as_ndarray(bias).astype(np.float64)
    return Tensor(out.astype(xa.dtype, copy=False))


def fully_connected_backward(grad_out, x, weights, with_bias=True):
    xa = as_ndarray(x).astype(np.float64)
    wa = as_ndarray(weights).astype(np.float64)
    ga = as_ndarray(grad_out).astype(np.float64)
    gx = ga @ wa.T
    gw = xa.T @ ga
    gb = ga.sum(axis=0) if with_bias else None
    dt = as_ndarray(x).dtype
    return (
        Tensor(gx.astype(dt, copy=False)),
        Tensor(gw.astype(dt, copy=False)),
        None if gb is None else Tensor(gb.astype(dt, copy=False)),
    )


def softmax(logits):
    """Row-wise softmax with max-subtraction for stability."""
    la = as_ndarray(logits)
    if not np.isfinite(la).all():
        raise ValueError("softmax requires finite logits")
    shifted = la.astype(np.float64) - la.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
