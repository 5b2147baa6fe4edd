"""Vectorized numpy fallback for the 3D convolution kernels.

Used when the compiled extension is unavailable (or forced off via
LITEDEPTHWISE_KERNELS=numpy). The strategy is an offset loop: for each
kernel tap (i, j, k) a strided slice of the padded input is contracted
against the matching weight plane, so the Python-level loop count is
kh*kw*kd (times the group count) instead of the full six-deep nest.

All accumulation happens in float64 even when the engine runs single
precision; spectral reductions of depth 97-200 lose too much precision in
float32 otherwise.
"""

import numpy as np


def _out_extents(x_pad, weights, stride):
    n, cin, hp, wp, dp = x_pad.shape
    cout, cgin, kh, kw, kd = weights.shape
    sh, sw, sd = stride
    return (
        (hp - kh) // sh + 1,
        (wp - kw) // sw + 1,
        (dp - kd) // sd + 1,
    )


def conv3d_forward(x_pad, weights, bias, stride, groups):
    """Grouped cross-correlation over a pre-padded input.

    x_pad: (n, cin, hp, wp, dp); weights: (cout, cin/groups, kh, kw, kd);
    bias: (cout,) or None. Returns (n, cout, ho, wo, do) in x_pad's dtype.
    """
    n, cin, hp, wp, dp = x_pad.shape
    cout, cgin, kh, kw, kd = weights.shape
    sh, sw, sd = stride
    ho, wo, do = _out_extents(x_pad, weights, stride)
    cgout = cout // groups

    x64 = x_pad.astype(np.float64, copy=False)
    w64 = weights.astype(np.float64, copy=False)
    out = np.zeros((n, cout, ho, wo, do), dtype=np.float64)

    if cgin == 1 and cgout == 1:
        # Depthwise: the group structure is diagonal, one multiply per tap.
        for i in range(kh):
            for j in range(kw):
                for k in range(kd):
                    xs = x64[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd]
                    out += xs * w64[:, 0, i, j, k][None, :, None, None, None]
    else:
        for g in range(groups):
            xg = x64[:, g * cgin : (g + 1) * cgin]
            wg = w64[g * cgout : (g + 1) * cgout]
            og = out[:, g * cgout : (g + 1) * cgout]
            for i in range(kh):
                for j in range(kw):
                    for k in range(kd):
                        xs = xg[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd]
                        og += np.einsum(
                            "nchwd,oc->nohwd", xs, wg[:, :, i, j, k], optimize=True
                        )

    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None, None]
    return out.astype(x_pad.dtype, copy=False)


def conv3d_backward(x_pad, weights, grad_out, stride, groups, with_bias):
    """Gradients of conv3d_forward w.r.t. padded input, weights and bias.

    Returns (grad_x_pad, grad_weights, grad_bias); grad_bias is None when
    with_bias is false. Padding removal is the caller's job.
    """
    n, cin, hp, wp, dp = x_pad.shape
    cout, cgin, kh, kw, kd = weights.shape
    sh, sw, sd = stride
    ho, wo, do = grad_out.shape[2:]
    cgout = cout // groups

    x64 = x_pad.astype(np.float64, copy=False)
    w64 = weights.astype(np.float64, copy=False)
    g64 = grad_out.astype(np.float64, copy=False)

    gx = np.zeros_like(x64)
    gw = np.zeros(weights.shape, dtype=np.float64)
    gb = g64.sum(axis=(0, 2, 3, 4)) if with_bias else None

    if cgin == 1 and cgout == 1:
        for i in range(kh):
            for j in range(kw):
                for k in range(kd):
                    xs = x64[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd]
                    gw[:, 0, i, j, k] = (g64 * xs).sum(axis=(0, 2, 3, 4))
                    gx[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd] += (
                        g64 * w64[:, 0, i, j, k][None, :, None, None, None]
                    )
    else:
        for g in range(groups):
            xg = x64[:, g * cgin : (g + 1) * cgin]
            wg = w64[g * cgout : (g + 1) * cgout]
            gg = g64[:, g * cgout : (g + 1) * cgout]
            gxg = gx[:, g * cgin : (g + 1) * cgin]
            for i in range(kh):
                for j in range(kw):
                    for k in range(kd):
                        xs = xg[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd]
                        gw[g * cgout : (g + 1) * cgout, :, i, j, k] = np.einsum(
                            "nohwd,nchwd->oc", gg, xs, optimize=True
                        )
                        gxg[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw, k : k + do * sd : sd] += np.einsum(
                            "nohwd,oc->nchwd", gg, wg[:, :, i, j, k], optimize=True
                        )

    dt = x_pad.dtype
    return (
        gx.astype(dt, copy=False),
        gw.astype(dt, copy=False),
        None if gb is None else gb.astype(dt, copy=False),
    )
