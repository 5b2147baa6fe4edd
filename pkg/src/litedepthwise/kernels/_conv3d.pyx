# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled 3D convolution kernels (forward, weight/input/bias gradients).

The forward accumulation order is fixed: per output element, channels within
the group first, then kh, kw, kd, in a double accumulator, bias added last.
That order matches the nested-loop reference convolution bit for bit (the
build disables FP contraction), which is what the kernel-equivalence suite
asserts. Single-threaded by design; determinism beats parallel speedup here.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


def conv3d_forward(floating[:, :, :, :, ::1] x, floating[:, :, :, :, ::1] w,
                   bias, stride, int groups):
    """Grouped cross-correlation over a pre-padded input.

    x: (n, cin, hp, wp, dp), w: (cout, cin/groups, kh, kw, kd),
    bias: (cout,) or None. Output dtype matches the input dtype.
    """
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t hp = x.shape[2], wp = x.shape[3], dp = x.shape[4]
    cdef Py_ssize_t cout = w.shape[0], cgin = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3], kd = w.shape[4]
    cdef Py_ssize_t sh = stride[0], sw = stride[1], sd = stride[2]
    cdef Py_ssize_t ho = (hp - kh) // sh + 1
    cdef Py_ssize_t wo = (wp - kw) // sw + 1
    cdef Py_ssize_t do = (dp - kd) // sd + 1
    cdef Py_ssize_t cgout = cout // groups

    cdef bint has_bias = bias is not None
    cdef double[::1] bv
    if has_bias:
        bv = np.ascontiguousarray(bias, dtype=np.float64)
    else:
        bv = np.zeros(1, dtype=np.float64)

    if floating is float:
        out_np = np.empty((n, cout, ho, wo, do), dtype=np.float32)
    else:
        out_np = np.empty((n, cout, ho, wo, do), dtype=np.float64)
    cdef floating[:, :, :, :, ::1] out = out_np

    cdef Py_ssize_t b, o, g, cb, i, j, k, ci, oh, ow, od, hb, wb, db
    cdef double acc

    with nogil:
        for b in range(n):
            for o in range(cout):
                g = o // cgout
                cb = g * cgin
                for oh in range(ho):
                    hb = oh * sh
                    for ow in range(wo):
                        wb = ow * sw
                        for od in range(do):
                            db = od * sd
                            acc = 0.0
                            for ci in range(cgin):
                                for i in range(kh):
                                    for j in range(kw):
                                        for k in range(kd):
                                            acc += (<double> x[b, cb + ci, hb + i, wb + j, db + k]
                                                    * <double> w[o, ci, i, j, k])
                            if has_bias:
                                acc = acc + bv[o]
                            out[b, o, oh, ow, od] = <floating> acc
    return out_np


def conv3d_backward(floating[:, :, :, :, ::1] x, floating[:, :, :, :, ::1] w,
                    floating[:, :, :, :, ::1] gout, stride, int groups,
                    bint with_bias):
    """Gradients w.r.t. padded input, weights and (optionally) bias."""
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t hp = x.shape[2], wp = x.shape[3], dp = x.shape[4]
    cdef Py_ssize_t cout = w.shape[0], cgin = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3], kd = w.shape[4]
    cdef Py_ssize_t sh = stride[0], sw = stride[1], sd = stride[2]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3], do = gout.shape[4]
    cdef Py_ssize_t cgout = cout // groups

    # Double buffers keep the long reductions exact even in single precision.
    gx_np = np.zeros((n, cin, hp, wp, dp), dtype=np.float64)
    gw_np = np.zeros((cout, cgin, kh, kw, kd), dtype=np.float64)
    gb_np = np.zeros(cout, dtype=np.float64)
    cdef double[:, :, :, :, ::1] gx = gx_np
    cdef double[:, :, :, :, ::1] gw = gw_np
    cdef double[::1] gb = gb_np

    cdef Py_ssize_t b, o, g, cb, i, j, k, ci, oh, ow, od, hb, wb, db
    cdef double go, acc

    with nogil:
        for o in range(cout):
            g = o // cgout
            cb = g * cgin
            # weight and bias gradients: reduce over batch and output window
            for ci in range(cgin):
                for i in range(kh):
                    for j in range(kw):
                        for k in range(kd):
                            acc = 0.0
                            for b in range(n):
                                for oh in range(ho):
                                    for ow in range(wo):
                                        for od in range(do):
                                            acc += (<double> gout[b, o, oh, ow, od]
                                                    * <double> x[b, cb + ci, oh * sh + i, ow * sw + j, od * sd + k])
                            gw[o, ci, i, j, k] = acc
            if with_bias:
                acc = 0.0
                for b in range(n):
                    for oh in range(ho):
                        for ow in range(wo):
                            for od in range(do):
                                acc += <double> gout[b, o, oh, ow, od]
                gb[o] = acc

        # input gradient: scatter each output grad through the kernel taps
        for b in range(n):
            for o in range(cout):
                g = o // cgout
                cb = g * cgin
                for oh in range(ho):
                    hb = oh * sh
                    for ow in range(wo):
                        wb = ow * sw
                        for od in range(do):
                            db = od * sd
                            go = <double> gout[b, o, oh, ow, od]
                            for ci in range(cgin):
                                for i in range(kh):
                                    for j in range(kw):
                                        for k in range(kd):
                                            gx[b, cb + ci, hb + i, wb + j, db + k] += go * <double> w[o, ci, i, j, k]

    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    gb_out = gb_np.astype(dt) if with_bias else None
    return gx_np.astype(dt, copy=False), gw_np.astype(dt, copy=False), gb_out
