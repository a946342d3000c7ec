"""Numpy implementation of the coordinate kernels.

Every expression mirrors ``_ckernels.pyx`` operation for operation so the two
backends agree bit for bit.
"""

import numpy as np


def l1_scalar(alpha, x_prev, d, e, lo, hi):
    half = 2.0 * alpha
    u = x_prev - d / half
    thr = e / half
    if u > thr:
        v = u - thr
    elif u < -thr:
        v = u + thr
    else:
        v = 0.0
    if v < lo:
        v = lo
    if v > hi:
        v = hi
    return v


def soft_threshold_box(x_prev, d, e, lo, hi, alpha, out=None, num_threads=1):
    half = 2.0 * alpha
    u = x_prev - d / half
    thr = e / half
    v = np.where(u > thr, u - thr, np.where(u < -thr, u + thr, 0.0))
    v = np.where(v < lo, lo, v)
    v = np.where(v > hi, hi, v)
    if out is None:
        return v
    out[...] = v
    return out
