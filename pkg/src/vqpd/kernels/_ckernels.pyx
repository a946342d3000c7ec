# cython: language_level=3
"""Compiled per-coordinate kernels.

Each coordinate is an independent scalar problem, so the loop can be split
across threads with no reduction and no dependence on the schedule.
"""

from cython.parallel cimport prange

import numpy as np


cdef inline double _l1_scalar(double alpha, double x_prev, double d, double e,
                              double lo, double hi) noexcept nogil:
    cdef double half = 2.0 * alpha
    cdef double u = x_prev - d / half
    cdef double thr = e / half
    cdef double v
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


cpdef double l1_scalar(double alpha, double x_prev, double d, double e,
                       double lo, double hi):
    return _l1_scalar(alpha, x_prev, d, e, lo, hi)


def soft_threshold_box(const double[::1] x_prev, const double[::1] d,
                       const double[::1] e, const double[::1] lo,
                       const double[::1] hi, double alpha,
                       double[::1] out=None, int num_threads=1):
    cdef Py_ssize_t n = x_prev.shape[0]
    cdef Py_ssize_t i
    if d.shape[0] != n or e.shape[0] != n or lo.shape[0] != n or hi.shape[0] != n:
        raise ValueError("kernel inputs must share one length")
    if out is None:
        out = np.empty(n)
    elif out.shape[0] != n:
        raise ValueError("out has the wrong length")
    if num_threads > 1:
        for i in prange(n, nogil=True, schedule="static", num_threads=num_threads):
            out[i] = _l1_scalar(alpha, x_prev[i], d[i], e[i], lo[i], hi[i])
    else:
        with nogil:
            for i in range(n):
                out[i] = _l1_scalar(alpha, x_prev[i], d[i], e[i], lo[i], hi[i])
    return np.asarray(out)
