# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementation of the batched fixed-point forward kernel.

Semantics match _fxpcore_py exactly; only the loop execution differs.
"""

import numpy as np
cimport numpy as cnp
cimport cython

cnp.import_array()

IMPL = "cython"
MAX_WIDTH = 32


cdef inline cnp.int64_t _wrap1(cnp.int64_t a, cnp.int64_t mask,
                               cnp.int64_t sign) nogil:
    cdef cnp.int64_t u = a & mask
    return (u ^ sign) - sign


def batch_matvec(cnp.int64_t[:, :] x_raw, cnp.int64_t[:, :] w_raw,
                 cnp.int64_t[:] b_raw, int width, int frac_bits,
                 bint nearest):
    """One quantized affine layer over a batch; see the numpy twin."""
    cdef Py_ssize_t n = x_raw.shape[0]
    cdef Py_ssize_t fan_in = x_raw.shape[1]
    cdef Py_ssize_t size = w_raw.shape[0]
    out_arr = np.empty((n, size), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    cdef cnp.int64_t mask = (<cnp.int64_t>1 << width) - 1
    cdef cnp.int64_t sign = <cnp.int64_t>1 << (width - 1)
    cdef cnp.int64_t fmask = 0, half = 0
    if frac_bits > 0:
        fmask = (<cnp.int64_t>1 << frac_bits) - 1
        half = <cnp.int64_t>1 << (frac_bits - 1)
    cdef Py_ssize_t i, j, k
    cdef cnp.int64_t acc, p, q, rem
    with nogil:
        for i in range(n):
            for j in range(size):
                acc = 0
                for k in range(fan_in):
                    p = x_raw[i, k] * w_raw[j, k]
                    if frac_bits == 0:
                        q = p
                    else:
                        q = p >> frac_bits
                        if nearest:
                            rem = p & fmask
                            if rem > half or (rem == half and p < 0):
                                q += 1
                    acc += _wrap1(q, mask, sign)
                acc += b_raw[j]
                out[i, j] = _wrap1(acc, mask, sign)
    return out_arr


def batch_relu(cnp.int64_t[:, :] u_raw):
    cdef Py_ssize_t n = u_raw.shape[0], m = u_raw.shape[1]
    out_arr = np.empty((n, m), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = u_raw[i, j] if u_raw[i, j] > 0 else 0
    return out_arr


def batch_table(cnp.int64_t[:, :] u_raw, cnp.int64_t[:] thresholds,
                cnp.int64_t[:] outputs):
    cdef Py_ssize_t n = u_raw.shape[0], m = u_raw.shape[1]
    cdef Py_ssize_t t = thresholds.shape[0]
    out_arr = np.empty((n, m), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    cdef Py_ssize_t i, j
    cdef Py_ssize_t lo, hi, mid
    cdef cnp.int64_t u
    with nogil:
        for i in range(n):
            for j in range(m):
                u = u_raw[i, j]
                lo = 0
                hi = t
                while lo < hi:  # bisect_right over thresholds
                    mid = (lo + hi) // 2
                    if u < thresholds[mid]:
                        hi = mid
                    else:
                        lo = mid + 1
                out[i, j] = outputs[lo]
    return out_arr
