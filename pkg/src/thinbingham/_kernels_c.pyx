# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython versions of the per-cell shrinkage kernels.

Semantics match thinbingham._kernels_py exactly; the fused loops avoid the
temporaries of the numpy path in the solver's inner iteration.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def group_magnitude(double[:, ::1] s):
    cdef Py_ssize_t ncomp = s.shape[0]
    cdef Py_ssize_t nloc = s.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(nloc)
    cdef double[::1] o = out
    cdef Py_ssize_t i, c
    cdef double acc
    for i in range(nloc):
        acc = 0.0
        for c in range(ncomp):
            acc += s[c, i] * s[c, i]
        o[i] = sqrt(acc)
    return out


def shrink(double[:, ::1] s, double threshold, double scale):
    cdef Py_ssize_t ncomp = s.shape[0]
    cdef Py_ssize_t nloc = s.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((ncomp, nloc))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, c
    cdef double acc, mag, factor
    cdef double inv_scale = 1.0 / scale
    if threshold == 0.0:
        for i in range(nloc):
            for c in range(ncomp):
                o[c, i] = s[c, i] * inv_scale
        return out
    for i in range(nloc):
        acc = 0.0
        for c in range(ncomp):
            acc += s[c, i] * s[c, i]
        mag = sqrt(acc)
        if mag > threshold:
            factor = (1.0 - threshold / mag) * inv_scale
            for c in range(ncomp):
                o[c, i] = factor * s[c, i]
        else:
            for c in range(ncomp):
                o[c, i] = 0.0
    return out


def shrink_smoothed(double[:, ::1] s, double threshold, double scale,
                    double delta):
    cdef Py_ssize_t ncomp = s.shape[0]
    cdef Py_ssize_t nloc = s.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((ncomp, nloc))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, c
    cdef double acc, mag, factor
    cdef double inv_scale = 1.0 / scale
    for i in range(nloc):
        acc = delta * delta
        for c in range(ncomp):
            acc += s[c, i] * s[c, i]
        mag = sqrt(acc)
        factor = 1.0 - threshold / mag
        if factor < 0.0:
            factor = 0.0
        factor *= inv_scale
        for c in range(ncomp):
            o[c, i] = factor * s[c, i]
    return out
