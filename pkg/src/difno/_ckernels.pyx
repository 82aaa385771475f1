# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled activation kernels.

Same contract as ``_kernels_np``: fused evaluation of a GELU-like
sigma(x) = x * Phi(x) with first and second derivatives in one pass over
the array.  Kept deliberately small; everything else in the package is
FFT/BLAS bound and stays in numpy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, tanh

cnp.import_array()

BACKEND = "cython"

cdef double INV_SQRT_2PI = 0.3989422804014326779
cdef double INV_SQRT_2 = 0.7071067811865475244


cdef inline double _logistic(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        e = exp(-x)
        return 1.0 / (1.0 + e)
    e = exp(x)
    return e / (1.0 + e)


def sigma_eval(int kind, object x, double a1, double a2, int order=1):
    """Evaluate sigma(x) and derivatives up to ``order`` (0, 1 or 2)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = \
        np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xf.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] val = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d1 = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d2 = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double xi, phi, dens, s, sp, g, t, sech2, gp, gpp, phi1, phi2

    if kind == 0:
        with nogil:
            for i in range(n):
                xi = xf[i]
                phi = 0.5 * (1.0 + erf(xi * INV_SQRT_2))
                dens = INV_SQRT_2PI * exp(-0.5 * xi * xi)
                val[i] = xi * phi
                d1[i] = phi + xi * dens
                d2[i] = (2.0 - xi * xi) * dens
    elif kind == 1:
        with nogil:
            for i in range(n):
                xi = xf[i]
                s = _logistic(xi)
                sp = s * (1.0 - s)
                val[i] = xi * s
                d1[i] = s + xi * sp
                d2[i] = 2.0 * sp + xi * sp * (1.0 - 2.0 * s)
    elif kind == 2:
        with nogil:
            for i in range(n):
                xi = xf[i]
                g = a1 * (xi + a2 * xi * xi * xi)
                t = tanh(g)
                phi = 0.5 * (1.0 + t)
                sech2 = 1.0 - t * t
                gp = a1 * (1.0 + 3.0 * a2 * xi * xi)
                gpp = 6.0 * a1 * a2 * xi
                phi1 = 0.5 * sech2 * gp
                phi2 = 0.5 * sech2 * (gpp - 2.0 * t * gp * gp)
                val[i] = xi * phi
                d1[i] = phi + xi * phi1
                d2[i] = 2.0 * phi1 + xi * phi2
    else:
        raise ValueError(f"unknown sigmoid kind {kind}")

    shape = np.shape(x)
    if order == 0:
        return (val.reshape(shape),)
    if order == 1:
        return val.reshape(shape), d1.reshape(shape)
    return val.reshape(shape), d1.reshape(shape), d2.reshape(shape)
