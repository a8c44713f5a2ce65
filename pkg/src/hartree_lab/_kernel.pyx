# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled angular Riesz kernel; same quadrature as _kernel_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, M_PI, fmin

cnp.import_array()

_X64, _W64 = np.polynomial.legendre.leggauss(64)
_X16, _W16 = np.polynomial.legendre.leggauss(16)

cdef double SPLIT_GAP = 0.3
cdef int MAX_PANELS = 48


cdef inline double _f(double rho, double t, int N) nogil:
    cdef double gap = 1.0 - rho
    cdef double sh = sin(0.5 * t)
    cdef double st = 2.0 * sh * cos(0.5 * t)
    cdef double den = gap * gap + 4.0 * rho * sh * sh
    cdef double num = 1.0
    cdef int k
    for k in range(N - 2):
        num *= st
    return num / (den * den)


cdef double _profile(double rho, int N, double[::1] s2tab, double[::1] wtab,
                     double[::1] x16, double[::1] w16) nogil:
    cdef double gap = 1.0 - rho
    cdef double tot = 0.0, a, b, half
    cdef int k, p
    cdef double den
    if gap > SPLIT_GAP or gap < 1e-14:
        # fixed angles: sin^2(t/2) and weighted sin^{N-2}(t) are tabulated
        for k in range(64):
            den = gap * gap + 4.0 * rho * s2tab[k]
            tot += wtab[k] / (den * den)
        return tot
    a = 0.0
    b = gap
    for p in range(MAX_PANELS):
        if a >= M_PI:
            break
        b = fmin(b, M_PI)
        half = 0.5 * (b - a)
        for k in range(16):
            tot += half * w16[k] * _f(rho, a + half * (x16[k] + 1.0), N)
        a = b
        b = 2.0 * b
    return tot


def _tables(int N):
    t = 0.5 * np.pi * (_X64 + 1.0)
    return (np.ascontiguousarray(np.sin(0.5 * t) ** 2),
            np.ascontiguousarray(0.5 * np.pi * _W64 * np.sin(t) ** (N - 2)))


def angular_profile_raw(rho, int N):
    cdef double[::1] rr = np.ascontiguousarray(np.atleast_1d(rho), dtype=np.float64)
    cdef Py_ssize_t n = rr.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    s2, ws = _tables(N)
    cdef double[::1] s2tab = s2, wtab = ws, x16 = _X16, w16 = _W16
    with nogil:
        for i in range(n):
            o[i] = _profile(rr[i], N, s2tab, wtab, x16, w16)
    return out


def pair_matrix_raw(r, s, int N):
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef Py_ssize_t n = rv.shape[0], m = sv.shape[0], i, j
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    s2, ws = _tables(N)
    cdef double[::1] s2tab = s2, wtab = ws, x16 = _X16, w16 = _W16
    cdef double big, small
    with nogil:
        for i in range(n):
            for j in range(m):
                if rv[i] >= sv[j]:
                    big = rv[i]
                    small = sv[j]
                else:
                    big = sv[j]
                    small = rv[i]
                o[i, j] = _profile(small / big, N, s2tab, wtab, x16, w16) / (big * big * big * big)
    return out
