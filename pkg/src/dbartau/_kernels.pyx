# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Cauchy sums and integrable-kernel assembly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

ctypedef double complex cplx


cdef inline double cabs2(cplx x) noexcept nogil:
    return x.real * x.real + x.imag * x.imag


cdef inline cplx cinv_pow(cplx x, int p) noexcept nogil:
    # 1 / x**p without the libcall behind complex division
    cdef double m = 1.0 / (x.real * x.real + x.imag * x.imag)
    cdef double re = x.real * m, im = -x.imag * m, tr
    cdef double rr = 1.0, ri = 0.0
    cdef int i
    for i in range(p):
        tr = rr * re - ri * im
        ri = rr * im + ri * re
        rr = tr
    return rr + 1j * ri


def cauchy_matrix(targets, sources, weights, int power=1, bint skip_self=False):
    cdef const cplx[::1] t = np.ascontiguousarray(targets, dtype=complex)
    cdef const cplx[::1] s = np.ascontiguousarray(sources, dtype=complex)
    cdef const cplx[::1] w = np.ascontiguousarray(weights, dtype=complex)
    cdef Py_ssize_t nt = t.shape[0], ns = s.shape[0], j, k
    out = np.empty((nt, ns), dtype=complex)
    cdef cplx[:, ::1] o = out
    cdef cplx d
    with nogil:
        for j in range(nt):
            for k in range(ns):
                d = s[k] - t[j]
                if skip_self and d.real == 0.0 and d.imag == 0.0:
                    o[j, k] = 0.0
                else:
                    o[j, k] = w[k] * cinv_pow(d, power)
    return out


def cauchy_sum(targets, sources, coeffs, int power=1):
    cdef const cplx[::1] t = np.ascontiguousarray(targets, dtype=complex)
    cdef const cplx[::1] s = np.ascontiguousarray(sources, dtype=complex)
    c_arr = np.ascontiguousarray(np.asarray(coeffs, dtype=complex).reshape(len(sources), -1))
    cdef const cplx[:, ::1] c = c_arr
    cdef Py_ssize_t nt = t.shape[0], ns = s.shape[0], m = c.shape[1], j, k, q
    out = np.zeros((nt, m), dtype=complex)
    cdef cplx[:, ::1] o = out
    cdef cplx inv
    with nogil:
        for j in range(nt):
            for k in range(ns):
                inv = cinv_pow(s[k] - t[j], power)
                for q in range(m):
                    o[j, q] = o[j, q] + c[k, q] * inv
    return out


def integrable_kernel_matrix(z, F, G, DF, sqrt_w, double split):
    cdef const cplx[::1] zz = np.ascontiguousarray(z, dtype=complex)
    cdef const cplx[:, :, ::1] f = np.ascontiguousarray(F, dtype=complex)
    cdef const cplx[:, :, ::1] g = np.ascontiguousarray(G, dtype=complex)
    cdef const cplx[:, :, ::1] df = np.ascontiguousarray(DF, dtype=complex)
    cdef const double[::1] sw = np.ascontiguousarray(sqrt_w, dtype=float)
    cdef Py_ssize_t N = f.shape[0], r = f.shape[1], n = f.shape[2]
    cdef Py_ssize_t k, l, a, b, q
    out = np.empty((N * n, N * n), dtype=complex)
    cdef cplx[:, ::1] o = out
    cdef cplx d, acc, inv
    cdef double s2 = split * split, scale
    cdef bint near
    with nogil:
        for k in range(N):
            for l in range(N):
                d = zz[k] - zz[l]
                near = cabs2(d) < s2
                scale = sw[k] * sw[l]
                if not near:
                    inv = scale * cinv_pow(d, 1)
                for a in range(n):
                    for b in range(n):
                        acc = 0.0
                        if near:
                            for q in range(r):
                                acc = acc + df[k, q, a] * g[l, q, b]
                            o[k * n + a, l * n + b] = acc * scale
                        else:
                            for q in range(r):
                                acc = acc + f[k, q, a] * g[l, q, b]
                            o[k * n + a, l * n + b] = acc * inv
    return out
