# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

from libc.math cimport M_PI

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _taming(double r, double N) nogil:
    cdef double s
    if r <= N:
        return 0.0
    if r >= N + 1.0:
        return r - N
    s = r - N
    return s * s * s * (6.0 + s * (-8.0 + 3.0 * s))


def taming(r, double N):
    import numpy as np
    arr = np.asarray(r, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] a = arr.reshape(-1)
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        o[i] = _taming(a[i], N)
    return out


def tamed_flux(const double[:, :, :, ::1] u, double N, double[:, :, :, ::1] out):
    cdef Py_ssize_t n0 = u.shape[1], n1 = u.shape[2], n2 = u.shape[3]
    cdef Py_ssize_t a, b, c
    cdef double x, y, z, g
    with nogil:
        for a in range(n0):
            for b in range(n1):
                for c in range(n2):
                    x = u[0, a, b, c]
                    y = u[1, a, b, c]
                    z = u[2, a, b, c]
                    out[0, a, b, c] = x * x
                    out[1, a, b, c] = x * y
                    out[2, a, b, c] = x * z
                    out[3, a, b, c] = y * y
                    out[4, a, b, c] = y * z
                    out[5, a, b, c] = z * z
                    g = _taming(x * x + y * y + z * z, N)
                    out[6, a, b, c] = g * x
                    out[7, a, b, c] = g * y
                    out[8, a, b, c] = g * z
    return out


def advect(const double[:, :, :, ::1] u, const double[:, :, :, ::1] grad,
           double[:, :, :, ::1] out):
    cdef Py_ssize_t n0 = u.shape[1], n1 = u.shape[2], n2 = u.shape[3]
    cdef Py_ssize_t i, a, b, c
    with nogil:
        for i in range(3):
            for a in range(n0):
                for b in range(n1):
                    for c in range(n2):
                        out[i, a, b, c] = (u[0, a, b, c] * grad[3 * i, a, b, c]
                                           + u[1, a, b, c] * grad[3 * i + 1, a, b, c]
                                           + u[2, a, b, c] * grad[3 * i + 2, a, b, c])
    return out


cdef inline void _project(double complex v0, double complex v1, double complex v2,
                          double q1, double q2, double q3,
                          double complex* r0, double complex* r1,
                          double complex* r2) noexcept nogil:
    cdef double ksq = q1 * q1 + q2 * q2 + q3 * q3
    cdef double complex dot
    if ksq == 0.0:
        r0[0] = 0.0
        r1[0] = 0.0
        r2[0] = 0.0
        return
    dot = (q1 * v0 + q2 * v1 + q3 * v2) / ksq
    r0[0] = v0 - q1 * dot
    r1[0] = v1 - q2 * dot
    r2[0] = v2 - q3 * dot


def leray(const double complex[:, :, :, ::1] c, const double[::1] k1,
          const double[::1] k2, const double[::1] k3,
          double complex[:, :, :, ::1] out):
    cdef Py_ssize_t n0 = c.shape[1], n1 = c.shape[2], n2 = c.shape[3]
    cdef Py_ssize_t a, b, d
    cdef double complex r0, r1, r2
    with nogil:
        for a in range(n0):
            for b in range(n1):
                for d in range(n2):
                    _project(c[0, a, b, d], c[1, a, b, d], c[2, a, b, d],
                             k1[a], k2[b], k3[d], &r0, &r1, &r2)
                    out[0, a, b, d] = r0
                    out[1, a, b, d] = r1
                    out[2, a, b, d] = r2
    return out


def assemble_drift(const double complex[:, :, :, ::1] fh, const double[::1] k1,
                   const double[::1] k2, const double[::1] k3,
                   const double[:, :, ::1] mask, double complex[:, :, :, ::1] out):
    cdef Py_ssize_t n0 = fh.shape[1], n1 = fh.shape[2], n2 = fh.shape[3]
    cdef Py_ssize_t a, b, d
    cdef double q1, q2, q3, m
    cdef double complex t0, t1, t2, r0, r1, r2
    cdef double complex ik = 1j * TWO_PI
    with nogil:
        for a in range(n0):
            q1 = k1[a]
            for b in range(n1):
                q2 = k2[b]
                for d in range(n2):
                    m = mask[a, b, d]
                    if m == 0.0:
                        out[0, a, b, d] = 0.0
                        out[1, a, b, d] = 0.0
                        out[2, a, b, d] = 0.0
                        continue
                    q3 = k3[d]
                    t0 = ik * (q1 * fh[0, a, b, d] + q2 * fh[1, a, b, d] + q3 * fh[2, a, b, d]) + fh[6, a, b, d]
                    t1 = ik * (q1 * fh[1, a, b, d] + q2 * fh[3, a, b, d] + q3 * fh[4, a, b, d]) + fh[7, a, b, d]
                    t2 = ik * (q1 * fh[2, a, b, d] + q2 * fh[4, a, b, d] + q3 * fh[5, a, b, d]) + fh[8, a, b, d]
                    _project(m * t0, m * t1, m * t2, q1, q2, q3, &r0, &r1, &r2)
                    out[0, a, b, d] = -r0
                    out[1, a, b, d] = -r1
                    out[2, a, b, d] = -r2
    return out
