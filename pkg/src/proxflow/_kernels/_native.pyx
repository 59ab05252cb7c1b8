# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the fallback kernel: per-row Durand-Kerner in C.

Same contract as ``_fallback.max_root_modulus_batch``: rows hold the
ascending non-leading coefficients [q_0, ..., q_{d-1}] of a real monic
polynomial; the result is the max root modulus per row.
"""

import numpy as np

from libc.math cimport cos, fabs, sin, sqrt

DEF MAX_DEGREE = 16
DEF MAX_ITER = 120
DEF TOL = 1e-13


cdef inline double _cabs2(double re, double im) nogil:
    return re * re + im * im


cdef double _row_radius(const double* q, int d) nogil:
    cdef double zr[MAX_DEGREE]
    cdef double zi[MAX_DEGREE]
    cdef double pr, pi, tr, ti, dr, di, wr, wi, den
    cdef double qmax, r0, ang, step, zmax, best
    cdef int i, j, k, it

    if d == 1:
        return fabs(q[0])
    if d == 2:
        # z^2 + q1 z + q0
        den = q[1] * q[1] - 4.0 * q[0]
        if den < 0.0:
            return sqrt(q[0])
        return 0.5 * (fabs(q[1]) + sqrt(den))

    qmax = 0.0
    for i in range(d):
        if fabs(q[i]) > qmax:
            qmax = fabs(q[i])
    if qmax == 0.0:
        return 0.0
    r0 = 1.0 + qmax
    for j in range(d):
        ang = 6.283185307179586 * j / d + 0.4
        zr[j] = r0 * cos(ang)
        zi[j] = r0 * sin(ang)

    for it in range(MAX_ITER):
        step = 0.0
        zmax = 0.0
        for j in range(d):
            # Horner evaluation of p at z_j
            pr = 1.0
            pi = 0.0
            for i in range(d - 1, -1, -1):
                tr = pr * zr[j] - pi * zi[j] + q[i]
                ti = pr * zi[j] + pi * zr[j]
                pr = tr
                pi = ti
            # denominator: prod_{k != j} (z_j - z_k)
            dr = 1.0
            di = 0.0
            for k in range(d):
                if k == j:
                    continue
                tr = dr * (zr[j] - zr[k]) - di * (zi[j] - zi[k])
                ti = dr * (zi[j] - zi[k]) + di * (zr[j] - zr[k])
                dr = tr
                di = ti
            den = _cabs2(dr, di)
            if den == 0.0:
                den = 1e-300
                dr = 1e-150
                di = 0.0
            wr = (pr * dr + pi * di) / den
            wi = (pi * dr - pr * di) / den
            zr[j] -= wr
            zi[j] -= wi
            if _cabs2(wr, wi) > step:
                step = _cabs2(wr, wi)
            if _cabs2(zr[j], zi[j]) > zmax:
                zmax = _cabs2(zr[j], zi[j])
        if sqrt(step) <= TOL * (1.0 + sqrt(zmax)):
            break

    best = 0.0
    for j in range(d):
        den = _cabs2(zr[j], zi[j])
        if den > best:
            best = den
    return sqrt(best)


def max_root_modulus_batch(double[:, ::1] coeffs):
    cdef Py_ssize_t n = coeffs.shape[0]
    cdef int d = <int> coeffs.shape[1]
    if d < 1 or d > MAX_DEGREE:
        raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {d}")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r
    with nogil:
        for r in range(n):
            out[r] = _row_radius(&coeffs[r, 0], d)
    return out_arr
