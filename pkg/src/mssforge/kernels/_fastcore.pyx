# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-line isotonic projection and fused
cell-centered energy/gradient assembly for maps into R^2."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def isotonic_lines(cnp.ndarray[cnp.float64_t, ndim=2] lines):
    """Row-wise pool-adjacent-violators projection (nondecreasing)."""
    cdef Py_ssize_t nb = lines.shape[0]
    cdef Py_ssize_t n = lines.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nb, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wts = np.empty(n)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] lens = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t b, i, top, k, pos, ln
    cdef double v, w, tw
    for b in range(nb):
        top = 0
        for i in range(n):
            v = lines[b, i]
            w = 1.0
            ln = 1
            while top > 0 and vals[top - 1] > v:
                top -= 1
                tw = wts[top] + w
                v = (wts[top] * vals[top] + w * v) / tw
                w = tw
                ln += lens[top]
            vals[top] = v
            wts[top] = w
            lens[top] = ln
            top += 1
        pos = 0
        for k in range(top):
            for i in range(lens[k]):
                out[b, pos + i] = vals[k]
            pos += lens[k]
    return out


def isotonic_interior(cnp.ndarray[cnp.float64_t, ndim=2] lines):
    """Projection with fixed first/last entries: pool interior, then clip."""
    cdef Py_ssize_t nb = lines.shape[0]
    cdef Py_ssize_t n = lines.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = lines.copy()
    if n <= 2:
        return out
    cdef cnp.ndarray[cnp.float64_t, ndim=2] inner = isotonic_lines(
        np.ascontiguousarray(lines[:, 1 : n - 1])
    )
    cdef Py_ssize_t b, i
    cdef double lo, hi, x
    for b in range(nb):
        lo = lines[b, 0]
        hi = lines[b, n - 1]
        for i in range(n - 2):
            x = inner[b, i]
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            out[b, i + 1] = x
    return out


def cell_energy_gradient(
    cnp.ndarray[cnp.float64_t, ndim=4] values,
    cnp.ndarray[cnp.float64_t, ndim=1] spacing,
):
    """Fused excess graph area (sum of F-1 times cell volume) + nodal
    gradient for (N1,N2,N3,2) values."""
    cdef Py_ssize_t n1 = values.shape[0]
    cdef Py_ssize_t n2 = values.shape[1]
    cdef Py_ssize_t n3 = values.shape[2]
    cdef double h1 = spacing[0], h2 = spacing[1], h3 = spacing[2]
    cdef double vol = h1 * h2 * h3
    cdef cnp.ndarray[cnp.float64_t, ndim=4] grad = np.zeros((n1, n2, n3, 2))
    cdef double energy = 0.0
    cdef Py_ssize_t i, j, k, a, da, db, dc
    cdef double g[2][3]
    cdef double df[2][3]
    cdef double s11, s22, s12, aa, bb, det1, F, coef
    cdef double q1 = 0.25 / h1, q2 = 0.25 / h2, q3 = 0.25 / h3
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            for k in range(n3 - 1):
                for a in range(2):
                    g[a][0] = (
                        values[i + 1, j, k, a] - values[i, j, k, a]
                        + values[i + 1, j + 1, k, a] - values[i, j + 1, k, a]
                        + values[i + 1, j, k + 1, a] - values[i, j, k + 1, a]
                        + values[i + 1, j + 1, k + 1, a] - values[i, j + 1, k + 1, a]
                    ) * q1
                    g[a][1] = (
                        values[i, j + 1, k, a] - values[i, j, k, a]
                        + values[i + 1, j + 1, k, a] - values[i + 1, j, k, a]
                        + values[i, j + 1, k + 1, a] - values[i, j, k + 1, a]
                        + values[i + 1, j + 1, k + 1, a] - values[i + 1, j, k + 1, a]
                    ) * q2
                    g[a][2] = (
                        values[i, j, k + 1, a] - values[i, j, k, a]
                        + values[i + 1, j, k + 1, a] - values[i + 1, j, k, a]
                        + values[i, j + 1, k + 1, a] - values[i, j + 1, k, a]
                        + values[i + 1, j + 1, k + 1, a] - values[i + 1, j + 1, k, a]
                    ) * q3
                aa = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[0][2] * g[0][2]
                bb = g[1][0] * g[1][0] + g[1][1] * g[1][1] + g[1][2] * g[1][2]
                s12 = g[0][0] * g[1][0] + g[0][1] * g[1][1] + g[0][2] * g[1][2]
                det1 = aa + bb + aa * bb - s12 * s12
                F = sqrt(1.0 + det1)
                energy += det1 / (1.0 + F)
                s11 = 1.0 + aa
                s22 = 1.0 + bb
                for a in range(3):
                    df[0][a] = (s22 * g[0][a] - s12 * g[1][a]) / F * vol
                    df[1][a] = (s11 * g[1][a] - s12 * g[0][a]) / F * vol
                for da in range(2):
                    for db in range(2):
                        for dc in range(2):
                            for a in range(2):
                                coef = 0.0
                                coef += df[a][0] * (q1 if da else -q1)
                                coef += df[a][1] * (q2 if db else -q2)
                                coef += df[a][2] * (q3 if dc else -q3)
                                grad[i + da, j + db, k + dc, a] += coef
    return energy * vol, grad
