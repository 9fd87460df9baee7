# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels; see kernels.pure for the reference formulas."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def element_values(Py_ssize_t lo, Py_ssize_t hi,
                   double[::1] vols,
                   double[:, :, ::1] gs,
                   double[:, ::1] gt,
                   double[::1] sigma,
                   double[::1] t00,
                   double[::1] t01,
                   double[::1] t11,
                   double[:, :, ::1] vvert,
                   double[:, ::1] kvals,
                   double[:, ::1] cvals):
    cdef Py_ssize_t e, i, j
    cdef double V, sg, a, b, c, vsx, vsy, gix, giy, gjx, gjy, q4, q20
    with nogil:
        for e in range(lo, hi):
            V = vols[e]
            sg = sigma[e]
            a = t00[e]
            b = t01[e]
            c = t11[e]
            vsx = vvert[e, 0, 0] + vvert[e, 1, 0] + vvert[e, 2, 0] + vvert[e, 3, 0]
            vsy = vvert[e, 0, 1] + vvert[e, 1, 1] + vvert[e, 2, 1] + vvert[e, 3, 1]
            q4 = V / 4.0
            q20 = V / 20.0
            for i in range(4):
                gix = gs[e, i, 0]
                giy = gs[e, i, 1]
                for j in range(4):
                    gjx = gs[e, j, 0]
                    gjy = gs[e, j, 1]
                    kvals[e, 4 * i + j] = V * (
                        a * gix * gjx + b * (gix * gjy + giy * gjx) + c * giy * gjy
                    )
                    cvals[e, 4 * i + j] = sg * (
                        q4 * gt[e, j]
                        + q20 * (
                            gjx * (vsx + vvert[e, i, 0])
                            + gjy * (vsy + vvert[e, i, 1])
                        )
                    )


def rhs_values(Py_ssize_t lo, Py_ssize_t hi,
               double[::1] vols,
               double[:, :, ::1] gs,
               double[:, ::1] jvert,
               double[:, :, ::1] wvert,
               double[:, ::1] fvals):
    cdef Py_ssize_t e, i
    cdef double V, jsum, wsx, wsy
    with nogil:
        for e in range(lo, hi):
            V = vols[e]
            jsum = jvert[e, 0] + jvert[e, 1] + jvert[e, 2] + jvert[e, 3]
            wsx = wvert[e, 0, 0] + wvert[e, 1, 0] + wvert[e, 2, 0] + wvert[e, 3, 0]
            wsy = wvert[e, 0, 1] + wvert[e, 1, 1] + wvert[e, 2, 1] + wvert[e, 3, 1]
            for i in range(4):
                fvals[e, i] = (
                    V / 20.0 * (jsum + jvert[e, i])
                    + V / 4.0 * (gs[e, i, 0] * wsx + gs[e, i, 1] * wsy)
                )


def lower_unit_solve(int[::1] indptr, int[::1] indices, double[::1] data,
                     double[::1] x):
    """In-place forward substitution with a unit-diagonal lower CSR factor."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, p
    cdef double acc
    with nogil:
        for i in range(n):
            acc = x[i]
            for p in range(indptr[i], indptr[i + 1]):
                if indices[p] < i:
                    acc -= data[p] * x[indices[p]]
            x[i] = acc


def upper_solve(int[::1] indptr, int[::1] indices, double[::1] data,
                double[::1] x):
    """In-place backward substitution with an upper CSR factor."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, p
    cdef double acc, diag
    with nogil:
        for i in range(n - 1, -1, -1):
            acc = x[i]
            diag = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                if indices[p] > i:
                    acc -= data[p] * x[indices[p]]
                elif indices[p] == i:
                    diag = data[p]
            x[i] = acc / diag


def residual_values(Py_ssize_t lo, Py_ssize_t hi,
                    double[::1] vols,
                    double[:, :, ::1] gs,
                    double[:, ::1] gt,
                    double[::1] sigma,
                    double[::1] nu_e,
                    double[:, :, ::1] vvert,
                    double[:, ::1] uvert,
                    double[:, ::1] jvert,
                    double[:, :, ::1] wvert,
                    double[:, ::1] rvals):
    cdef Py_ssize_t e, i
    cdef double V, sg, nu, gux, guy, ut, vsx, vsy, jsum, wsx, wsy, conv
    with nogil:
        for e in range(lo, hi):
            V = vols[e]
            sg = sigma[e]
            nu = nu_e[e]
            gux = 0.0
            guy = 0.0
            ut = 0.0
            for i in range(4):
                gux += uvert[e, i] * gs[e, i, 0]
                guy += uvert[e, i] * gs[e, i, 1]
                ut += uvert[e, i] * gt[e, i]
            vsx = vvert[e, 0, 0] + vvert[e, 1, 0] + vvert[e, 2, 0] + vvert[e, 3, 0]
            vsy = vvert[e, 0, 1] + vvert[e, 1, 1] + vvert[e, 2, 1] + vvert[e, 3, 1]
            jsum = jvert[e, 0] + jvert[e, 1] + jvert[e, 2] + jvert[e, 3]
            wsx = wvert[e, 0, 0] + wvert[e, 1, 0] + wvert[e, 2, 0] + wvert[e, 3, 0]
            wsy = wvert[e, 0, 1] + wvert[e, 1, 1] + wvert[e, 2, 1] + wvert[e, 3, 1]
            for i in range(4):
                conv = gux * (vsx + vvert[e, i, 0]) + guy * (vsy + vvert[e, i, 1])
                rvals[e, i] = (
                    V * nu * (gs[e, i, 0] * gux + gs[e, i, 1] * guy)
                    + sg * (V / 4.0 * ut + V / 20.0 * conv)
                    - V / 20.0 * (jsum + jvert[e, i])
                    - V / 4.0 * (gs[e, i, 0] * wsx + gs[e, i, 1] * wsy)
                )
