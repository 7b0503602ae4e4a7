# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled element assembly kernels (hot loop of the offline phase)."""

import numpy as np

cimport cython

BACKEND = "cython"


def element_matrices(double[:, :, ::1] bq, double[:, ::1] phi,
                     double[:, ::1] dphix, double[:, ::1] dphiy,
                     double[::1] wq):
    """Per-element streamline-stiffness and convection matrices.

    Contract identical to uwrom._kernels_np.element_matrices.
    """
    cdef Py_ssize_t nel = bq.shape[0]
    cdef Py_ssize_t nq = bq.shape[1]
    cdef Py_ssize_t nloc = phi.shape[1]
    kbb_arr = np.zeros((nel, nloc, nloc), dtype=np.float64)
    conv_arr = np.zeros((nel, nloc, nloc), dtype=np.float64)
    bd_arr = np.empty(nloc, dtype=np.float64)
    cdef double[:, :, ::1] kbb = kbb_arr
    cdef double[:, :, ::1] conv = conv_arr
    cdef double[::1] bd = bd_arr
    cdef Py_ssize_t e, g, a, b
    cdef double w, bx, by, wa

    with nogil:
        for e in range(nel):
            for g in range(nq):
                w = wq[g]
                bx = bq[e, g, 0]
                by = bq[e, g, 1]
                for a in range(nloc):
                    bd[a] = bx * dphix[g, a] + by * dphiy[g, a]
                for a in range(nloc):
                    wa = w * bd[a]
                    for b in range(nloc):
                        kbb[e, a, b] += wa * bd[b]
                        conv[e, a, b] += wa * phi[g, b]
    return kbb_arr, conv_arr
