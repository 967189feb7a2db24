# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementation of the tree kernels.

Mirrors ``_fallback`` exactly, including floating-point accumulation order,
so both backends produce bit-identical models.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def hist_grad_hess(cnp.uint8_t[:, ::1] codes,
                   cnp.int64_t[::1] rows,
                   cnp.float64_t[::1] grad,
                   cnp.float64_t[::1] hess,
                   int n_bins_total):
    """Per-feature (gradient, hessian, count) histograms over ``rows``."""
    cdef Py_ssize_t n_feat = codes.shape[1]
    cdef Py_ssize_t n_rows = rows.shape[0]
    g_arr = np.zeros((n_feat, n_bins_total))
    h_arr = np.zeros((n_feat, n_bins_total))
    c_arr = np.zeros((n_feat, n_bins_total), dtype=np.int64)
    cdef cnp.float64_t[:, ::1] g = g_arr
    cdef cnp.float64_t[:, ::1] h = h_arr
    cdef cnp.int64_t[:, ::1] c = c_arr
    cdef Py_ssize_t f, i, r
    cdef int b
    for f in range(n_feat):
        for i in range(n_rows):
            r = rows[i]
            b = codes[r, f]
            g[f, b] += grad[r]
            h[f, b] += hess[r]
            c[f, b] += 1
    return g_arr, h_arr, c_arr


def predict_tree(cnp.uint8_t[:, ::1] codes,
                 int na_code,
                 cnp.int32_t[::1] feature,
                 cnp.uint8_t[::1] threshold,
                 cnp.uint8_t[::1] nan_left,
                 cnp.int32_t[::1] left,
                 cnp.int32_t[::1] right,
                 cnp.float64_t[::1] value,
                 cnp.uint8_t[::1] is_leaf,
                 cnp.float64_t[::1] out):
    """Add each row's leaf value to ``out`` (in-place boosting accumulator)."""
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t i
    cdef int node
    cdef int code
    out_arr = np.asarray(out)
    for i in range(n):
        node = 0
        while is_leaf[node] == 0:
            code = codes[i, feature[node]]
            if code == na_code:
                node = left[node] if nan_left[node] != 0 else right[node]
            else:
                node = left[node] if code <= threshold[node] else right[node]
        out[i] += value[node]
    return out_arr
