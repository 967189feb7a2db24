"""NumPy implementation of the tree kernels.

Semantics (and floating-point accumulation order) must match ``_core.pyx``
exactly: histograms sum gradients in row order per feature, and traversal
routes ``code <= threshold`` left, with the NA code following the per-node
``nan_left`` flag.
"""

import numpy as np


def hist_grad_hess(codes, rows, grad, hess, n_bins_total):
    """Per-feature (gradient, hessian, count) histograms over ``rows``.

    Parameters
    ----------
    codes : uint8 array, shape (n, f)
        Binned feature matrix; the NA code is a valid bin < n_bins_total.
    rows : int64 array
        Row subset to accumulate.
    grad, hess : float64 arrays, shape (n,)
    n_bins_total : int
        Histogram width (numeric bins + NA bin).
    """
    n_feat = codes.shape[1]
    g = np.empty((n_feat, n_bins_total))
    h = np.empty((n_feat, n_bins_total))
    c = np.empty((n_feat, n_bins_total), dtype=np.int64)
    sub = codes[rows]
    gr = grad[rows]
    hr = hess[rows]
    for f in range(n_feat):
        col = sub[:, f]
        g[f] = np.bincount(col, weights=gr, minlength=n_bins_total)
        h[f] = np.bincount(col, weights=hr, minlength=n_bins_total)
        c[f] = np.bincount(col, minlength=n_bins_total)
    return g, h, c


def predict_tree(codes, na_code, feature, threshold, nan_left, left, right, value, is_leaf, out):
    """Add each row's leaf value to ``out`` (in-place boosting accumulator)."""
    n = codes.shape[0]
    node = np.zeros(n, dtype=np.int64)
    while True:
        active = is_leaf[node] == 0
        if not active.any():
            break
        idx = np.flatnonzero(active)
        nd = node[idx]
        f = feature[nd]
        code = codes[idx, f]
        is_na = code == na_code
        go_left = np.where(is_na, nan_left[nd] != 0, code <= threshold[nd])
        node[idx] = np.where(go_left, left[nd], right[nd])
    out += value[node]
    return out
