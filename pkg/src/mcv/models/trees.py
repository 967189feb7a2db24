"""Depth-wise growth of a single histogram regression tree.

Trees split on binned codes (``code <= threshold`` goes left); the NA code
is routed by a per-node flag chosen by gain, which is how NA-bearing inputs
are scored without imputation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._kernels import hist_grad_hess, predict_tree

_EPS_GAIN = 1e-12


@dataclass
class Tree:
    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # uint8 bin index
    nan_left: np.ndarray  # uint8
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaves only
    is_leaf: np.ndarray  # uint8
    na_code: int

    def add_predictions(self, codes: np.ndarray, out: np.ndarray) -> np.ndarray:
        return predict_tree(
            codes,
            self.na_code,
            self.feature,
            self.threshold,
            self.nan_left,
            self.left,
            self.right,
            self.value,
            self.is_leaf,
            out,
        )

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())


def _best_split(g, h, c, l2, min_leaf, max_bins):
    """Best (feature, threshold, nan_left, gain) over all histogram splits.

    Considers every numeric threshold twice (NA routed left or right).
    Returns gain -inf when no admissible split exists.
    """
    total_g = g[0].sum()
    total_h = h[0].sum()
    total_c = c[0].sum()
    base = total_g * total_g / (total_h + l2 + _EPS_GAIN)

    gn = g[:, :max_bins]
    hn = h[:, :max_bins]
    cn = c[:, :max_bins]
    g_na = g[:, max_bins][:, None]
    h_na = h[:, max_bins][:, None]
    c_na = c[:, max_bins][:, None]

    # cumulative sums over numeric bins; threshold t keeps bins 0..t left
    cg = np.cumsum(gn, axis=1)[:, :-1]
    ch = np.cumsum(hn, axis=1)[:, :-1]
    cc = np.cumsum(cn, axis=1)[:, :-1]

    best = (-np.inf, -1, 0, False)
    for na_left in (False, True):
        gl = cg + (g_na if na_left else 0.0)
        hl = ch + (h_na if na_left else 0.0)
        cl = cc + (c_na if na_left else 0)
        gr = total_g - gl
        hr = total_h - hl
        cr = total_c - cl
        gain = gl * gl / (hl + l2 + _EPS_GAIN) + gr * gr / (hr + l2 + _EPS_GAIN) - base
        gain[(cl < min_leaf) | (cr < min_leaf)] = -np.inf
        flat = int(np.argmax(gain))
        f, t = divmod(flat, gain.shape[1])
        if gain[f, t] > best[0]:
            best = (float(gain[f, t]), int(f), int(t), na_left)
    gain, f, t, na_left = best
    return f, t, na_left, gain


def grow_tree(
    codes: np.ndarray,
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    *,
    max_depth: int,
    min_samples_leaf: int,
    l2: float,
    max_bins: int,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree; returns it plus each training row's leaf index.

    Leaf values are the Newton step -sum(g)/(sum(h)+l2); callers may
    overwrite them (pinball refit) before applying shrinkage.
    """
    na_code = max_bins
    n_bins_total = max_bins + 1
    feature, threshold, nan_left = [], [], []
    left, right, value, is_leaf = [], [], [], []
    leaf_of_row = np.full(codes.shape[0], -1, dtype=np.int64)

    def new_node():
        feature.append(-1)
        threshold.append(0)
        nan_left.append(0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        is_leaf.append(1)
        return len(feature) - 1

    def finalize_leaf(node, g_sum, h_sum, node_rows):
        denom = h_sum + l2
        value[node] = -g_sum / denom if denom > 0 else 0.0
        leaf_of_row[node_rows] = node

    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        g, h, c = hist_grad_hess(codes, node_rows, grad, hess, n_bins_total)
        g_sum = g[0].sum()
        h_sum = h[0].sum()
        if depth >= max_depth or node_rows.size < 2 * min_samples_leaf:
            finalize_leaf(node, g_sum, h_sum, node_rows)
            continue
        f, t, na_l, gain = _best_split(g, h, c, l2, min_samples_leaf, max_bins)
        if not np.isfinite(gain) or gain <= _EPS_GAIN:
            finalize_leaf(node, g_sum, h_sum, node_rows)
            continue
        col = codes[node_rows, f]
        go_left = np.where(col == na_code, na_l, col <= t)
        feature[node] = f
        threshold[node] = t
        nan_left[node] = int(na_l)
        is_leaf[node] = 0
        lnode = new_node()
        rnode = new_node()
        left[node] = lnode
        right[node] = rnode
        # push right first so left is processed first (stable node order)
        stack.append((rnode, node_rows[~go_left], depth + 1))
        stack.append((lnode, node_rows[go_left], depth + 1))

    tree = Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.uint8),
        nan_left=np.array(nan_left, dtype=np.uint8),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        is_leaf=np.array(is_leaf, dtype=np.uint8),
        na_code=na_code,
    )
    return tree, leaf_of_row
