"""Histogram binning with a dedicated missing-value bin.

Numeric codes are 0..n_bins-1 per feature; the NA code is the fixed index
``max_bins`` for every feature, so tree kernels can treat it uniformly.
"""

from __future__ import annotations

import numpy as np


class BinMapper:
    """Quantile-based binning of a (values, mask) feature matrix."""

    def __init__(self, max_bins: int = 64):
        if not 2 <= max_bins <= 255:
            raise ValueError("max_bins must be in [2, 255]")
        self.max_bins = max_bins
        self.bin_edges_: list[np.ndarray] | None = None

    @property
    def na_code(self) -> int:
        return self.max_bins

    @property
    def n_bins_total(self) -> int:
        return self.max_bins + 1

    def fit(self, x: np.ndarray, mask: np.ndarray | None = None) -> "BinMapper":
        x = np.asarray(x, dtype=float)
        if mask is None:
            mask = ~np.isfinite(x)
        edges = []
        for f in range(x.shape[1]):
            obs = x[~mask[:, f], f]
            obs = obs[np.isfinite(obs)]
            if obs.size == 0:
                edges.append(np.empty(0))
                continue
            distinct = np.unique(obs)
            if distinct.size <= self.max_bins:
                e = (distinct[1:] + distinct[:-1]) / 2.0
            else:
                qs = np.arange(1, self.max_bins) / self.max_bins
                e = np.unique(np.quantile(obs, qs))
            edges.append(e[: self.max_bins - 1])
        self.bin_edges_ = edges
        return self

    def transform(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        if self.bin_edges_ is None:
            raise RuntimeError("BinMapper not fitted")
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.bin_edges_):
            raise ValueError("feature count mismatch")
        if mask is None:
            mask = ~np.isfinite(x)
        codes = np.empty(x.shape, dtype=np.uint8)
        for f, e in enumerate(self.bin_edges_):
            m = mask[:, f]
            col = np.where(m, 0.0, x[:, f])
            codes[:, f] = np.searchsorted(e, col, side="left")
            codes[m, f] = self.na_code
        return np.ascontiguousarray(codes)

    def bin_column(self, values: np.ndarray, feature: int) -> np.ndarray:
        """Codes of finite ``values`` for one feature (no NA handling)."""
        if self.bin_edges_ is None:
            raise RuntimeError("BinMapper not fitted")
        return np.searchsorted(self.bin_edges_[feature], values, side="left").astype(np.uint8)
