"""Likelihood-ratio models between the true mask-conditional law and the
imputed-then-masked calibration law.

The estimated route trains one probabilistic classifier to tell "this NA
pattern is the point's real one" from "this pattern was resampled", on
features (masked covariates, response); the ratio p/(1-p) then estimates
the density ratio up to a constant per pattern, which is all the weighted
correction needs. Exact (closed-form) ratios and noise-perturbed variants
plug into the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import Mask
from .models import BoostParams, ProbClassifier, fit_classifier

__all__ = [
    "RatioModel",
    "RatioTrainSpec",
    "build_ratio_dataset",
    "fit_ratio",
    "estimate_normalizer",
    "perturb_ratio",
    "ratio_quality",
]


def _as_eval_batch(x_values, mask_bits, y):
    x_values = np.atleast_2d(np.asarray(x_values, dtype=float))
    mask_bits = np.atleast_2d(np.asarray(mask_bits, dtype=bool))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if mask_bits.shape != x_values.shape or y.shape != (x_values.shape[0],):
        raise ValueError("inconsistent ratio evaluation batch")
    return x_values, mask_bits, y


class RatioModel:
    """Callable likelihood-ratio surface with optional upper bound.

    Backed by either a ratio function or a log-ratio function over
    (masked covariates, mask bits, response) batches. ``scale`` divides
    every output; normalization produces a rescaled view of the same
    surface.
    """

    def __init__(self, ratio_fn=None, log_ratio_fn=None, grid_fn=None, upper_bound=None, scale=1.0, name="ratio"):
        if (ratio_fn is None) == (log_ratio_fn is None):
            raise ValueError("provide exactly one of ratio_fn / log_ratio_fn")
        self._ratio_fn = ratio_fn
        self._log_ratio_fn = log_ratio_fn
        self._grid_fn = grid_fn
        self.upper_bound = upper_bound
        self.scale = float(scale)
        self.name = name
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def ratios(self, x_values, mask_bits, y) -> np.ndarray:
        x_values, mask_bits, y = _as_eval_batch(x_values, mask_bits, y)
        if self._ratio_fn is not None:
            out = np.asarray(self._ratio_fn(x_values, mask_bits, y), dtype=float)
        else:
            out = np.exp(self._log_ratio_fn(x_values, mask_bits, y))
        return out / self.scale

    def log_ratios(self, x_values, mask_bits, y) -> np.ndarray:
        x_values, mask_bits, y = _as_eval_batch(x_values, mask_bits, y)
        if self._log_ratio_fn is not None:
            out = np.asarray(self._log_ratio_fn(x_values, mask_bits, y), dtype=float)
        else:
            out = np.log(self._ratio_fn(x_values, mask_bits, y))
        return out - np.log(self.scale)

    def ratios_on_grid(self, x_row, mask: Mask, y_grid) -> np.ndarray:
        """Ratio at one covariate row against many candidate responses."""
        y_grid = np.asarray(y_grid, dtype=float)
        if self._grid_fn is not None:
            return np.asarray(self._grid_fn(np.asarray(x_row, dtype=float), mask.bits, y_grid), dtype=float) / self.scale
        x_rows = np.tile(np.asarray(x_row, dtype=float), (y_grid.size, 1))
        m_rows = np.tile(mask.bits, (y_grid.size, 1))
        return self.ratios(x_rows, m_rows, y_grid)

    def rescaled(self, divisor: float) -> "RatioModel":
        if divisor <= 0:
            raise ValueError("divisor must be positive")
        bound = None if self.upper_bound is None else self.upper_bound / divisor
        return RatioModel(
            ratio_fn=self._ratio_fn,
            log_ratio_fn=self._log_ratio_fn,
            grid_fn=self._grid_fn,
            upper_bound=bound,
            scale=self.scale * divisor,
            name=self.name,
        )


@dataclass(frozen=True)
class RatioTrainSpec:
    """How many contrast masks per training point and how to draw them."""

    q: int = 5
    sampler: str = "empirical"  # or "bernoulli"
    bernoulli_p: float = 0.5

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.sampler not in ("empirical", "bernoulli"):
            raise ValueError(f"unknown mask sampler {self.sampler!r}")
        if not 0.0 <= self.bernoulli_p < 1.0:
            raise ValueError("bernoulli_p must be in [0, 1)")


def build_ratio_dataset(x_hat, masks, y, spec: RatioTrainSpec, rng: np.random.Generator):
    """Classifier rows per the contrast-mask construction.

    For each imputed point and each of q drawn masks, the features are the
    point masked by the drawn pattern plus its response, and the label is 1
    exactly when the drawn pattern equals the point's real one (so every
    visible covariate of a label-1 row is a genuinely observed value).

    Returns (feature values, feature mask, labels) with n*q rows; the
    response column is the last feature and is never missing.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    y = np.asarray(y, dtype=float)
    n, d = x_hat.shape
    if not np.isfinite(x_hat).all():
        raise ValueError("x_hat must be fully imputed")
    feats, fmask, labels = [], [], []
    for _ in range(spec.q):
        if spec.sampler == "empirical":
            drawn = masks[rng.integers(0, n, size=n)]
        else:
            drawn = rng.random((n, d)) < spec.bernoulli_p
        vals = np.where(drawn, np.nan, x_hat)
        feats.append(np.column_stack([vals, y]))
        fmask.append(np.column_stack([drawn, np.zeros(n, dtype=bool)]))
        labels.append((drawn == masks).all(axis=1).astype(float))
    return np.vstack(feats), np.vstack(fmask), np.concatenate(labels)


def _classifier_ratio_model(clf: ProbClassifier, d: int) -> RatioModel:
    def ratio_fn(x_values, mask_bits, y):
        rows = np.column_stack([x_values, y])
        mrows = np.column_stack([mask_bits, np.zeros(len(y), dtype=bool)])
        p = clf.predict_proba(rows, mrows)
        return p / (1.0 - p)

    def grid_fn(x_row, mask_bits, y_grid):
        # classifier output is piecewise constant in the binned response, so
        # evaluate once per response bin and broadcast back to the grid
        row = np.concatenate([x_row, [0.0]])
        mrow = np.concatenate([mask_bits, [False]])
        base = clf.mapper.transform(row[None, :], mrow[None, :])[0]
        y_codes = clf.mapper.bin_column(y_grid, d)
        uniq, inverse = np.unique(y_codes, return_inverse=True)
        codes = np.tile(base, (uniq.size, 1))
        codes[:, d] = uniq
        p = clf.predict_proba_codes(np.ascontiguousarray(codes))
        return (p / (1.0 - p))[inverse]

    return RatioModel(ratio_fn=ratio_fn, grid_fn=grid_fn, name="classifier")


def fit_ratio(
    x_hat,
    masks,
    y,
    spec: RatioTrainSpec | None = None,
    params: BoostParams | None = None,
    rng: np.random.Generator | None = None,
) -> RatioModel:
    """Train the mask-discriminating classifier and wrap it as a ratio.

    The output is valid up to a multiplicative constant per pattern (the
    class-prior ratio), which weighted correction absorbs; use
    ``estimate_normalizer`` where an absolute scale is needed.
    """
    spec = spec or RatioTrainSpec()
    rng = rng or np.random.default_rng()
    feats, fmask, labels = build_ratio_dataset(x_hat, masks, y, spec, rng)
    clf = fit_classifier(feats, fmask, labels, params, rng)
    return _classifier_ratio_model(clf, np.asarray(x_hat).shape[1])


def estimate_normalizer(ratio: RatioModel, x_hat_cal, y_cal, m: Mask) -> RatioModel:
    """Rescale so the ratio has empirical mean one over masked calibration."""
    x_hat_cal = np.asarray(x_hat_cal, dtype=float)
    y_cal = np.asarray(y_cal, dtype=float)
    if x_hat_cal.shape[0] == 0:
        raise ValueError("empty calibration set")
    vals = ratio.ratios(np.where(m.bits, np.nan, x_hat_cal), np.tile(m.bits, (x_hat_cal.shape[0], 1)), y_cal)
    mean = float(vals.mean())
    if mean <= 0:
        raise ValueError("ratio mean is zero; cannot normalize")
    return ratio.rescaled(mean)


_MIX_A = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)


def _mix64(h: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (h + _MIX_A).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX_B
        z ^= z >> np.uint64(27)
        z *= _MIX_C
        z ^= z >> np.uint64(31)
    return z


def _keyed_normals(x_values, mask_bits, y, seed: int) -> np.ndarray:
    """One standard normal per row, keyed by the row's exact bytes.

    The same (covariates, mask, response) point always receives the same
    draw within one experiment seed, so repeated evaluation is consistent.
    """
    x_values, mask_bits, y = _as_eval_batch(x_values, mask_bits, y)
    n, d = x_values.shape
    h = _mix64(np.full(n, seed % (2**63), dtype=np.uint64))
    with np.errstate(over="ignore"):
        for j in range(d):
            col = np.ascontiguousarray(np.where(mask_bits[:, j], np.nan, x_values[:, j]))
            bits = col.view(np.uint64) ^ _mix64(np.full(n, j + 1, dtype=np.uint64))
            h = _mix64(h ^ bits)
            h = _mix64(h ^ mask_bits[:, j].astype(np.uint64))
        h = _mix64(h ^ np.ascontiguousarray(y).view(np.uint64))
    u1 = ((_mix64(h) >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    u2 = ((_mix64(h ^ _MIX_B) >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def perturb_ratio(ratio: RatioModel, sigma: float, seed: int) -> RatioModel:
    """Multiply the ratio by point-keyed log-normal noise exp(N(0, sigma^2))."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return ratio

    def ratio_fn(x_values, mask_bits, y):
        base = ratio.ratios(x_values, mask_bits, y)
        return base * np.exp(sigma * _keyed_normals(x_values, mask_bits, y, seed))

    def grid_fn(x_row, mask_bits, y_grid):
        base = ratio.ratios_on_grid(x_row, Mask(mask_bits), y_grid)
        x_rows = np.tile(x_row, (y_grid.size, 1))
        m_rows = np.tile(mask_bits, (y_grid.size, 1))
        return base * np.exp(sigma * _keyed_normals(x_rows, m_rows, y_grid, seed))

    return RatioModel(ratio_fn=ratio_fn, grid_fn=grid_fn, name=f"{ratio.name}+noise{sigma:g}")


def ratio_quality(ratio: RatioModel, exact: RatioModel, x_values, mask_bits, y) -> float:
    """Pearson correlation between two ratio surfaces on given points."""
    a = ratio.ratios(x_values, mask_bits, y)
    b = exact.ratios(x_values, mask_bits, y)
    if a.size < 3:
        raise ValueError("need at least 3 points")
    if np.std(a) == 0 or np.std(b) == 0:
        raise ValueError("zero variance in ratio values")
    return float(np.corrcoef(a, b)[0, 1])
