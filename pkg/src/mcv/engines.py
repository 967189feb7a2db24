"""Prediction-set constructions: split CP, CP-MDA variants, weighted CP
with the bound-search grid, and acceptance-rejection-corrected CP.

Rank arithmetic note: quantile levels like (1 - alpha)(n + 1) sit exactly on
integer ranks for round alphas, where float rounding can push the computed
level across the rank boundary in either direction. All rank comparisons
therefore snap by a relative 1e-12 before flooring/ceiling, which reproduces
exact rational arithmetic for any realistic alpha.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .masks import Mask, MaskedSample, PredictionInterval

logger = logging.getLogger(__name__)

__all__ = [
    "CqrScore",
    "SearchSpec",
    "weighted_quantile",
    "split_cp_threshold",
    "interval_from_threshold",
    "cp_mda_exact_idcal",
    "cp_mda_nested_star",
    "nested_star_components",
    "coverage_hull",
    "weighted_cp",
    "arc_select",
    "arc_cp",
]

_SNAP = 1e-12


def _ceil_snap(t: float) -> int:
    return int(math.ceil(t - 1e-9))


def _strict_below(t):
    """Upper comparison bound implementing `strictly less than t` robustly."""
    return t * (1.0 - _SNAP) - _SNAP


class CqrScore:
    """Conformalized-quantile-regression score s = max(low - y, y - high).

    Negative scores certify membership in the raw quantile band; the sign
    convention makes threshold intervals [low - t, high + t].
    """

    def __init__(self, pair):
        self.pair = pair

    def bounds(self, x_rows, mask_rows):
        return self.pair.predict(x_rows, mask_rows)

    def scores(self, x_rows, mask_rows, y) -> np.ndarray:
        lo, hi = self.bounds(x_rows, mask_rows)
        return self.score_from_bounds(lo, hi, np.asarray(y, dtype=float))

    @staticmethod
    def score_from_bounds(lo, hi, y):
        return np.maximum(lo - y, y - hi)


def weighted_quantile(values, weights, beta: float) -> float:
    """inf{z : normalized cumulative weight at z >= beta}.

    ``values`` may include +inf atoms; the result is +inf when only those
    reach the level.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1:
        raise ValueError("values/weights must be matching 1-d arrays")
    if (weights < 0).any() or not np.isfinite(weights).all():
        raise ValueError("weights must be finite and nonnegative")
    total = float(weights.sum())
    if total <= 0:
        raise ValueError("all-zero weights")
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order]) / total
    idx = int(np.searchsorted(cum, beta * (1.0 - _SNAP) - _SNAP, side="left"))
    idx = min(idx, values.size - 1)
    return float(values[order[idx]])


def split_cp_threshold(scores, alpha: float) -> float:
    """The ceil((1-alpha)(n+1))-th smallest score, +inf past the sample."""
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    if n < 1:
        raise ValueError("need at least one calibration score")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    k = _ceil_snap((1.0 - alpha) * (n + 1))
    if k > n:
        return math.inf
    return float(np.sort(scores)[k - 1])


def interval_from_threshold(lo: float, hi: float, t: float) -> PredictionInterval:
    """CQR interval [low - t, high + t]; empty when t over-shrinks it."""
    if math.isinf(t) and t > 0:
        return PredictionInterval.entire_line()
    lower, upper = lo - t, hi + t
    if lower > upper:
        return PredictionInterval.empty_set()
    return PredictionInterval(lower, upper)


def cp_mda_exact_idcal(cal_mask: np.ndarray, test_mask: Mask) -> np.ndarray:
    """Calibration indices whose missing features are a subset of the test's."""
    cal_mask = np.asarray(cal_mask, dtype=bool)
    if cal_mask.ndim != 2 or cal_mask.shape[1] != test_mask.dim:
        raise ValueError("calibration mask matrix width must equal test dim")
    return np.flatnonzero(~(cal_mask & ~test_mask.bits).any(axis=1))


def coverage_hull(a: np.ndarray, b: np.ndarray, needed: int) -> PredictionInterval:
    """Hull of {y : at least `needed` of the closed intervals [a, b] cover y}."""
    keep = a <= b
    a, b = a[keep], b[keep]
    if needed <= 0:
        return PredictionInterval.entire_line()
    if a.size < needed:
        return PredictionInterval.empty_set()
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    # active interval count evaluated at each left endpoint (ascending) and
    # each right endpoint: coverage can only reach `needed` at one of these
    active_at_a = np.arange(1, a_sorted.size + 1) - np.searchsorted(b_sorted, a_sorted, side="left")
    lo_hits = np.flatnonzero(active_at_a >= needed)
    active_at_b = np.searchsorted(a_sorted, b_sorted, side="right") - np.searchsorted(b_sorted, b_sorted, side="left")
    hi_hits = np.flatnonzero(active_at_b >= needed)
    if lo_hits.size == 0 or hi_hits.size == 0:
        return PredictionInterval.empty_set()
    return PredictionInterval(float(a_sorted[lo_hits[0]]), float(b_sorted[hi_hits[-1]]))


def nested_star_components(cal_x, cal_mask, cal_y, test_x, test_mask: Mask, score: CqrScore, alpha: float, id_cal):
    """Per-calibration interval endpoints and the required coverage count.

    For each selected calibration point k, the union pattern masks both
    sides; the candidate y is counted as conforming with k when it lies in
    [low_k - S_k, high_k + S_k].
    """
    id_cal = np.asarray(id_cal, dtype=int)
    unions = cal_mask[id_cal] | test_mask.bits
    cal_vals = np.where(unions, np.nan, cal_x[id_cal])
    s = score.scores(cal_vals, unions, cal_y[id_cal])

    uniq, inv = np.unique(unions, axis=0, return_inverse=True)
    test_rows = np.where(uniq, np.nan, np.asarray(test_x, dtype=float))
    lo_u, hi_u = score.bounds(test_rows, uniq)
    a = lo_u[inv] - s
    b = hi_u[inv] + s
    n_id = id_cal.size
    needed = n_id - _ceil_snap((1.0 - alpha) * (1 + n_id)) + 1
    return a, b, needed


def cp_mda_nested_star(
    cal,
    test: MaskedSample,
    score: CqrScore,
    alpha: float,
    id_cal=None,
) -> PredictionInterval:
    """Counting-rule prediction set via an exact breakpoint scan.

    ``id_cal`` = all indices gives the nested variant; the subset rule of
    ``cp_mda_exact_idcal`` gives the exact variant. An empty selection
    yields the full line. The returned interval is the hull of the
    (piecewise-constant) membership set.
    """
    if id_cal is None:
        id_cal = np.arange(len(cal))
    id_cal = np.asarray(id_cal, dtype=int)
    if id_cal.size == 0:
        return PredictionInterval.entire_line()
    a, b, needed = nested_star_components(cal.x, cal.mask, cal.y, test.x, test.mask, score, alpha, id_cal)
    return coverage_hull(a, b, needed)


@dataclass(frozen=True)
class SearchSpec:
    """Grid policy for the weighted-CP bound search.

    The default step splits the data-driven range into ``n_steps`` cells;
    the reported interval is conservative by at most two steps.
    """

    step: float | None = None
    n_steps: int = 1000

    def __post_init__(self):
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")

    def grid(self, y_min: float, y_max: float) -> np.ndarray:
        if y_max < y_min:
            raise ValueError("empty search range")
        h = self.step if self.step is not None else (y_max - y_min) / self.n_steps
        if h <= 0 or y_max == y_min:
            return np.array([y_min])
        pts = y_min + h * np.arange(int(np.floor((y_max - y_min) / h)) + 1)
        if pts[-1] < y_max:
            pts = np.append(pts, y_max)
        return pts


def weighted_cp(
    cal_scores,
    cal_ratios,
    test_lo: float,
    test_hi: float,
    test_ratio_fn,
    alpha: float,
    search: SearchSpec | None = None,
) -> PredictionInterval:
    """Weighted split CP with a response-dependent test weight.

    Membership of a candidate y reduces to
        sum of calibration weights strictly below s(test, y)
            < (1 - alpha) * (total weight + test weight(y)),
    so one sort of the calibration scores serves the whole grid. The search
    range covers every y whose score does not exceed the largest calibration
    score; if the membership set touches a range endpoint the interval
    escapes to the corresponding infinity (validity-preserving rule).
    """
    cal_scores = np.asarray(cal_scores, dtype=float)
    cal_ratios = np.asarray(cal_ratios, dtype=float)
    if cal_scores.shape != cal_ratios.shape or cal_scores.ndim != 1 or cal_scores.size == 0:
        raise ValueError("calibration scores/ratios must be matching nonempty 1-d arrays")
    if (cal_ratios < 0).any() or not np.isfinite(cal_ratios).all():
        raise ValueError("calibration ratios must be finite and nonnegative")
    search = search or SearchSpec()

    s_max = float(cal_scores.max())
    half_band = (test_hi - test_lo) / 2.0
    if s_max < -half_band:
        logger.warning("weighted CP: empty search range (max score below band)")
        return PredictionInterval.empty_set()
    grid = search.grid(test_lo - s_max, test_hi + s_max)

    w_test = np.asarray(test_ratio_fn(grid), dtype=float)
    if w_test.shape != grid.shape:
        raise ValueError("test_ratio_fn must return one weight per grid point")
    w_test = np.where(np.isfinite(w_test), np.maximum(w_test, 0.0), 0.0)

    order = np.argsort(cal_scores, kind="stable")
    sorted_scores = cal_scores[order]
    cum = np.concatenate([[0.0], np.cumsum(cal_ratios[order])])
    total_cal = cum[-1]

    s_grid = np.maximum(test_lo - grid, grid - test_hi)
    w_strict = cum[np.searchsorted(sorted_scores, s_grid, side="left")]
    totals = total_cal + w_test
    member = (totals > 0) & (w_strict < _strict_below((1.0 - alpha) * totals))

    hits = np.flatnonzero(member)
    if hits.size == 0:
        logger.warning("weighted CP: membership set empty (all candidate weights rejected)")
        return PredictionInterval.empty_set()
    lower = -math.inf if hits[0] == 0 else float(grid[hits[0] - 1])
    upper = math.inf if hits[-1] == grid.size - 1 else float(grid[hits[-1] + 1])
    return PredictionInterval(lower, upper)


def arc_select(cal_ratios, omega_max: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each index independently with probability ratio / omega_max."""
    cal_ratios = np.asarray(cal_ratios, dtype=float)
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    q = cal_ratios / omega_max
    if (q > 1).any():
        logger.warning("arc_select: %d ratios above omega_max were clipped", int((q > 1).sum()))
        q = np.minimum(q, 1.0)
    return rng.random(cal_ratios.size) < q


def arc_cp(
    cal_scores,
    cal_ratios,
    omega_max: float,
    test_lo: float,
    test_hi: float,
    alpha: float,
    rng: np.random.Generator,
) -> PredictionInterval:
    """Split CP on the acceptance-rejection subsample of the calibration set."""
    cal_scores = np.asarray(cal_scores, dtype=float)
    keep = arc_select(cal_ratios, omega_max, rng)
    if not keep.any():
        return PredictionInterval.entire_line()
    t = split_cp_threshold(cal_scores[keep], alpha)
    return interval_from_threshold(test_lo, test_hi, t)
