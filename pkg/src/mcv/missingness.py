"""MCAR / MAR / self-masked MNAR mask generation on complete data.

MAR and MNAR use a logistic model whose weights are drawn once per
experiment and whose shared intercept is calibrated by bisection so the
average missingness over the maskable features hits a target rate. MCAR is
plain per-feature Bernoulli sampling and never needs calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .masks import Mask

__all__ = [
    "CalibrationError",
    "MissingnessSpec",
    "MissingnessSampler",
    "calibrate",
    "gen_mcar",
    "gen_mar",
    "gen_mnar",
    "enumerate_patterns",
]

MECHANISMS = ("mcar", "mar", "mnar")


class CalibrationError(RuntimeError):
    """Target missingness rate unreachable for the logistic mechanism."""


@dataclass(frozen=True)
class MissingnessSpec:
    """Which features may go missing and how often.

    ``rate`` is the per-feature probability for MCAR and the target average
    missingness over maskable features for MAR/MNAR. ``exclude_full_mask``
    redraws the pattern with every feature missing (only reachable when all
    features are maskable); the raw generators leave it off so their
    per-bit rates equal the nominal ones.
    """

    mechanism: str
    rate: float
    maskable: tuple[int, ...] | None = None
    driver: tuple[int, ...] | None = None
    exclude_full_mask: bool = False
    weights: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("rate must be in [0, 1)")
        if self.mechanism == "mar":
            if not self.driver:
                raise ValueError("MAR requires driver features")
            if self.maskable and set(self.maskable) & set(self.driver):
                raise ValueError("maskable and driver features must be disjoint under MAR")

    def maskable_indices(self, d: int) -> np.ndarray:
        if self.maskable is None:
            return np.arange(d)
        idx = np.asarray(self.maskable, dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= d or np.unique(idx).size != idx.size:
            raise ValueError("invalid maskable feature set")
        return idx


class MissingnessSampler:
    """A spec with its logistic weights and calibrated intercept bound in."""

    def __init__(self, spec: MissingnessSpec, d: int, weights: np.ndarray | None, intercept: float):
        self.spec = spec
        self.d = d
        self.weights = weights
        self.intercept = intercept

    def _probs(self, x_rows: np.ndarray) -> np.ndarray:
        """Per-(row, maskable feature) missing probability."""
        spec = self.spec
        maskable = spec.maskable_indices(self.d)
        if spec.mechanism == "mcar":
            return np.full((x_rows.shape[0], maskable.size), spec.rate)
        if spec.mechanism == "mar":
            driver = np.asarray(spec.driver, dtype=int)
            logits = x_rows[:, driver] @ self.weights.T + self.intercept
        else:  # mnar: self-masking on the feature's own value
            logits = x_rows[:, maskable] * self.weights + self.intercept
        return 1.0 / (1.0 + np.exp(-logits))

    def draw_many(self, x_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Boolean mask matrix for a batch of complete rows."""
        x_rows = np.asarray(x_rows, dtype=float)
        if x_rows.ndim != 2 or x_rows.shape[1] != self.d:
            raise ValueError("row matrix width must equal sampler dim")
        maskable = self.spec.maskable_indices(self.d)
        probs = self._probs(x_rows)
        m = np.zeros(x_rows.shape, dtype=bool)
        m[:, maskable] = rng.random(probs.shape) < probs
        if self.spec.exclude_full_mask and maskable.size == self.d:
            full = m.all(axis=1)
            while full.any():
                redraw = rng.random((int(full.sum()), maskable.size)) < probs[full]
                m[full] = False
                rows = np.flatnonzero(full)
                m[np.ix_(rows, maskable)] = redraw
                full[rows] = m[rows].all(axis=1)
        return m

    def draw(self, x: np.ndarray, rng: np.random.Generator) -> Mask:
        return Mask(self.draw_many(np.atleast_2d(x), rng)[0])


def _solve_intercept(logits_nob: np.ndarray, target: float) -> float:
    """Bisection for b with mean(sigmoid(logits + b)) == target."""
    if not 0.0 < target < 1.0:
        raise CalibrationError(f"target rate {target} unreachable for a logistic mechanism")

    def achieved(b):
        return float(np.mean(1.0 / (1.0 + np.exp(-(logits_nob + b)))))

    lo, hi = -40.0, 40.0
    if not achieved(lo) <= target <= achieved(hi):
        raise CalibrationError("target rate outside achievable range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if achieved(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate(spec: MissingnessSpec, x_reference: np.ndarray, rng: np.random.Generator) -> MissingnessSampler:
    """Draw the logistic weights and solve the intercept on a reference sample."""
    x_reference = np.asarray(x_reference, dtype=float)
    d = x_reference.shape[1]
    maskable = spec.maskable_indices(d)
    if spec.mechanism == "mcar":
        return MissingnessSampler(spec, d, None, 0.0)
    if spec.mechanism == "mar":
        driver = np.asarray(spec.driver, dtype=int)
        if spec.weights is not None:
            weights = np.asarray(spec.weights, dtype=float).reshape(maskable.size, driver.size)
        else:
            weights = rng.standard_normal((maskable.size, driver.size))
        logits = x_reference[:, driver] @ weights.T
    else:
        if spec.weights is not None:
            weights = np.asarray(spec.weights, dtype=float).reshape(maskable.size)
        else:
            weights = rng.standard_normal(maskable.size)
        logits = x_reference[:, maskable] * weights
    b = _solve_intercept(logits.ravel(), spec.rate)
    return MissingnessSampler(spec, d, weights, b)


def gen_mcar(x: np.ndarray, spec: MissingnessSpec, rng: np.random.Generator) -> Mask:
    if spec.mechanism != "mcar":
        raise ValueError("spec mechanism is not mcar")
    return MissingnessSampler(spec, np.asarray(x).shape[-1], None, 0.0).draw(x, rng)


def gen_mar(x: np.ndarray, sampler: MissingnessSampler, rng: np.random.Generator) -> Mask:
    if sampler.spec.mechanism != "mar":
        raise ValueError("sampler mechanism is not mar")
    return sampler.draw(x, rng)


def gen_mnar(x: np.ndarray, sampler: MissingnessSampler, rng: np.random.Generator) -> Mask:
    if sampler.spec.mechanism != "mnar":
        raise ValueError("sampler mechanism is not mnar")
    return sampler.draw(x, rng)


def enumerate_patterns(d: int, maskable=None, exclude_full: bool = True) -> list[Mask]:
    """All masks supported on the maskable features, lexicographically sorted.

    ``exclude_full`` drops the pattern with every feature of the dataset
    missing (the completely missing pattern); the all-observed pattern is
    kept.
    """
    idx = np.arange(d) if maskable is None else np.asarray(sorted(maskable), dtype=int)
    masks = []
    for code in range(2 ** idx.size):
        bits = np.zeros(d, dtype=bool)
        for j, feat in enumerate(idx):
            if code >> j & 1:
                bits[feat] = True
        if exclude_full and bits.all():
            continue
        masks.append(Mask(bits))
    masks.sort(key=lambda m: m.to_string())
    return masks
