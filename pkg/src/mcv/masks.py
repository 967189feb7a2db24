"""Mask algebra, dataset containers, and CSV ingestion.

Missing cells are represented as a (value, flag) pair at array granularity:
every vector of covariates travels together with a boolean mask whose bits
are the single source of truth for missingness. The float storage under a
masked cell is forced to NaN purely as a tripwire -- no code in this package
ever branches on ``isnan``; everything dispatches on the mask.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "Mask",
    "MaskedSample",
    "Dataset",
    "PredictionInterval",
    "mask_apply",
    "mask_union",
    "apply_mask_rows",
    "load_csv",
]


class DataError(ValueError):
    """Malformed input data (bad CSV row, NA response, width mismatch)."""


def _as_bool_bits(bits) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"mask bits must be 1-d, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask bits must be 0/1")
        arr = arr.astype(bool)
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class Mask:
    """Binary missingness pattern over d features (True = missing).

    Immutable; hashable so masks can key report tables. The canonical string
    form is the bit string ("0101"), which is also the sort key used for
    reports.
    """

    __slots__ = ("bits",)

    def __init__(self, bits):
        object.__setattr__(self, "bits", _as_bool_bits(bits))

    def __setattr__(self, name, value):
        raise AttributeError("Mask is immutable")

    @classmethod
    def from_string(cls, s: str) -> "Mask":
        if not s or any(c not in "01" for c in s):
            raise ValueError(f"invalid mask string {s!r}")
        return cls([c == "1" for c in s])

    @classmethod
    def zeros(cls, d: int) -> "Mask":
        return cls(np.zeros(d, dtype=bool))

    @property
    def dim(self) -> int:
        return self.bits.size

    @property
    def n_missing(self) -> int:
        return int(self.bits.sum())

    def observed_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.bits)

    def missing_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def union(self, other: "Mask") -> "Mask":
        return mask_union(self, other)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool((self.bits == other.bits).all())

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"Mask('{self.to_string()}')"


def mask_apply(x, m: Mask) -> np.ndarray:
    """Blank out the masked coordinates of ``x``.

    ``x`` must be fully observed, except that NaN is tolerated at
    coordinates already masked by ``m`` (pass-through), which makes the
    operation idempotent on the observed part.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, mask dim {m.dim}")
    if not np.isfinite(x[~m.bits]).all():
        raise ValueError("unmasked coordinates must be finite")
    out = x.copy()
    out[m.bits] = np.nan
    return out


def mask_union(a: Mask, b: Mask) -> Mask:
    """Elementwise maximum of two patterns (missing wins)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return Mask(a.bits | b.bits)


def apply_mask_rows(x_rows: np.ndarray, m: Mask) -> np.ndarray:
    """Apply one pattern to every row of a matrix of covariates."""
    x_rows = np.asarray(x_rows, dtype=float)
    if x_rows.ndim != 2 or x_rows.shape[1] != m.dim:
        raise ValueError("row matrix width must equal mask dim")
    out = x_rows.copy()
    out[:, m.bits] = np.nan
    return out


@dataclass(frozen=True, eq=False)
class MaskedSample:
    """One (covariates, mask, response) observation.

    ``x`` stores NaN exactly at the masked coordinates; the mask bits are
    authoritative.
    """

    x: np.ndarray
    mask: Mask
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        if x.shape != (self.mask.dim,):
            raise ValueError("sample/mask dimension mismatch")
        if not np.isfinite(x[~self.mask.bits]).all():
            raise ValueError("observed coordinates must be finite")
        x[self.mask.bits] = np.nan
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if not math.isfinite(self.y):
            raise ValueError("response must be finite")

    @property
    def dim(self) -> int:
        return self.mask.dim

    def observed_values(self) -> np.ndarray:
        return self.x[~self.mask.bits]


class Dataset:
    """Ordered list of masked samples sharing one dimension.

    Stored internally as three read-only arrays (values, mask bits,
    responses) so numeric code can stay vectorized; ``__getitem__`` exposes
    the per-sample view.
    """

    def __init__(self, x: np.ndarray, mask: np.ndarray, y: np.ndarray):
        x = np.asarray(x, dtype=float).copy()
        mask = np.asarray(mask, dtype=bool).copy()
        y = np.asarray(y, dtype=float).copy()
        if x.ndim != 2 or mask.shape != x.shape or y.shape != (x.shape[0],):
            raise ValueError("inconsistent array shapes for dataset")
        if not np.isfinite(y).all():
            raise DataError("responses must be finite")
        if not np.isfinite(np.where(mask, 0.0, x)).all():
            raise DataError("observed cells must be finite")
        x[mask] = np.nan
        for arr in (x, mask, y):
            arr.setflags(write=False)
        self.x = x
        self.mask = mask
        self.y = y

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("empty dataset")
        x = np.stack([s.x for s in samples])
        m = np.stack([s.mask.bits for s in samples])
        y = np.array([s.y for s in samples])
        return cls(x, m, y)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> MaskedSample:
        return MaskedSample(self.x[i], Mask(self.mask[i]), float(self.y[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.mask[idx], self.y[idx])


@dataclass(frozen=True)
class PredictionInterval:
    """Closed interval with extended-real endpoints.

    Emptiness is an explicit flag rather than an inverted (lower, upper)
    pair, so lower <= upper always holds for non-empty intervals.
    """

    lower: float
    upper: float
    empty: bool = field(default=False)

    def __post_init__(self):
        if self.empty:
            if self.lower != 0.0 or self.upper != 0.0:
                raise ValueError("empty interval must use the canonical (0, 0) endpoints")
            return
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if self.lower > self.upper:
            raise ValueError("lower > upper; use PredictionInterval.empty_set()")

    @classmethod
    def empty_set(cls) -> "PredictionInterval":
        return cls(0.0, 0.0, empty=True)

    @classmethod
    def entire_line(cls) -> "PredictionInterval":
        return cls(-math.inf, math.inf)

    def contains(self, y: float) -> bool:
        return (not self.empty) and self.lower <= y <= self.upper

    @property
    def width(self) -> float:
        if self.empty:
            return 0.0
        return self.upper - self.lower


def load_csv(path, na_token: str = "NA", header: bool = False) -> Dataset:
    """Parse a comma-separated file into a dataset.

    The last column is the response and must never equal ``na_token``; any
    other cell equal to ``na_token`` becomes a missing covariate.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row:
                continue
            rows.append((lineno, row))
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise DataError(f"{path}: need at least one covariate column plus a response")
    x, mask, y = [], [], []
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        *covs, resp = [c.strip() for c in row]
        if resp == na_token:
            raise DataError(f"{path}:{lineno}: response column is {na_token}")
        try:
            y.append(float(resp))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad response {resp!r}") from exc
        xr, mr = [], []
        for j, cell in enumerate(covs):
            if cell == na_token:
                xr.append(np.nan)
                mr.append(True)
            else:
                try:
                    xr.append(float(cell))
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad value {cell!r} in column {j + 1}") from exc
                mr.append(False)
        x.append(xr)
        mask.append(mr)
    return Dataset(np.array(x), np.array(mask), np.array(y))
