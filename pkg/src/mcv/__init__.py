"""Conformal prediction under missing covariates.

Calibration data is imputed once, masked to match the test point's
missingness pattern, and the induced distribution shift is corrected either
by response-dependent weighting or by acceptance-rejection subsampling.
CP-MDA baselines and an exact Gaussian oracle support the benchmark
harness (see the ``mcv`` CLI).
"""

from .engines import (
    CqrScore,
    SearchSpec,
    arc_cp,
    arc_select,
    cp_mda_exact_idcal,
    cp_mda_nested_star,
    interval_from_threshold,
    split_cp_threshold,
    weighted_cp,
    weighted_quantile,
)
from .masks import Dataset, Mask, MaskedSample, PredictionInterval, load_csv, mask_apply, mask_union

__all__ = [
    "CqrScore",
    "Dataset",
    "Mask",
    "MaskedSample",
    "PredictionInterval",
    "SearchSpec",
    "arc_cp",
    "arc_select",
    "cp_mda_exact_idcal",
    "cp_mda_nested_star",
    "interval_from_threshold",
    "load_csv",
    "mask_apply",
    "mask_union",
    "split_cp_threshold",
    "weighted_cp",
    "weighted_quantile",
]

__version__ = "0.1.0"
