"""Learned components consumed as black boxes by the conformal engines."""

from .binning import BinMapper
from .boosting import (
    BoostParams,
    PinballModel,
    ProbClassifier,
    QuantilePair,
    fit_classifier,
    fit_pinball,
    fit_quantile_pair,
    predict_pair,
    predict_proba,
)

__all__ = [
    "BinMapper",
    "BoostParams",
    "PinballModel",
    "ProbClassifier",
    "QuantilePair",
    "fit_classifier",
    "fit_pinball",
    "fit_quantile_pair",
    "predict_pair",
    "predict_proba",
]
