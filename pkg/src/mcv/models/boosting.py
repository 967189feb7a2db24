"""Gradient-boosted histogram trees: pinball-loss quantile pairs and a
logistic probability classifier.

Inputs are (values, mask) pairs; masked cells land in the NA bin, so models
score NA-bearing rows directly. Fitting is deterministic: same data, same
model, bit for bit. The ``rng`` arguments are accepted for interface
stability (reserved for subsampling) and are currently unused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import BinMapper
from .trees import Tree, grow_tree

PROBA_CLIP = 1e-6


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    max_bins: int = 64
    min_samples_leaf: int = 20
    l2: float = 0.0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("tree counts / depth / leaf size must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")


def empirical_quantile(a: np.ndarray, q: float) -> float:
    """Lower empirical quantile inf{z : F(z) >= q}."""
    a = np.sort(np.asarray(a, dtype=float))
    if a.size == 0:
        raise ValueError("empty sample")
    k = max(1, int(np.ceil(q * a.size)))
    return float(a[min(k, a.size) - 1])


def pinball_loss(y: np.ndarray, pred: np.ndarray, q: float) -> float:
    diff = y - pred
    return float(np.mean(np.where(diff >= 0, q * diff, (q - 1) * diff)))


class _Ensemble:
    """Shared fit/predict machinery for the boosted models."""

    def __init__(self, mapper: BinMapper, base_value: float, trees: list[Tree], params: BoostParams):
        self.mapper = mapper
        self.base_value = base_value
        self.trees = trees
        self.params = params

    def raw_predict(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        codes = self.mapper.transform(np.atleast_2d(x), None if mask is None else np.atleast_2d(mask))
        return self.raw_predict_codes(codes)

    def raw_predict_codes(self, codes: np.ndarray) -> np.ndarray:
        out = np.full(codes.shape[0], self.base_value)
        for tree in self.trees:
            tree.add_predictions(codes, out)
        return out


def _check_training_rows(x, mask, target):
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.ndim != 2:
        raise ValueError("training matrix must be 2-d")
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    if mask is None:
        mask = ~np.isfinite(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape or target.shape != (x.shape[0],):
        raise ValueError("inconsistent training shapes")
    return x, mask, target


class PinballModel(_Ensemble):
    """Boosted trees minimizing pinball loss at one quantile level.

    Each round grows the tree on the loss gradient (unit hessians), then
    refits every leaf with the empirical level-quantile of its residuals;
    convexity of the pinball loss makes the recorded training loss path
    non-increasing for any learning rate in (0, 1].
    """

    def __init__(self, mapper, base_value, trees, params, level, train_loss_path):
        super().__init__(mapper, base_value, trees, params)
        self.level = level
        self.train_loss_path_ = train_loss_path

    def predict(self, x, mask=None) -> np.ndarray:
        return self.raw_predict(x, mask)


def fit_pinball(x, mask, y, level: float, params: BoostParams | None = None, rng=None) -> PinballModel:
    if not 0 < level < 1:
        raise ValueError("quantile level must be in (0, 1)")
    params = params or BoostParams()
    x, mask, y = _check_training_rows(x, mask, y)
    mapper = BinMapper(params.max_bins).fit(x, mask)
    codes = mapper.transform(x, mask)
    rows = np.arange(x.shape[0], dtype=np.int64)
    hess = np.ones(x.shape[0])

    base = empirical_quantile(y, level)
    pred = np.full(x.shape[0], base)
    trees: list[Tree] = []
    loss_path = [pinball_loss(y, pred, level)]
    for _ in range(params.n_trees):
        diff = y - pred
        grad = np.where(diff > 0, -level, np.where(diff < 0, 1.0 - level, 0.0))
        tree, leaf_of_row = grow_tree(
            codes,
            rows,
            grad,
            hess,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            l2=params.l2,
            max_bins=params.max_bins,
        )
        # leaf refit: level-quantile of residuals, shrunk by the learning rate
        for leaf in np.unique(leaf_of_row):
            r = diff[leaf_of_row == leaf]
            tree.value[leaf] = params.learning_rate * empirical_quantile(r, level)
        tree.value[tree.is_leaf == 0] = 0.0
        trees.append(tree)
        tree.add_predictions(codes, pred)
        loss_path.append(pinball_loss(y, pred, level))
    return PinballModel(mapper, base, trees, params, level, np.array(loss_path))


class QuantilePair:
    """Two pinball regressors at levels alpha/2 and 1 - alpha/2."""

    def __init__(self, low: PinballModel, high: PinballModel):
        self.low = low
        self.high = high

    @property
    def levels(self) -> tuple[float, float]:
        return (self.low.level, self.high.level)

    def predict(self, x, mask=None) -> tuple[np.ndarray, np.ndarray]:
        return self.low.predict(x, mask), self.high.predict(x, mask)


def fit_quantile_pair(
    x,
    mask,
    y,
    alpha: float,
    params: BoostParams | None = None,
    rng=None,
    levels: tuple[float, float] | None = None,
) -> QuantilePair:
    """Fit the (alpha/2, 1 - alpha/2) pair used by the CQR score."""
    if levels is None:
        if not 0 < alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        levels = (alpha / 2.0, 1.0 - alpha / 2.0)
    low = fit_pinball(x, mask, y, levels[0], params, rng)
    high = fit_pinball(x, mask, y, levels[1], params, rng)
    return QuantilePair(low, high)


def predict_pair(pair: QuantilePair, x, mask=None) -> tuple[np.ndarray, np.ndarray]:
    return pair.predict(x, mask)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ProbClassifier(_Ensemble):
    """Boosted logistic classifier on histogram-binned features."""

    def predict_proba(self, x, mask=None) -> np.ndarray:
        return self.predict_proba_codes(self.mapper.transform(np.atleast_2d(x), None if mask is None else np.atleast_2d(mask)))

    def predict_proba_codes(self, codes: np.ndarray) -> np.ndarray:
        p = _sigmoid(self.raw_predict_codes(codes))
        return np.clip(p, PROBA_CLIP, 1.0 - PROBA_CLIP)


def fit_classifier(x, mask, labels, params: BoostParams | None = None, rng=None) -> ProbClassifier:
    params = params or BoostParams()
    x, mask, labels = _check_training_rows(x, mask, labels)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if labels.min() == labels.max():
        raise ValueError("training labels contain a single class")
    mapper = BinMapper(params.max_bins).fit(x, mask)
    codes = mapper.transform(x, mask)
    rows = np.arange(x.shape[0], dtype=np.int64)

    prior = float(np.clip(labels.mean(), PROBA_CLIP, 1.0 - PROBA_CLIP))
    base = float(np.log(prior / (1.0 - prior)))
    raw = np.full(x.shape[0], base)
    trees: list[Tree] = []
    for _ in range(params.n_trees):
        p = _sigmoid(raw)
        grad = p - labels
        hess = np.maximum(p * (1.0 - p), 1e-6)
        tree, _ = grow_tree(
            codes,
            rows,
            grad,
            hess,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            l2=params.l2,
            max_bins=params.max_bins,
        )
        tree.value *= params.learning_rate
        trees.append(tree)
        tree.add_predictions(codes, raw)
    return ProbClassifier(mapper, base, trees, params)


def predict_proba(clf: ProbClassifier, x, mask=None) -> np.ndarray:
    return clf.predict_proba(x, mask)
