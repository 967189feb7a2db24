"""Coverage/width aggregation with confidence intervals, the estimable
miscoverage-bound machinery, and deterministic report files.

Aggregation follows the repetition protocol: trials are averaged within a
repetition first, and confidence intervals are computed across repetition
means. Infinite widths never enter a mean; they are reported as a separate
infinite fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .masks import Dataset, Mask
from .models import BoostParams, fit_classifier

__all__ = [
    "TrialReport",
    "CellStats",
    "BoundReport",
    "aggregate",
    "worst_case",
    "build_pm_ptilde",
    "miscoverage_bound",
    "moving_average",
    "write_cells_csv",
    "write_metric_svg",
]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class TrialReport:
    """One (method, mask, repetition, test point) outcome."""

    method: str
    mask: str
    rep: int
    covered: bool
    width: float

    def __post_init__(self):
        if not (self.width >= 0 or math.isinf(self.width)):
            raise ValueError("width must be nonnegative or infinite")


@dataclass(frozen=True)
class CellStats:
    method: str
    mask: str
    n_reps: int
    coverage: float
    cov_ci: float
    width_mean: float
    width_ci: float
    inf_frac: float


@dataclass(frozen=True)
class BoundReport:
    """Per-repetition comparison of observed miscoverage against 1 - 2R."""

    mask: str
    miscoverage: float
    bound: float
    risk: float


def _ci_half(values: np.ndarray) -> float:
    if values.size < 2:
        return math.nan
    return float(_Z95 * values.std(ddof=1) / math.sqrt(values.size))


def aggregate(reports, ci: str = "normal") -> list[CellStats]:
    """Per-(method, mask) coverage and width summaries across repetitions.

    ``ci="binomial"`` switches the coverage interval to Clopper-Pearson on
    the pooled trial counts; the default is the normal approximation over
    repetition means.
    """
    if ci not in ("normal", "binomial"):
        raise ValueError("ci must be 'normal' or 'binomial'")
    cells: dict[tuple[str, str], dict[int, list[TrialReport]]] = {}
    for r in reports:
        cells.setdefault((r.method, r.mask), {}).setdefault(r.rep, []).append(r)
    out = []
    for (method, mask), reps in sorted(cells.items()):
        cov_means, width_means = [], []
        n_trials = n_inf = n_cov = 0
        for rep in sorted(reps):
            rows = reps[rep]
            if not rows:
                raise ValueError(f"empty cell ({method}, {mask}, rep {rep})")
            covered = np.array([t.covered for t in rows])
            widths = np.array([t.width for t in rows])
            finite = np.isfinite(widths)
            cov_means.append(covered.mean())
            if finite.any():
                width_means.append(widths[finite].mean())
            n_trials += len(rows)
            n_inf += int((~finite).sum())
            n_cov += int(covered.sum())
        cov_means = np.array(cov_means)
        width_means = np.array(width_means)
        if ci == "normal":
            cov_ci = _ci_half(cov_means)
        else:
            lo = beta_dist.ppf(0.025, n_cov, n_trials - n_cov + 1) if n_cov > 0 else 0.0
            hi = beta_dist.ppf(0.975, n_cov + 1, n_trials - n_cov) if n_cov < n_trials else 1.0
            cov_ci = float((hi - lo) / 2.0)
        out.append(
            CellStats(
                method=method,
                mask=mask,
                n_reps=len(reps),
                coverage=float(cov_means.mean()),
                cov_ci=cov_ci,
                width_mean=float(width_means.mean()) if width_means.size else math.inf,
                width_ci=_ci_half(width_means) if width_means.size else math.nan,
                inf_frac=n_inf / n_trials,
            )
        )
    if not out:
        raise ValueError("no reports to aggregate")
    return out


def worst_case(cells, method: str) -> CellStats:
    """The mask with the lowest mean coverage for one method."""
    rows = [c for c in cells if c.method == method]
    if not rows:
        raise ValueError(f"no cells for method {method!r}")
    return min(rows, key=lambda c: (c.coverage, c.mask))


def build_pm_ptilde(
    extra: Dataset,
    x_imputed: np.ndarray,
    ratio_tilde,
    m: Mask,
    rng: np.random.Generator,
    k_tilde: float | None = None,
):
    """Balanced samples from the true and the reweighted calibration law.

    The first sample keeps the rows whose real pattern equals ``m`` (their
    observed block plus response follows the mask-conditional law by
    definition). The second accept-rejects the imputed-then-masked rows
    with probability ratio / k_tilde. Both are returned masked by ``m`` as
    (values, response) pairs of equal length.
    """
    bits = m.bits
    exact_rows = np.flatnonzero((extra.mask == bits).all(axis=1))
    pm_vals = extra.x[exact_rows]
    pm_y = extra.y[exact_rows]

    masked_vals = np.where(bits, np.nan, np.asarray(x_imputed, dtype=float))
    ratios = ratio_tilde.ratios(masked_vals, np.tile(bits, (len(extra), 1)), extra.y)
    sup = float(ratios.max())
    if k_tilde is None:
        k_tilde = sup
    elif k_tilde < sup:
        raise ValueError("k_tilde must dominate the ratio over the batch")
    if k_tilde <= 0:
        raise ValueError("degenerate ratio (all zero)")
    accepted = np.flatnonzero(rng.random(len(extra)) <= ratios / k_tilde)
    pt_vals = masked_vals[accepted]
    pt_y = extra.y[accepted]

    if exact_rows.size == 0 or accepted.size == 0:
        raise ValueError("one of the two samples is empty")
    l = min(exact_rows.size, accepted.size)
    pm_keep = rng.permutation(exact_rows.size)[:l]
    pt_keep = rng.permutation(accepted.size)[:l]
    return (pm_vals[pm_keep], pm_y[pm_keep]), (pt_vals[pt_keep], pt_y[pt_keep])


def miscoverage_bound(pm, pt, params: BoostParams | None = None, rng: np.random.Generator | None = None):
    """Held-out 0-1 risk of a two-sample classifier and the bound 1 - 2R.

    Indistinguishable samples give risk near 1/2 and a bound near zero;
    separable samples give risk near zero and a bound near one.
    """
    rng = rng or np.random.default_rng()
    (pm_vals, pm_y), (pt_vals, pt_y) = pm, pt
    if len(pm_y) < 20 or len(pt_y) < 20:
        raise ValueError("need at least 20 points per sample")
    feats = np.vstack([np.column_stack([pm_vals, pm_y]), np.column_stack([pt_vals, pt_y])])
    labels = np.concatenate([np.ones(len(pm_y)), np.zeros(len(pt_y))])
    order = rng.permutation(len(labels))
    feats, labels = feats[order], labels[order]
    half = len(labels) // 2
    clf = fit_classifier(feats[:half], None, labels[:half], params, rng)
    pred = clf.predict_proba(feats[half:], None) > 0.5
    risk = float((pred != (labels[half:] == 1)).mean())
    bound = float(np.clip(1.0 - 2.0 * risk, 0.0, 1.0))
    return risk, bound


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with the window clipped at the edges."""
    values = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    out = np.empty_like(values)
    for i in range(values.size):
        lo = max(0, i - half)
        hi = min(values.size, i + half + 1)
        out[i] = values[lo:hi].mean()
    return out


def _fmt(v: float) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


def write_cells_csv(cells, path) -> None:
    lines = ["method,mask,n_reps,coverage,cov_ci,width_mean,width_ci,inf_frac"]
    for c in sorted(cells, key=lambda c: (c.method, c.mask)):
        lines.append(
            ",".join(
                [
                    c.method,
                    c.mask,
                    str(c.n_reps),
                    _fmt(c.coverage),
                    _fmt(c.cov_ci),
                    _fmt(c.width_mean),
                    _fmt(c.width_ci),
                    _fmt(c.inf_frac),
                ]
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def write_metric_svg(cells, metric: str, path, smooth_window: int | None = 5, title: str | None = None) -> None:
    """One polyline per method over lexicographically sorted masks.

    Infinite and NaN cell values are dropped from the polyline (the CSV
    still carries them); optional window smoothing is applied per method.
    """
    if metric not in ("coverage", "width_mean"):
        raise ValueError("metric must be 'coverage' or 'width_mean'")
    masks = sorted({c.mask for c in cells})
    methods = sorted({c.method for c in cells})
    by_key = {(c.method, c.mask): getattr(c, metric) for c in cells}

    w, h = 860.0, 420.0
    ml, mr, mt, mb = 60.0, 170.0, 30.0, 60.0
    px, py = w - ml - mr, h - mt - mb

    series = {}
    finite_vals = []
    for method in methods:
        vals = np.array([by_key.get((method, mk), math.nan) for mk in masks], dtype=float)
        ok = np.isfinite(vals)
        if smooth_window and smooth_window > 1 and ok.all() and vals.size:
            vals = moving_average(vals, smooth_window)
        series[method] = vals
        finite_vals.extend(vals[np.isfinite(vals)].tolist())
    if not finite_vals:
        raise ValueError("nothing finite to plot")
    lo, hi = min(finite_vals), max(finite_vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def xpos(i):
        return ml + (px * i / max(1, len(masks) - 1))

    def ypos(v):
        return mt + py * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}" font-family="monospace" font-size="11">',
        f'<rect width="{w:.0f}" height="{h:.0f}" fill="white"/>',
        f'<line x1="{ml:.1f}" y1="{mt:.1f}" x2="{ml:.1f}" y2="{h - mb:.1f}" stroke="black"/>',
        f'<line x1="{ml:.1f}" y1="{h - mb:.1f}" x2="{w - mr:.1f}" y2="{h - mb:.1f}" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{ml:.1f}" y="{mt - 10:.1f}">{title}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        yy = ypos(v)
        parts.append(f'<line x1="{ml - 4:.1f}" y1="{yy:.1f}" x2="{ml:.1f}" y2="{yy:.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8:.1f}" y="{yy + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    step = max(1, len(masks) // 16)
    for i in range(0, len(masks), step):
        xx = xpos(i)
        parts.append(f'<line x1="{xx:.1f}" y1="{h - mb:.1f}" x2="{xx:.1f}" y2="{h - mb + 4:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{xx:.1f}" y="{h - mb + 8:.1f}" text-anchor="start" '
            f'transform="rotate(45 {xx:.1f} {h - mb + 8:.1f})">{masks[i]}</text>'
        )
    parts.append(f'<text x="{(ml + w - mr) / 2:.1f}" y="{h - 8:.1f}" text-anchor="middle">mask</text>')
    parts.append(
        f'<text x="14" y="{(mt + h - mb) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(mt + h - mb) / 2:.1f})">{metric}</text>'
    )
    for mi, method in enumerate(methods):
        color = _PALETTE[mi % len(_PALETTE)]
        vals = series[method]
        pts = [f"{xpos(i):.1f},{ypos(v):.1f}" for i, v in enumerate(vals) if np.isfinite(v)]
        if pts:
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = mt + 16 * (mi + 1)
        parts.append(f'<line x1="{w - mr + 10:.1f}" y1="{ly:.1f}" x2="{w - mr + 34:.1f}" y2="{ly:.1f}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{w - mr + 40:.1f}" y="{ly + 4:.1f}">{method}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
