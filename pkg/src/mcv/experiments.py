"""Experiment drivers reproducing the benchmark studies at desk scale.

Each repetition is an independent experiment with its own seed stream
(derived from (seed, repetition) so any parallel schedule gives identical
results): generate data, fit the imputer and the quantile pair, impute the
calibration split, optionally fit the likelihood-ratio model, then sweep
missingness patterns x test points x methods into trial reports.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .engines import (
    CqrScore,
    SearchSpec,
    arc_cp,
    coverage_hull,
    cp_mda_exact_idcal,
    interval_from_threshold,
    nested_star_components,
    split_cp_threshold,
    weighted_cp,
)
from .evaluation import (
    BoundReport,
    TrialReport,
    aggregate,
    build_pm_ptilde,
    miscoverage_bound,
    worst_case,
    write_cells_csv,
    write_metric_svg,
)
from .gaussian import (
    GaussianModel,
    PerturbSpec,
    equicorrelated_model,
    exact_ratio_model,
    gen_joint,
    mcar_mask_distribution,
    perturbed_impute_rows,
    perturbed_mean_completion,
)
from .imputation import ImputerConfig, fit_imputer, impute_dataset
from .masks import DataError, Dataset, Mask, PredictionInterval, load_csv
from .missingness import MissingnessSpec, calibrate, enumerate_patterns
from .models import BoostParams, fit_quantile_pair
from .ratios import RatioTrainSpec, estimate_normalizer, fit_ratio, perturb_ratio, ratio_quality

logger = logging.getLogger(__name__)

BENCHMARK_KINDS = (
    "synth-mcar",
    "synth-mar",
    "synth-mnar",
    "real-csv",
    "ablation-nocorrect",
    "impute-ablation",
)
KINDS = BENCHMARK_KINDS + ("ratio-quality", "bound-check")
METHODS = ("split", "mda-exact", "mda-nested", "mda-nested-star", "weighted", "arc")

# bound inflation applied to the largest calibration ratio when no true
# upper bound is known (the theory assumes one exists but not how to get it)
ARC_BOUND_INFLATION = 1.5


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    methods: tuple[str, ...] = ("split", "mda-exact", "mda-nested", "weighted", "arc")
    alpha: float = 0.1
    seed: int = 0
    n_train: int = 500
    n_cal: int = 100
    n_test_per_mask: int = 50
    n_reps: int = 100
    out_dir: str = "reports"
    jobs: int = 1
    # synthetic generative model
    d: int = 5
    rho: float = 0.8
    beta: tuple[float, ...] | None = None
    mu: float = 1.0
    noise_var: float = 1.0
    # missingness mechanism
    mechanism: str = "mcar"
    rate: float = 0.5
    maskable: tuple[int, ...] | None = None
    driver: tuple[int, ...] | None = None
    # imputation
    imp_rounds: int = 5
    imp_mode: str = "distributional"
    imp_use_response: bool = True
    # base models
    n_trees: int = 200
    tree_depth: int = 4
    learning_rate: float = 0.1
    max_bins: int = 64
    min_samples_leaf: int = 20
    # ratio estimation
    ratio_q: int = 5
    ratio_sampler: str = "empirical"
    # weighted-CP search
    grid_steps: int = 1000
    # oracle-world studies (ratio-quality / bound-check)
    perturb_scale: float = 1.5
    perturb_bias: float = 0.5
    perturb_inflation: float = 0.2
    fixed_mask: str = "11100"
    sigma_list: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    bound_extra_n: int = 1000
    # real-csv input
    csv_path: str | None = None
    na_token: str = "NA"
    csv_header: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_cal < 1 or self.n_train < 1 or self.n_reps < 1 or self.n_test_per_mask < 1:
            raise ValueError("sample sizes must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; valid: {', '.join(METHODS)}")
        if self.kind == "real-csv" and not self.csv_path:
            raise ValueError("real-csv experiments need csv_path")


def _boost_params(cfg: ExperimentConfig) -> BoostParams:
    return BoostParams(
        n_trees=cfg.n_trees,
        max_depth=cfg.tree_depth,
        learning_rate=cfg.learning_rate,
        max_bins=cfg.max_bins,
        min_samples_leaf=cfg.min_samples_leaf,
    )


def _imputer_config(cfg: ExperimentConfig) -> ImputerConfig:
    return ImputerConfig(n_rounds=cfg.imp_rounds, mode=cfg.imp_mode, use_response=cfg.imp_use_response)


def _model(cfg: ExperimentConfig) -> GaussianModel:
    return equicorrelated_model(cfg.d, cfg.rho, cfg.beta, cfg.mu, cfg.noise_var)


def _streams(cfg: ExperimentConfig, rep: int, names):
    ss = np.random.SeedSequence((cfg.seed, rep))
    return dict(zip(names, map(np.random.default_rng, ss.spawn(len(names)))))


@lru_cache(maxsize=8)
def _complete_csv_rows(path: str, na_token: str, header: bool):
    data = load_csv(path, na_token=na_token, header=header)
    keep = ~data.mask.any(axis=1)
    if not keep.all():
        logger.warning("%s: dropping %d rows with missing cells (benchmark needs ground truth)", path, int((~keep).sum()))
    if keep.sum() == 0:
        raise DataError(f"{path}: no complete rows")
    return np.array(data.x[keep]), np.array(data.y[keep])


def _missingness_sampler(cfg: ExperimentConfig, x_reference: np.ndarray, rng):
    spec = MissingnessSpec(
        mechanism=cfg.mechanism,
        rate=cfg.rate,
        maskable=cfg.maskable,
        driver=cfg.driver,
        exclude_full_mask=True,
    )
    return calibrate(spec, x_reference, rng)


def _test_groups(cfg, model, sampler, patterns, rng, pool=None):
    """Complete test points per pattern.

    MCAR: fresh draws per pattern (the conditional law is the marginal).
    MAR/MNAR: rejection-sample the mechanism until each pattern has enough
    points (patterns that stay too small are skipped with a warning).
    Real data: the held-out pool is reused for every pattern.
    """
    want = cfg.n_test_per_mask
    if pool is not None:
        x_pool, y_pool = pool
        return {m: (x_pool, y_pool) for m in patterns}
    if cfg.mechanism == "mcar":
        return {m: gen_joint(model, want, rng) for m in patterns}

    groups = {m: ([], []) for m in patterns}
    pending = set(patterns)
    attempts = 0
    max_attempts = 500 * want * len(patterns)
    while pending and attempts < max_attempts:
        batch = min(8192, max_attempts - attempts)
        x, y = gen_joint(model, batch, rng)
        masks = sampler.draw_many(x, rng)
        attempts += batch
        for m in list(pending):
            hit = np.flatnonzero((masks == m.bits).all(axis=1))
            if hit.size == 0:
                continue
            gx, gy = groups[m]
            need = want - len(gy)
            gx.extend(x[hit[:need]])
            gy.extend(y[hit[:need]])
            if len(gy) >= want:
                pending.discard(m)
    out = {}
    for m, (gx, gy) in groups.items():
        if len(gy) < max(5, want // 10):
            logger.warning("pattern %s: only %d test points collected; skipping", m.to_string(), len(gy))
            continue
        out[m] = (np.array(gx), np.array(gy))
    return out


def _tile_bits(m: Mask, n: int) -> np.ndarray:
    return np.tile(m.bits, (n, 1))


def _nested_intervals(cal_x, cal_mask, cal_y, score, alpha, id_cal, masked_test, m: Mask):
    """CP-MDA counting-rule intervals for a batch of test points (one mask)."""
    n_test = masked_test.shape[0]
    if id_cal.size == 0:
        return [PredictionInterval.entire_line()] * n_test
    unions = cal_mask[id_cal] | m.bits
    cal_vals = np.where(unions, np.nan, cal_x[id_cal])
    s = score.scores(cal_vals, unions, cal_y[id_cal])
    uniq, inv = np.unique(unions, axis=0, return_inverse=True)
    # bounds for every (test point, distinct union) pair in one prediction
    rep_test = np.repeat(masked_test, uniq.shape[0], axis=0)
    rep_union = np.tile(uniq, (n_test, 1))
    lo, hi = score.bounds(np.where(rep_union, np.nan, rep_test), rep_union)
    lo = lo.reshape(n_test, uniq.shape[0])
    hi = hi.reshape(n_test, uniq.shape[0])
    n_id = id_cal.size
    needed = n_id - math.ceil((1.0 - alpha) * (1 + n_id) - 1e-9) + 1
    out = []
    for i in range(n_test):
        a = lo[i][inv] - s
        b = hi[i][inv] + s
        out.append(coverage_hull(a, b, needed))
    return out


def _benchmark_rep(cfg: ExperimentConfig, rep: int) -> list[TrialReport]:
    streams = _streams(cfg, rep, ("data", "miss", "impute", "ratio", "arc", "test"))
    if cfg.kind == "real-csv":
        x_all, y_all = _complete_csv_rows(cfg.csv_path, cfg.na_token, cfg.csv_header)
        need = cfg.n_train + cfg.n_cal + cfg.n_test_per_mask
        if len(y_all) < need:
            raise DataError(f"{cfg.csv_path}: {len(y_all)} complete rows < {need} required")
        perm = streams["data"].permutation(len(y_all))
        tr, ca, te = np.split(perm, [cfg.n_train, cfg.n_train + cfg.n_cal])
        x_tr, y_tr = x_all[tr], y_all[tr]
        x_cal, y_cal = x_all[ca], y_all[ca]
        pool = (x_all[te[: cfg.n_test_per_mask]], y_all[te[: cfg.n_test_per_mask]])
        model = None
    else:
        model = _model(cfg)
        x_tr, y_tr = gen_joint(model, cfg.n_train, streams["data"])
        x_cal, y_cal = gen_joint(model, cfg.n_cal, streams["data"])
        pool = None

    sampler = _missingness_sampler(cfg, x_tr, streams["miss"])
    m_tr = sampler.draw_many(x_tr, streams["miss"])
    m_cal = sampler.draw_many(x_cal, streams["miss"])
    train_ds = Dataset(x_tr, m_tr, y_tr)
    cal_ds = Dataset(x_cal, m_cal, y_cal)

    params = _boost_params(cfg)
    imputer = fit_imputer(train_ds, _imputer_config(cfg))
    pair = fit_quantile_pair(train_ds.x, train_ds.mask, y_tr, cfg.alpha, params)
    score = CqrScore(pair)
    x_hat_cal = impute_dataset(imputer, cal_ds, streams["impute"])

    ratio = None
    if {"weighted", "arc"} & set(cfg.methods):
        x_hat_tr = impute_dataset(imputer, train_ds, streams["impute"])
        spec = RatioTrainSpec(q=cfg.ratio_q, sampler=cfg.ratio_sampler, bernoulli_p=cfg.rate)
        ratio = fit_ratio(x_hat_tr, m_tr, y_tr, spec, params, streams["ratio"])

    d = train_ds.dim
    patterns = enumerate_patterns(d, cfg.maskable, exclude_full=True)
    if len(patterns) > 256:
        raise ValueError(f"{len(patterns)} patterns; restrict `maskable` to at most 8 features")
    groups = _test_groups(cfg, model, sampler, patterns, streams["test"], pool)
    search = SearchSpec(n_steps=cfg.grid_steps)

    reports: list[TrialReport] = []
    for m in patterns:
        if m not in groups:
            continue
        x_te, y_te = groups[m]
        n_test = len(y_te)
        bits_te = _tile_bits(m, n_test)
        masked_test = np.where(m.bits, np.nan, x_te)
        lo_t, hi_t = score.bounds(masked_test, bits_te)

        vals_m = np.where(m.bits, np.nan, x_hat_cal)
        bits_cal = _tile_bits(m, len(y_cal))
        scores_m = score.scores(vals_m, bits_cal, y_cal)
        ratios_m = ratio.ratios(vals_m, bits_cal, y_cal) if ratio is not None else None

        intervals: dict[str, list[PredictionInterval]] = {}
        for method in cfg.methods:
            if method == "split":
                t = split_cp_threshold(scores_m, cfg.alpha)
                ivs = [interval_from_threshold(lo_t[i], hi_t[i], t) for i in range(n_test)]
            elif method == "weighted":
                ivs = [
                    weighted_cp(
                        scores_m,
                        ratios_m,
                        lo_t[i],
                        hi_t[i],
                        lambda grid, i=i: ratio.ratios_on_grid(masked_test[i], m, grid),
                        cfg.alpha,
                        search,
                    )
                    for i in range(n_test)
                ]
            elif method == "arc":
                omega_max = ratio.upper_bound
                if omega_max is None:
                    peak = float(ratios_m.max())
                    omega_max = ARC_BOUND_INFLATION * peak if peak > 0 else None
                if omega_max is None:
                    ivs = [PredictionInterval.entire_line()] * n_test
                else:
                    ivs = [
                        arc_cp(scores_m, ratios_m, omega_max, lo_t[i], hi_t[i], cfg.alpha, streams["arc"])
                        for i in range(n_test)
                    ]
            elif method in ("mda-exact", "mda-nested", "mda-nested-star"):
                id_exact = cp_mda_exact_idcal(cal_ds.mask, m)
                if method == "mda-exact":
                    id_cal = id_exact
                elif method == "mda-nested":
                    id_cal = np.arange(len(cal_ds))
                else:
                    # enough subset points for an informative threshold,
                    # otherwise fall back to the nested selection
                    floor_n = math.ceil((1.0 - cfg.alpha) / cfg.alpha)
                    id_cal = id_exact if id_exact.size >= floor_n else np.arange(len(cal_ds))
                if method == "mda-exact" and id_exact.size > 0:
                    # subset rows masked by m are identical in the raw and
                    # imputed matrices, so the per-mask scores are reusable
                    n_id = id_exact.size
                    needed = n_id - math.ceil((1.0 - cfg.alpha) * (1 + n_id) - 1e-9) + 1
                    s_sub = scores_m[id_exact]
                    ivs = [coverage_hull(lo_t[i] - s_sub, hi_t[i] + s_sub, needed) for i in range(n_test)]
                else:
                    ivs = _nested_intervals(cal_ds.x, cal_ds.mask, y_cal, score, cfg.alpha, id_cal, masked_test, m)
            else:  # pragma: no cover
                raise AssertionError(method)
            intervals[method] = ivs

        mask_str = m.to_string()
        for method, ivs in intervals.items():
            for i, iv in enumerate(ivs):
                reports.append(
                    TrialReport(
                        method=method,
                        mask=mask_str,
                        rep=rep,
                        covered=iv.contains(float(y_te[i])),
                        width=iv.width,
                    )
                )
    return reports


class _CompletionScore(CqrScore):
    """Quantile pair composed with a deterministic completion of its input.

    Mirrors the composed base model of the fixed-mask studies: masked
    coordinates are filled with the (perturbed) conditional mean given the
    observed block before the pair predicts, so the score is a measurable
    function of (observed block, response) evaluated identically on masked
    calibration and test rows.
    """

    def __init__(self, pair, model: GaussianModel, pspec: PerturbSpec):
        super().__init__(pair)
        self.model = model
        self.pspec = pspec

    def bounds(self, x_rows, mask_rows):
        mask_rows = np.asarray(mask_rows, dtype=bool)
        completed = perturbed_mean_completion(x_rows, mask_rows, self.model, self.pspec)
        return self.pair.predict(completed, np.zeros_like(mask_rows))


def _oracle_world(cfg: ExperimentConfig, rep: int):
    """Shared setup of the fixed-mask perturbed-imputation studies."""
    streams = _streams(cfg, rep, ("data", "miss", "impute", "ratio", "arc", "test", "extra"))
    model = _model(cfg)
    pspec = PerturbSpec(scale=cfg.perturb_scale, bias=cfg.perturb_bias, inflation=cfg.perturb_inflation)
    m_fixed = Mask.from_string(cfg.fixed_mask)
    if m_fixed.dim != cfg.d:
        raise ValueError("fixed_mask length must equal d")

    x_tr, y_tr = gen_joint(model, cfg.n_train, streams["data"])
    x_cal, y_cal = gen_joint(model, cfg.n_cal, streams["data"])
    x_te, y_te = gen_joint(model, cfg.n_test_per_mask, streams["data"])

    sampler = _missingness_sampler(cfg, x_tr, streams["miss"])
    m_tr = sampler.draw_many(x_tr, streams["miss"])
    m_cal = sampler.draw_many(x_cal, streams["miss"])

    x_hat_tr = perturbed_impute_rows(x_tr, m_tr, y_tr, model, pspec, streams["impute"])
    x_hat_cal = perturbed_impute_rows(x_cal, m_cal, y_cal, model, pspec, streams["impute"])
    # impute-then-regress: the pair is trained on the imputed training set
    # and composed with a deterministic completion at prediction time
    pair = fit_quantile_pair(x_hat_tr, np.zeros_like(m_tr), y_tr, cfg.alpha, _boost_params(cfg))
    score = _CompletionScore(pair, model, pspec)

    return {
        "streams": streams,
        "model": model,
        "pspec": pspec,
        "mask": m_fixed,
        "score": score,
        "train": (x_tr, m_tr, y_tr, x_hat_tr),
        "cal": (x_cal, m_cal, y_cal, x_hat_cal),
        "test": (x_te, y_te),
    }


def _masked_cal_arrays(world):
    m = world["mask"]
    _, _, y_cal, x_hat_cal = world["cal"]
    vals_m = np.where(m.bits, np.nan, x_hat_cal)
    bits = _tile_bits(m, len(y_cal))
    scores_m = world["score"].scores(vals_m, bits, y_cal)
    return vals_m, bits, scores_m


def _fixed_mask_coverage(world, cfg, intervals_fn):
    x_te, y_te = world["test"]
    m = world["mask"]
    masked_test = np.where(m.bits, np.nan, x_te)
    lo_t, hi_t = world["score"].bounds(masked_test, _tile_bits(m, len(y_te)))
    ivs = intervals_fn(masked_test, lo_t, hi_t)
    covered = np.array([iv.contains(float(y)) for iv, y in zip(ivs, y_te)])
    widths = np.array([iv.width for iv in ivs])
    finite = np.isfinite(widths)
    return float(covered.mean()), float(widths[finite].mean()) if finite.any() else math.inf


def _weighted_fn(world, cfg, ratio, scores_m, ratios_m):
    search = SearchSpec(n_steps=cfg.grid_steps)
    m = world["mask"]

    def fn(masked_test, lo_t, hi_t):
        return [
            weighted_cp(
                scores_m,
                ratios_m,
                lo_t[i],
                hi_t[i],
                lambda grid, i=i: ratio.ratios_on_grid(masked_test[i], m, grid),
                cfg.alpha,
                search,
            )
            for i in range(len(lo_t))
        ]

    return fn


def _ratio_quality_rep(cfg: ExperimentConfig, rep: int) -> list[dict]:
    world = _oracle_world(cfg, rep)
    m = world["mask"]
    x_tr, m_tr, y_tr, x_hat_tr = world["train"]
    _, _, y_cal, _ = world["cal"]
    vals_m, bits_cal, scores_m = _masked_cal_arrays(world)

    exact = exact_ratio_model(
        world["model"], world["pspec"], mcar_mask_distribution(cfg.d, cfg.rate, exclude_full=True)
    )
    spec = RatioTrainSpec(q=cfg.ratio_q, sampler=cfg.ratio_sampler, bernoulli_p=cfg.rate)
    est = fit_ratio(x_hat_tr, m_tr, y_tr, spec, _boost_params(cfg), world["streams"]["ratio"])

    rows = []

    def add_row(method, sigma, cov, width, corr):
        rows.append(
            {
                "rep": rep,
                "method": method,
                "sigma": sigma,
                "coverage": cov,
                "width_mean": width,
                "correlation": corr,
            }
        )

    t = split_cp_threshold(scores_m, cfg.alpha)
    cov, width = _fixed_mask_coverage(
        world, cfg, lambda mt, lo, hi: [interval_from_threshold(lo[i], hi[i], t) for i in range(len(lo))]
    )
    add_row("split", math.nan, cov, width, math.nan)

    for name, model_ratio in (("weighted-exact", exact), ("weighted-est", est)):
        ratios_m = model_ratio.ratios(vals_m, bits_cal, y_cal)
        cov, width = _fixed_mask_coverage(world, cfg, _weighted_fn(world, cfg, model_ratio, scores_m, ratios_m))
        corr = math.nan if model_ratio is exact else ratio_quality(model_ratio, exact, vals_m, bits_cal, y_cal)
        add_row(name, math.nan, cov, width, corr)

    exact_ratios_m = exact.ratios(vals_m, bits_cal, y_cal)
    peak = float(exact_ratios_m.max())
    if peak > 0:
        omega_max = ARC_BOUND_INFLATION * peak
        arc_rng = world["streams"]["arc"]
        cov, width = _fixed_mask_coverage(
            world,
            cfg,
            lambda mt, lo, hi: [
                arc_cp(scores_m, exact_ratios_m, omega_max, lo[i], hi[i], cfg.alpha, arc_rng)
                for i in range(len(lo))
            ],
        )
        add_row("arc-exact", math.nan, cov, width, math.nan)

    for k, sigma in enumerate(cfg.sigma_list):
        noisy = est if sigma == 0 else perturb_ratio(est, sigma, seed=(cfg.seed + 1) * 1_000_003 + rep * 101 + k)
        ratios_m = noisy.ratios(vals_m, bits_cal, y_cal)
        corr = ratio_quality(noisy, exact, vals_m, bits_cal, y_cal)
        cov, width = _fixed_mask_coverage(world, cfg, _weighted_fn(world, cfg, noisy, scores_m, ratios_m))
        add_row("weighted-noise", sigma, cov, width, corr)
    return rows


def _bound_check_rep(cfg: ExperimentConfig, rep: int) -> dict:
    world = _oracle_world(cfg, rep)
    m = world["mask"]
    x_tr, m_tr, y_tr, x_hat_tr = world["train"]
    _, _, y_cal, x_hat_cal = world["cal"]
    vals_m, bits_cal, scores_m = _masked_cal_arrays(world)

    spec = RatioTrainSpec(q=cfg.ratio_q, sampler=cfg.ratio_sampler, bernoulli_p=cfg.rate)
    est = fit_ratio(x_hat_tr, m_tr, y_tr, spec, _boost_params(cfg), world["streams"]["ratio"])
    tilde = estimate_normalizer(est, x_hat_cal, y_cal, m)
    ratios_m = tilde.ratios(vals_m, bits_cal, y_cal)
    coverage, _ = _fixed_mask_coverage(world, cfg, _weighted_fn(world, cfg, tilde, scores_m, ratios_m))

    streams = world["streams"]
    x_ex, y_ex = gen_joint(world["model"], cfg.bound_extra_n, streams["extra"])
    sampler = _missingness_sampler(cfg, x_ex, streams["extra"])
    m_ex = sampler.draw_many(x_ex, streams["extra"])
    extra = Dataset(x_ex, m_ex, y_ex)
    x_hat_ex = perturbed_impute_rows(x_ex, m_ex, y_ex, world["model"], world["pspec"], streams["extra"])
    pm, pt = build_pm_ptilde(extra, x_hat_ex, tilde, m, streams["extra"])
    risk, bound = miscoverage_bound(pm, pt, _boost_params(cfg), streams["extra"])
    return {
        "rep": rep,
        "coverage": coverage,
        "miscoverage": (1.0 - cfg.alpha) - coverage,
        "risk": risk,
        "bound": bound,
    }


_REP_FNS = {
    "benchmark": _benchmark_rep,
    "ratio-quality": _ratio_quality_rep,
    "bound-check": _bound_check_rep,
}


def _run_rep(args):
    fn_name, cfg, rep = args
    return _REP_FNS[fn_name](cfg, rep)


def _collect(cfg: ExperimentConfig, fn_name: str) -> list:
    tasks = [(fn_name, cfg, rep) for rep in range(cfg.n_reps)]
    if cfg.jobs <= 1:
        return [_run_rep(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_run_rep, tasks, chunksize=1))


def benchmark_reports(cfg: ExperimentConfig) -> list[TrialReport]:
    """All trial reports of a benchmark-kind experiment, repetition-ordered."""
    if cfg.kind not in BENCHMARK_KINDS:
        raise ValueError(f"{cfg.kind} is not a benchmark kind")
    out = []
    for rows in _collect(cfg, "benchmark"):
        out.extend(rows)
    return out


def ratio_quality_rows(cfg: ExperimentConfig) -> list[dict]:
    out = []
    for rows in _collect(cfg, "ratio-quality"):
        out.extend(rows)
    return out


def bound_check_rows(cfg: ExperimentConfig) -> list[BoundReport]:
    rows = _collect(cfg, "bound-check")
    return [BoundReport(cfg.fixed_mask, r["miscoverage"], r["bound"], r["risk"]) for r in rows]


def _write_rows_csv(path, header: list[str], rows: list[list]) -> None:
    def fmt(v):
        if isinstance(v, float):
            if math.isnan(v):
                return "nan"
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return f"{v:.6g}"
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configured experiment and write its report files."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result: dict = {"kind": cfg.kind, "out_dir": str(out_dir)}

    if cfg.kind in BENCHMARK_KINDS:
        if cfg.kind == "ablation-nocorrect":
            cfg = replace(cfg, methods=("split",))
        if cfg.kind == "impute-ablation":
            cfg = replace(cfg, imp_mode="deterministic")
        reports = benchmark_reports(cfg)
        cells = aggregate(reports)
        write_cells_csv(cells, out_dir / "cells.csv")
        write_metric_svg(cells, "coverage", out_dir / "coverage.svg", smooth_window=5, title=f"{cfg.kind}: coverage")
        write_metric_svg(cells, "width_mean", out_dir / "width.svg", smooth_window=5, title=f"{cfg.kind}: width")
        worst_rows = []
        for method in cfg.methods:
            w = worst_case(cells, method)
            worst_rows.append([method, w.mask, w.coverage, w.cov_ci, w.width_mean])
        _write_rows_csv(out_dir / "worst_case.csv", ["method", "mask", "coverage", "cov_ci", "width_mean"], worst_rows)
        result.update(cells=cells, reports=reports)
    elif cfg.kind == "ratio-quality":
        rows = ratio_quality_rows(cfg)
        header = ["rep", "method", "sigma", "coverage", "width_mean", "correlation"]
        _write_rows_csv(out_dir / "ratio_quality.csv", header, [[r[k] for k in header] for r in rows])
        summary = {}
        for r in rows:
            summary.setdefault((r["method"], r["sigma"]), []).append(r)
        srows = []
        for (method, sigma), rs in sorted(summary.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            srows.append(
                [
                    method,
                    sigma,
                    float(np.mean([r["coverage"] for r in rs])),
                    float(np.mean([r["width_mean"] for r in rs])),
                    float(np.nanmean([r["correlation"] for r in rs])),
                ]
            )
        _write_rows_csv(out_dir / "ratio_quality_summary.csv", ["method", "sigma", "coverage", "width_mean", "correlation"], srows)
        result.update(rows=rows)
    else:  # bound-check
        rows = bound_check_rows(cfg)
        _write_rows_csv(
            out_dir / "bound_check.csv",
            ["mask", "miscoverage", "bound", "risk"],
            [[r.mask, r.miscoverage, r.bound, r.risk] for r in rows],
        )
        frac = float(np.mean([r.miscoverage <= r.bound for r in rows]))
        _write_rows_csv(out_dir / "bound_summary.csv", ["n_reps", "frac_bounded"], [[len(rows), frac]])
        result.update(rows=rows, frac_bounded=frac)
    return result
