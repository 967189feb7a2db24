"""Closed-form Gaussian world: data generation, exact conditionals,
perturbed imputation, exact density ratios, and oracle interval widths.

The generative truth is X ~ N(mu, Sigma), Y = beta.X + eps with Gaussian
noise, so (X, Y) is jointly Gaussian and every conditional below is a Schur
complement. The perturbed imputer draws the missing block from
N(scale * conditional_mean + bias, conditional_cov + inflation * I); because
that mean is affine in the conditioning variables, the law of an imputed
point given its calibration mask is again Gaussian, and the
imputed-then-masked calibration law is a finite Gaussian mixture over
calibration masks. That closed form is what the exact ratio evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .masks import Mask
from .ratios import RatioModel

__all__ = [
    "GaussianModel",
    "ConditionalGaussian",
    "PerturbSpec",
    "DEFAULT_BETA",
    "equicorrelated_model",
    "gen_joint",
    "conditional",
    "perturbed_impute",
    "perturbed_impute_rows",
    "imputed_joint_params",
    "mcar_mask_distribution",
    "exact_ratio_model",
    "oracle_width",
]

# regression coefficients of the default synthetic instance; lower-dimensional
# variants take a prefix
DEFAULT_BETA = (1.0, 2.0, -1.0, 3.0, -0.5, -1.0, 0.3, 1.7, 0.4, -0.3)

_JITTER = 1e-10


def _chol(a: np.ndarray, jitter: float = _JITTER) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Mean, covariance, regression coefficients, and noise variance."""

    mu: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    noise_var: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        d = mu.size
        if sigma.shape != (d, d) or beta.shape != (d,):
            raise ValueError("inconsistent model dimensions")
        if not np.allclose(sigma, sigma.T, atol=1e-8):
            raise ValueError("sigma must be symmetric")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        try:
            _chol(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma is not PSD (Cholesky failed at 1e-10 jitter)") from exc
        for arr in (mu, sigma, beta):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.mu.size

    def joint_mean(self) -> np.ndarray:
        """Mean of (X, Y), response last."""
        return np.concatenate([self.mu, [float(self.beta @ self.mu)]])

    def joint_cov(self) -> np.ndarray:
        """Covariance of (X, Y), response last."""
        d = self.dim
        out = np.empty((d + 1, d + 1))
        out[:d, :d] = self.sigma
        sb = self.sigma @ self.beta
        out[:d, d] = sb
        out[d, :d] = sb
        out[d, d] = self.beta @ sb + self.noise_var
        return out


def equicorrelated_model(d: int, rho: float = 0.8, beta=None, mu: float = 1.0, noise_var: float = 1.0) -> GaussianModel:
    """The synthetic instance: unit-variance equicorrelated covariates."""
    if beta is None:
        if d > len(DEFAULT_BETA):
            raise ValueError(f"no default beta beyond d={len(DEFAULT_BETA)}")
        beta = DEFAULT_BETA[:d]
    sigma = rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d)
    return GaussianModel(np.full(d, float(mu)), sigma, np.asarray(beta, dtype=float), noise_var)


@dataclass(frozen=True, eq=False)
class ConditionalGaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("mean/cov size mismatch")
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise ValueError("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class PerturbSpec:
    """Controlled distortion of the exact conditional imputer.

    ``scale`` multiplies the conditional mean, ``bias`` shifts it (scalar
    broadcasts over the missing block), ``inflation`` adds to the diagonal
    of the conditional covariance.
    """

    scale: float = 1.0
    bias: float = 0.0
    inflation: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.inflation < 0:
            raise ValueError("inflation must be nonnegative")

    def bias_vector(self, k: int) -> np.ndarray:
        b = np.asarray(self.bias, dtype=float)
        return np.full(k, float(b)) if b.ndim == 0 else b


def gen_joint(model: GaussianModel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n i.i.d. draws of (X, Y)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    chol = _chol(model.sigma)
    x = model.mu + rng.standard_normal((n, model.dim)) @ chol.T
    y = x @ model.beta + np.sqrt(model.noise_var) * rng.standard_normal(n)
    return x, y


def _schur(mean: np.ndarray, cov: np.ndarray, target: np.ndarray, cond: np.ndarray, cond_vals: np.ndarray):
    """Conditional (mean, cov) of ``target`` coords given ``cond`` coords."""
    if cond.size == 0:
        return mean[target].copy(), cov[np.ix_(target, target)].copy()
    c_tt = cov[np.ix_(target, target)]
    c_tc = cov[np.ix_(target, cond)]
    c_cc = cov[np.ix_(cond, cond)]
    chol = _chol(c_cc)
    z = np.linalg.solve(chol, (cond_vals - mean[cond]) if cond_vals.ndim == 1 else (cond_vals - mean[cond]).T)
    w = np.linalg.solve(chol, c_tc.T)
    cond_mean = mean[target] + (w.T @ z).T
    cond_cov = c_tt - w.T @ w
    return cond_mean, cond_cov


def conditional(
    model: GaussianModel,
    obs_idx,
    obs_vals,
    include_y: bool = False,
    y: float | None = None,
) -> ConditionalGaussian:
    """Distribution of the missing covariate block given the observed one.

    With ``include_y`` the response enters the conditioning set, which is
    the form the imputer needs; without it, the form the oracle width
    needs. An empty ``obs_idx`` is allowed (the conditional degenerates to
    the prior marginal, or to conditioning on Y alone).
    """
    obs_idx = np.asarray(obs_idx, dtype=int)
    obs_vals = np.asarray(obs_vals, dtype=float)
    if obs_vals.shape != (obs_idx.size,):
        raise ValueError("obs_vals must match obs_idx")
    d = model.dim
    mis = np.setdiff1d(np.arange(d), obs_idx)
    if mis.size == 0:
        raise ValueError("nothing to condition: no missing coordinates")
    if include_y:
        if y is None:
            raise ValueError("y required when include_y")
        mean, cov = model.joint_mean(), model.joint_cov()
        cond = np.concatenate([obs_idx, [d]])
        vals = np.concatenate([obs_vals, [float(y)]])
    else:
        mean, cov = model.mu, model.sigma
        cond = obs_idx
        vals = obs_vals
    m, c = _schur(mean, cov, mis, cond, vals)
    return ConditionalGaussian(m, c)


def perturbed_impute(sample, model: GaussianModel, spec: PerturbSpec, rng: np.random.Generator) -> np.ndarray:
    """Fill one sample's missing block from the perturbed conditional.

    Observed coordinates are copied unchanged; the draw conditions on both
    the observed covariates and the response.
    """
    x, mask, y = sample.x, sample.mask, sample.y
    if mask.n_missing == 0:
        raise ValueError("sample has no missing coordinate")
    out = perturbed_impute_rows(x[None, :], mask.bits[None, :], np.array([y]), model, spec, rng)
    return out[0]


def perturbed_impute_rows(
    x_rows: np.ndarray,
    mask_rows: np.ndarray,
    y: np.ndarray,
    model: GaussianModel,
    spec: PerturbSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized perturbed imputation; rows are grouped by mask pattern.

    Pattern groups are processed in lexicographic order so draws are
    reproducible for a given generator state.
    """
    x_rows = np.asarray(x_rows, dtype=float)
    mask_rows = np.asarray(mask_rows, dtype=bool)
    y = np.asarray(y, dtype=float)
    out = x_rows.copy()
    d = model.dim
    mean_j, cov_j = model.joint_mean(), model.joint_cov()

    patterns = {}
    for i, bits in enumerate(mask_rows):
        patterns.setdefault(bits.tobytes(), []).append(i)
    for key in sorted(patterns):
        rows = np.array(patterns[key])
        bits = np.frombuffer(key, dtype=bool)
        mis = np.flatnonzero(bits)
        if mis.size == 0:
            continue
        obs = np.flatnonzero(~bits)
        cond = np.concatenate([obs, [d]])
        vals = np.column_stack([x_rows[np.ix_(rows, obs)], y[rows]])
        cmean, ccov = _schur(mean_j, cov_j, mis, cond, vals)
        cmean = np.atleast_2d(cmean)
        mean_tilde = spec.scale * cmean + spec.bias_vector(mis.size)
        cov_tilde = ccov + spec.inflation * np.eye(mis.size)
        chol = _chol(cov_tilde)
        draws = mean_tilde + rng.standard_normal((rows.size, mis.size)) @ chol.T
        out[np.ix_(rows, mis)] = draws
    return out


def perturbed_mean_completion(
    x_rows: np.ndarray,
    mask_rows: np.ndarray,
    model: GaussianModel,
    spec: PerturbSpec,
) -> np.ndarray:
    """Deterministic completion: scale * E[X_mis | X_obs] + bias.

    This is the response-free counterpart of the perturbed imputer, usable
    inside a score model at prediction time (the response is unknown
    there). Inflation plays no role in a mean completion.
    """
    x_rows = np.asarray(x_rows, dtype=float)
    mask_rows = np.asarray(mask_rows, dtype=bool)
    out = x_rows.copy()
    patterns = {}
    for i, bits in enumerate(mask_rows):
        patterns.setdefault(bits.tobytes(), []).append(i)
    for key in sorted(patterns):
        rows = np.array(patterns[key])
        bits = np.frombuffer(key, dtype=bool)
        mis = np.flatnonzero(bits)
        if mis.size == 0:
            continue
        obs = np.flatnonzero(~bits)
        cmean, _ = _schur(model.mu, model.sigma, mis, obs, x_rows[np.ix_(rows, obs)])
        out[np.ix_(rows, mis)] = spec.scale * np.atleast_2d(cmean) + spec.bias_vector(mis.size)
    return out


def imputed_joint_params(model: GaussianModel, cal_mask: Mask, spec: PerturbSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of (imputed X, Y) given the calibration mask.

    With s = missing block and V = (observed block, Y):
      imputed_s = scale * (mu_s + C (V - mu_V)) + bias + noise,
    C the conditional gain and the noise N(0, cond_cov + inflation I), so
      E[s] = scale * mu_s + bias,
      Cov(s, V) = scale * Sigma_sV,
      Var(s) = scale^2 Sigma_sV Sigma_V^-1 Sigma_Vs + cond_cov + inflation I.
    """
    d = model.dim
    mean_j, cov_j = model.joint_mean(), model.joint_cov()
    mis = cal_mask.missing_indices()
    if mis.size == 0:
        return mean_j, cov_j
    obs = cal_mask.observed_indices()
    v_idx = np.concatenate([obs, [d]])

    mean = mean_j.copy()
    cov = cov_j.copy()
    s_v = cov_j[np.ix_(mis, v_idx)]
    v_v = cov_j[np.ix_(v_idx, v_idx)]
    s_s = cov_j[np.ix_(mis, mis)]
    chol = _chol(v_v)
    w = np.linalg.solve(chol, s_v.T)  # w.T w = Sigma_sV Sigma_V^-1 Sigma_Vs
    explained = w.T @ w
    cond_cov = s_s - explained

    a = spec.scale
    mean[mis] = a * mean_j[mis] + spec.bias_vector(mis.size)
    cov[np.ix_(mis, v_idx)] = a * s_v
    cov[np.ix_(v_idx, mis)] = a * s_v.T
    cov[np.ix_(mis, mis)] = a * a * explained + cond_cov + spec.inflation * np.eye(mis.size)
    return mean, cov


def mcar_mask_distribution(d: int, p: float, maskable=None, exclude_full: bool = True) -> list[tuple[Mask, float]]:
    """Exact pattern probabilities of per-feature Bernoulli(p) masking.

    ``exclude_full`` renormalizes after dropping the completely missing
    pattern, matching the pipeline's redraw convention.
    """
    idx = np.arange(d) if maskable is None else np.asarray(sorted(maskable), dtype=int)
    out = []
    total = 0.0
    for code in range(2 ** idx.size):
        bits = np.zeros(d, dtype=bool)
        k = 0
        for j, feat in enumerate(idx):
            if code >> j & 1:
                bits[feat] = True
                k += 1
        if exclude_full and bits.all():
            continue
        prob = p**k * (1.0 - p) ** (idx.size - k)
        out.append((Mask(bits), prob))
        total += prob
    if total <= 0:
        raise ValueError("degenerate mask distribution")
    return [(m, w / total) for m, w in out]


class _MvnDensity:
    """Frozen multivariate normal restricted to a coordinate subset."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray, keep: np.ndarray):
        self.mean = mean[keep]
        self.chol = _chol(cov[np.ix_(keep, keep)])
        self.logdet = float(np.sum(np.log(np.diag(self.chol))))
        self.k = keep.size

    def logpdf(self, v: np.ndarray) -> np.ndarray:
        z = np.linalg.solve(self.chol, (v - self.mean).T)
        return -0.5 * np.sum(z * z, axis=0) - self.logdet - 0.5 * self.k * np.log(2.0 * np.pi)


def exact_ratio_model(
    model: GaussianModel,
    spec: PerturbSpec,
    mask_distribution: list[tuple[Mask, float]],
) -> RatioModel:
    """Exact likelihood ratio between the true and the imputed-then-masked law.

    The numerator is the Gaussian marginal of (observed block, Y) under the
    generative model (the MCAR conditional law); the denominator is the
    Gaussian mixture induced by perturbed imputation over the calibration
    mask distribution.
    """
    d = model.dim
    mean_j, cov_j = model.joint_mean(), model.joint_cov()
    comp_params = [(np.log(w), *imputed_joint_params(model, m, spec)) for m, w in mask_distribution]

    cache: dict[bytes, tuple[_MvnDensity, list[tuple[float, _MvnDensity]]]] = {}

    def densities_for(bits: np.ndarray):
        key = bits.tobytes()
        if key not in cache:
            keep = np.concatenate([np.flatnonzero(~bits), [d]])
            num = _MvnDensity(mean_j, cov_j, keep)
            comps = [(lw, _MvnDensity(mn, cv, keep)) for lw, mn, cv in comp_params]
            cache[key] = (num, comps)
        return cache[key]

    def log_ratio(x_values: np.ndarray, mask_bits: np.ndarray, y: np.ndarray) -> np.ndarray:
        x_values = np.atleast_2d(np.asarray(x_values, dtype=float))
        mask_bits = np.atleast_2d(np.asarray(mask_bits, dtype=bool))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        bits = mask_bits[0]
        if not (mask_bits == bits).all():
            raise ValueError("exact ratio evaluates one mask pattern per call")
        num, comps = densities_for(bits)
        v = np.column_stack([x_values[:, ~bits], y])
        lp = num.logpdf(v)
        lq = logsumexp(np.stack([lw + dens.logpdf(v) for lw, dens in comps]), axis=0)
        return lp - lq

    return RatioModel(log_ratio_fn=log_ratio, name="exact-gaussian")


def oracle_width(model: GaussianModel, m: Mask, alpha: float) -> float:
    """Width of the narrowest valid interval given the observed block.

    Var(Y | X_obs) = beta_mis' Cond(X_mis | X_obs) beta_mis + noise_var by
    the regression decomposition; the width is the central normal interval.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    mis = m.missing_indices()
    if mis.size == 0:
        var = model.noise_var
    else:
        obs = m.observed_indices()
        if obs.size == 0:
            cond_cov = model.sigma
        else:
            _, cond_cov = _schur(model.mu, model.sigma, mis, obs, model.mu[obs])
        b = model.beta[mis]
        var = float(b @ cond_cov @ b) + model.noise_var
    return float(2.0 * norm.ppf(1.0 - alpha / 2.0) * np.sqrt(var))
