"""Standardized statistics and confidence regions for low-rank fits.

Everything here standardizes a squared estimation error by a closed
form center and scale; no debiasing step or resampling is involved.
The plug-in variants replace the signal strengths and the noise level
by estimates computed from the observed tensor itself.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import ArgumentError, NumericError
from .tenalg import as_tensor3, _unfold, _mode_dot

__all__ = [
    "NoiseModel",
    "InferenceReport",
    "LinearFormQuery",
    "normal_quantile_upper",
    "lambda_norms",
    "estimate_lambda_sigma_pca",
    "noise_adjusted_singular_values",
    "pca_subspace_statistic",
    "pca_confidence_region_radius",
    "regression_statistic_and_region",
    "sigma_split_estimate",
    "orth_component_statistic",
    "rank1_linear_form_statistic",
    "entrywise_statistic",
    "entrywise_ci",
    "rank1_subgaussian_statistic",
]

_NU_BY_KIND = {"gaussian": 3.0, "rademacher": 1.0}


@dataclass(frozen=True)
class NoiseModel:
    """Noise description: kind, level, and fourth-moment ratio nu.

    nu = E z^4 / (E z^2)^2 of a single noise entry; 3 for Gaussian and
    1 for Rademacher.  nu is never estimated from data.
    """

    kind: str = "gaussian"
    sigma: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in _NU_BY_KIND:
            raise ArgumentError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ArgumentError(f"sigma must be nonnegative, got {self.sigma}")
        nu = _NU_BY_KIND[self.kind] if self.nu is None else float(self.nu)
        if nu < 1.0:
            raise ArgumentError(f"nu must be at least 1, got {nu}")
        object.__setattr__(self, "nu", nu)


@dataclass(frozen=True)
class InferenceReport:
    """Standardized statistic together with the parts that built it.

    statistic = (raw - center) / scale.  ``radius`` is the confidence
    region boundary when a level was requested.  ``degenerate`` marks a
    zero scale handled by convention (statistic set to 0 when the raw
    value sits exactly at the center).
    """

    statistic: float
    center: float
    scale: float
    alpha: float | None = None
    radius: float | None = None
    plug_in: bool = False
    sigma_hat: float | None = None
    lambda_hat: tuple | None = None
    degenerate: bool = False

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "center": self.center,
            "scale": self.scale,
            "radius": self.radius,
            "alpha": self.alpha,
            "plug_in": self.plug_in,
            "sigma_hat": self.sigma_hat,
            "lambda_hat": None if self.lambda_hat is None else list(self.lambda_hat),
        }


@dataclass(frozen=True)
class LinearFormQuery:
    """Unit direction per mode for linear-form inference."""

    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray

    def __post_init__(self):
        for name in ("q1", "q2", "q3"):
            q = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.isfinite(q).all():
                raise NumericError(f"{name} contains non-finite entries")
            if abs(np.linalg.norm(q) - 1.0) > 1e-10:
                raise ArgumentError(f"{name} must have unit norm")
            object.__setattr__(self, name, q)


def normal_quantile_upper(alpha):
    """Upper standard normal quantile z with P(Z > z) = alpha."""
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    return float(ndtri(1.0 - alpha))


def lambda_norms(svals):
    """(sum s^-2, sqrt(sum s^-4)) for positive singular values."""
    s = np.asarray(svals, dtype=np.float64).ravel()
    if s.size == 0 or np.any(s <= 0) or not np.isfinite(s).all():
        raise ArgumentError("singular values must be positive and finite")
    inv2 = np.sum(s**-2.0)
    inv4 = math.sqrt(np.sum(s**-4.0))
    return float(inv2), float(inv4)


def estimate_lambda_sigma_pca(a, fit):
    """Plug-in signal strengths and noise level from one observed tensor.

    For each mode the other two modes are projected onto the fitted
    factors and the top singular values of the resulting matricization
    are taken.  The noise level is the Frobenius norm of the residual
    after projecting every mode, normalized by sqrt(p1 p2 p3).
    """
    a = as_tensor3(a)
    if fit.dims != a.shape:
        raise ArgumentError(f"fit dims {fit.dims} do not match tensor {a.shape}")
    us = fit.factors
    ranks = fit.ranks
    lam_hats = []
    for j in range(3):
        proj = a
        for k in range(3):
            if k != j:
                proj = _mode_dot(proj, us[k].T, k + 1)
        svals = np.linalg.svd(_unfold(proj, j + 1), compute_uv=False)
        lam_hats.append(svals[: ranks[j]].copy())
    core = a
    for j in range(3):
        core = _mode_dot(core, us[j].T, j + 1)
    recon = core
    for j in range(3):
        recon = _mode_dot(recon, us[j], j + 1)
    n_entries = a.shape[0] * a.shape[1] * a.shape[2]
    sigma_hat = float(np.linalg.norm(a - recon) / math.sqrt(n_entries))
    return lam_hats, sigma_hat


def noise_adjusted_singular_values(svals, core, mode, dims, sigma):
    """Remove the noise inflation from fitted singular values.

    Singular values read off a noisy fit are biased upward: the
    projected matricization of mode j adds about (p_j + q)*sigma^2 to
    each squared value (q = product of the other two ranks), and the
    companion factors, being fit to the same noise, add a further
    signal-aligned term lambda_i^2 * sigma^2 * [(p_k - r_k) c_k]
    summed over the other modes, where c_k couples component i to the
    mode-k spectrum of the core.  Subtracting the model-implied
    inflation re-centers the squared values; results are floored at
    half the raw value so the adjustment can never wipe out a signal.

    svals: raw singular values for ``mode`` (1-based), typically from
    estimate_lambda_sigma_pca.  core: the fitted core supplying the
    cross-mode couplings.  dims: the full tensor dimensions.
    """
    svals = np.asarray(svals, dtype=np.float64)
    core = np.asarray(core, dtype=np.float64)
    if mode not in (1, 2, 3):
        raise ArgumentError(f"mode must be 1, 2 or 3, got {mode}")
    if sigma < 0 or not np.isfinite(sigma):
        raise ArgumentError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return svals.copy()
    j = mode - 1
    k1, k2 = (j + 1) % 3, (j + 2) % 3
    ranks = core.shape
    _, s_own, v_own = np.linalg.svd(_unfold(core, mode), full_matrices=False)
    b1, s1, _ = np.linalg.svd(_unfold(core, k1 + 1), full_matrices=False)
    b2, s2, _ = np.linalg.svd(_unfold(core, k2 + 1), full_matrices=False)
    q = ranks[k1] * ranks[k2]
    additive = (dims[j] + q) * sigma**2
    out = np.empty_like(svals)
    for i in range(svals.size):
        # right singular vector of component i as an r_k1 x r_k2 map;
        # unfold column order puts the lower remaining mode first
        lo, hi = sorted((k1, k2))
        vi = v_own[i].reshape(ranks[lo], ranks[hi])
        if lo != k1:
            vi = vi.T
        vt = b1.T @ vi @ b2
        w = vt**2
        with np.errstate(divide="ignore"):
            c1 = float(np.sum(w / np.where(s1 > 0, s1, np.inf)[:, None] ** 2))
            c2 = float(np.sum(w / np.where(s2 > 0, s2, np.inf)[None, :] ** 2))
        aligned = (s_own[i] ** 2 if i < s_own.size else svals[i] ** 2) * sigma**2 * (
            (dims[k1] - ranks[k1]) * c1 + (dims[k2] - ranks[k2]) * c2
        )
        out[i] = math.sqrt(max(svals[i] ** 2 - additive - aligned, svals[i] ** 2 / 4.0))
    return out


def _standardized(raw, center, scale):
    if scale == 0.0:
        stat = 0.0 if raw == center else math.copysign(math.inf, raw - center)
        return stat, True
    return (raw - center) / scale, False


def pca_subspace_statistic(sin2_frob, p_j, sigma, lambda_inv_f2, lambda_inv2_f):
    """Standardized squared sin-theta error of one mode's factor.

    center = p_j sigma^2 ||Lambda^-1||_F^2,
    scale  = sqrt(2 p_j) sigma^2 ||Lambda^-2||_F.
    """
    p_j = int(p_j)
    if p_j < 1:
        raise ArgumentError(f"p_j must be positive, got {p_j}")
    if sin2_frob < 0:
        raise ArgumentError(f"sin2_frob must be nonnegative, got {sin2_frob}")
    if lambda_inv_f2 < 0 or lambda_inv2_f < 0:
        raise ArgumentError("lambda norms must be nonnegative")
    center = p_j * sigma**2 * lambda_inv_f2
    scale = math.sqrt(2.0 * p_j) * sigma**2 * lambda_inv2_f
    if scale <= 0.0 or not np.isfinite(scale):
        raise ArgumentError(f"nonpositive or non-finite scale {scale}")
    stat = (sin2_frob - center) / scale
    return InferenceReport(statistic=float(stat), center=float(center),
                           scale=float(scale))


def pca_confidence_region_radius(p_j, sigma_hat, lambda_hat_inv_f2,
                                 lambda_hat_inv2_f, alpha):
    """Upper boundary for ||sin Theta||_F^2 at confidence 1 - alpha."""
    z = normal_quantile_upper(alpha)
    p_j = int(p_j)
    if p_j < 1:
        raise ArgumentError(f"p_j must be positive, got {p_j}")
    if sigma_hat < 0:
        raise ArgumentError(f"sigma_hat must be nonnegative, got {sigma_hat}")
    center = p_j * sigma_hat**2 * lambda_hat_inv_f2
    spread = math.sqrt(2.0 * p_j) * sigma_hat**2 * lambda_hat_inv2_f
    return float(center + z * spread)


def regression_statistic_and_region(sin2_frob, p_j, n, sigma, lambda_inv_f2,
                                    lambda_inv2_f, alpha):
    """Regression analogue of the subspace statistic; the noise variance
    is divided by the sample size."""
    n = int(n)
    if n < 1:
        raise ArgumentError(f"n must be positive, got {n}")
    p_j = int(p_j)
    if p_j < 1:
        raise ArgumentError(f"p_j must be positive, got {p_j}")
    if sin2_frob < 0:
        raise ArgumentError(f"sin2_frob must be nonnegative, got {sin2_frob}")
    z = normal_quantile_upper(alpha)
    var = sigma**2 / n
    center = p_j * var * lambda_inv_f2
    scale = math.sqrt(2.0 * p_j) * var * lambda_inv2_f
    if scale <= 0.0 or not np.isfinite(scale):
        raise ArgumentError(f"nonpositive or non-finite scale {scale}")
    stat = (sin2_frob - center) / scale
    radius = center + z * scale
    return InferenceReport(statistic=float(stat), center=float(center),
                           scale=float(scale), alpha=float(alpha),
                           radius=float(radius))


def sigma_split_estimate(data, holdout=None, t_tilde=None):
    """Noise level from held-out residuals at a pilot estimate.

    Averages squared residuals of ``t_tilde`` over the first
    ``holdout`` observations; the default holdout is
    ceil(max(dims)^{3/2}).  The pilot must come from the remaining
    observations for the estimate to be independent of the holdout.
    """
    if t_tilde is None:
        raise ArgumentError("a pilot estimate t_tilde is required")
    t = as_tensor3(t_tilde)
    if t.shape != tuple(data.dims):
        raise ArgumentError(f"pilot shape {t.shape} does not match data")
    if holdout is None:
        holdout = math.ceil(max(data.dims) ** 1.5)
    holdout = int(holdout)
    if not 1 <= holdout <= data.n:
        raise ArgumentError(
            f"holdout must lie in 1..{data.n}, got {holdout}"
        )
    x = data.covariates[:holdout]
    y = data.responses[:holdout]
    pred = np.einsum("nijk,ijk->n", x, t, optimize=True)
    return float(math.sqrt(np.mean((y - pred) ** 2)))


def orth_component_statistic(overlap2, p_j, sigma, lambda_j, alpha):
    """Standardized squared overlap of one component, with the lower
    confidence bound for the squared overlap.

    center = 1 - p_j sigma^2 / lambda_j^2,
    scale  = sqrt(2 p_j) sigma^2 / lambda_j^2,
    threshold = center - z_alpha * scale.
    """
    p_j = int(p_j)
    if p_j < 1:
        raise ArgumentError(f"p_j must be positive, got {p_j}")
    if not 0.0 <= overlap2 <= 1.0 + 1e-12:
        raise ArgumentError(f"overlap2 must lie in [0, 1], got {overlap2}")
    if lambda_j <= 0:
        raise ArgumentError(f"lambda_j must be positive, got {lambda_j}")
    z = normal_quantile_upper(alpha)
    noise_ratio = p_j * sigma**2 / lambda_j**2  # 0 when lambda_j = inf
    center = 1.0 - noise_ratio
    scale = math.sqrt(2.0 * p_j) * sigma**2 / lambda_j**2
    stat, degenerate = _standardized(float(overlap2), center, scale)
    threshold = center - z * scale
    report = InferenceReport(statistic=float(stat), center=float(center),
                             scale=float(scale), alpha=float(alpha),
                             degenerate=degenerate)
    return report, float(threshold)


def _aligned_vectors(fit, truth):
    pairs = []
    for est, ref in ((fit.u, truth.u), (fit.v, truth.v), (fit.w, truth.w)):
        e = np.asarray(est, dtype=np.float64).ravel()
        t = np.asarray(ref, dtype=np.float64).ravel()
        if e.shape != t.shape:
            raise ArgumentError("fit and truth dimensions do not match")
        if np.dot(e, t) < 0:
            e = -e
        pairs.append((e, t))
    return pairs


def rank1_linear_form_statistic(fit, truth, query, lam, sigma):
    """Jointly asymptotically standard normal 3-vector for linear forms
    of the three rank-one directions.

    Component for mode 1 (others analogous):

        ( <q, u_hat - u> + p <q, u> / (2 (lam/sigma)^2) )
        / sqrt( p <q, u>^2 / (2 (lam/sigma)^4) + (1 - <q, u>^2) / (lam/sigma)^2 )

    Estimated directions are sign-aligned to the truth first.
    """
    if not isinstance(query, LinearFormQuery):
        raise ArgumentError("query must be a LinearFormQuery")
    if lam <= 0 or sigma <= 0 or not np.isfinite(lam) or not np.isfinite(sigma):
        raise ArgumentError("lam and sigma must be positive and finite")
    snr2 = (lam / sigma) ** 2
    out = []
    for (e, t), q in zip(_aligned_vectors(fit, truth), (query.q1, query.q2, query.q3)):
        if q.shape != t.shape:
            raise ArgumentError("query dimension does not match the factors")
        p = t.size
        qu = float(np.dot(q, t))
        num = float(np.dot(q, e - t)) + p * qu / (2.0 * snr2)
        den = math.sqrt(p * qu**2 / (2.0 * snr2**2) + max(0.0, 1.0 - qu**2) / snr2)
        out.append(num / den)
    return np.asarray(out)


def entrywise_statistic(fit, t_true_entry, sigma, indices):
    """Standardized error of one reconstructed entry (no thresholding)."""
    i, j, k = (int(x) for x in indices)
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    ui, vj, wk = fit.u[i], fit.v[j], fit.w[k]
    den = sigma * math.sqrt(ui**2 * vj**2 + vj**2 * wk**2 + wk**2 * ui**2)
    if den == 0.0:
        raise NumericError("entrywise scale is zero at the requested entry")
    return float((fit.t_hat[i, j, k] - t_true_entry) / den)


def entrywise_ci(fit, sigma, alpha, indices, floor_scale=None):
    """Two-sided interval for one entry with small coordinates floored.

    Coordinates enter through s(t) = max(t, floor_scale * sigma^2 /
    lambda_hat^2); the default floor_scale is log(max dim).  The
    interval is centered at the reconstructed entry with half width
    z_{alpha/2} * sigma * sqrt(s(u_i^2) s(v_j^2) + s(v_j^2) s(w_k^2)
    + s(w_k^2) s(u_i^2)).
    """
    i, j, k = (int(x) for x in indices)
    if sigma <= 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    lam = abs(fit.lambda_hat)
    if lam <= 0:
        raise ArgumentError("fit has zero strength; no interval available")
    p = max(len(fit.u), len(fit.v), len(fit.w))
    if floor_scale is None:
        floor_scale = math.log(max(p, 2))
    if floor_scale < 0:
        raise ArgumentError(f"floor_scale must be nonnegative, got {floor_scale}")
    floor = floor_scale * sigma**2 / lam**2
    su = max(fit.u[i] ** 2, floor)
    sv = max(fit.v[j] ** 2, floor)
    sw = max(fit.w[k] ** 2, floor)
    z = normal_quantile_upper(alpha / 2.0)
    half = z * sigma * math.sqrt(su * sv + sv * sw + sw * su)
    mid = float(fit.t_hat[i, j, k])
    return (mid - half, mid + half)


def rank1_subgaussian_statistic(sin2_frob, p_1, lam, sigma, nu, l4_v, l4_w):
    """Rank-one subspace statistic under general sub-Gaussian noise.

    The scale carries the fourth-moment correction
    sqrt(p_1 (2 + (nu - 3) ||v||_4^4 ||w||_4^4)); nu = 3 recovers the
    Gaussian scale exactly.
    """
    p_1 = int(p_1)
    if p_1 < 1:
        raise ArgumentError(f"p_1 must be positive, got {p_1}")
    if sin2_frob < 0:
        raise ArgumentError(f"sin2_frob must be nonnegative, got {sin2_frob}")
    if lam <= 0 or sigma <= 0:
        raise ArgumentError("lam and sigma must be positive")
    if nu < 1.0:
        raise ArgumentError(f"nu must be at least 1, got {nu}")
    for name, l4 in (("l4_v", l4_v), ("l4_w", l4_w)):
        if not 0.0 < l4 <= 1.0 + 1e-12:
            raise ArgumentError(f"{name} must lie in (0, 1], got {l4}")
    factor = 2.0 + (nu - 3.0) * l4_v * l4_w
    if factor <= 0.0:
        raise ArgumentError(
            f"variance factor 2 + (nu-3) l4_v l4_w = {factor} is not positive"
        )
    ratio = sigma**2 / lam**2
    center = p_1 * ratio
    scale = ratio * math.sqrt(p_1 * factor)
    stat = (sin2_frob - center) / scale
    return InferenceReport(statistic=float(stat), center=float(center),
                           scale=float(scale))
