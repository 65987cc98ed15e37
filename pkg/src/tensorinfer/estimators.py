"""Low-rank estimators for noisy third-order tensors.

All routines operate on a single observed tensor ``a = signal + noise``.
``hooi`` is the classical alternating scheme from a spectral start;
``pca_refine`` runs exactly two refinement sweeps from a supplied
initialization, which is the regime the inferential theory targets
(``pca_refine`` from the spectral start coincides with ``hooi`` at
``t_max=2``).  ``orth_refine`` and ``rank1_power`` are the analogous
two-sweep and power schemes for orthogonally decomposable and rank-one
signals.

Sweep discipline: by default every update within a sweep reads the
factors from the previous sweep ("jacobi").  ``hooi`` also offers
"gauss-seidel", which consumes updates immediately and makes the
projected energy nondecreasing step by step.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, NumericError, RankDeficiencyWarning
from .tenalg import as_tensor3, check_ranks, _unfold, _mode_dot, _top_left_fast

__all__ = [
    "TuckerFactors",
    "OrthFactors",
    "Rank1Fit",
    "spectral_init",
    "hooi",
    "pca_refine",
    "orth_refine",
    "deflation_init",
    "rank1_power",
    "default_power_iterations",
]

# singular value gaps below this are reported as unidentified
GAP_TOL = 1e-8


@dataclass(frozen=True)
class TuckerFactors:
    """Orthonormal factor triple plus core; ``degenerate`` marks runs
    where some factor update saw a singular value gap below GAP_TOL."""

    core: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        core = as_tensor3(self.core)
        object.__setattr__(self, "core", core)
        for j, name in enumerate(("u1", "u2", "u3")):
            u = np.asarray(getattr(self, name), dtype=np.float64)
            if u.ndim != 2:
                raise ArgumentError(f"{name} must be a matrix")
            if u.shape[1] != core.shape[j]:
                raise ArgumentError(
                    f"{name} has {u.shape[1]} columns but core mode {j + 1} "
                    f"has size {core.shape[j]}"
                )
            if not np.isfinite(u).all():
                raise NumericError(f"{name} contains non-finite entries")
            err = np.abs(u.T @ u - np.eye(u.shape[1])).max()
            if err > 1e-8:
                raise ArgumentError(
                    f"{name} columns not orthonormal (deviation {err:.2e})"
                )
            object.__setattr__(self, name, u)

    @property
    def ranks(self):
        return self.core.shape

    @property
    def dims(self):
        return (self.u1.shape[0], self.u2.shape[0], self.u3.shape[0])

    @property
    def factors(self):
        return (self.u1, self.u2, self.u3)

    def reconstruct(self):
        out = self.core
        for j, u in enumerate(self.factors):
            out = _mode_dot(out, u, j + 1)
        return out

    def mode_singular_values(self, mode):
        """Singular values of the core unfolded along ``mode``."""
        return np.linalg.svd(_unfold(self.core, mode), compute_uv=False)

    @property
    def lambda_min(self):
        return min(self.mode_singular_values(j)[self.ranks[j - 1] - 1] for j in (1, 2, 3))

    @property
    def lambda_max(self):
        return max(self.mode_singular_values(j)[0] for j in (1, 2, 3))

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min


@dataclass(frozen=True)
class OrthFactors:
    """Componentwise representation sum_j lambdas[j] * u_j x v_j x w_j
    with unit-norm columns in each mode."""

    lambdas: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=np.float64))
        if lam.ndim != 1 or lam.size < 1:
            raise ArgumentError("lambdas must be a nonempty vector")
        if not np.isfinite(lam).all():
            raise NumericError("lambdas contain non-finite entries")
        object.__setattr__(self, "lambdas", lam)
        for name in ("u", "v", "w"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim == 1:
                m = m[:, None]
            if m.ndim != 2 or m.shape[1] != lam.size:
                raise ArgumentError(
                    f"{name} must have one column per component ({lam.size})"
                )
            if not np.isfinite(m).all():
                raise NumericError(f"{name} contains non-finite entries")
            norms = np.linalg.norm(m, axis=0)
            if np.abs(norms - 1.0).max() > 1e-6:
                raise ArgumentError(f"{name} columns must have unit norm")
            object.__setattr__(self, name, m)

    @property
    def r(self):
        return self.lambdas.size

    @property
    def dims(self):
        return (self.u.shape[0], self.v.shape[0], self.w.shape[0])

    def reconstruct(self):
        return np.einsum("m,im,jm,km->ijk", self.lambdas, self.u, self.v, self.w)


@dataclass(frozen=True)
class Rank1Fit:
    """Output of :func:`rank1_power`."""

    factors: OrthFactors
    lambda_hat: float
    t_hat: np.ndarray = field(repr=False)

    @property
    def u(self):
        return self.factors.u[:, 0]

    @property
    def v(self):
        return self.factors.v[:, 0]

    @property
    def w(self):
        return self.factors.w[:, 0]


def _project_others(a, us, j):
    """a multiplied by us[k]' on both modes k != j."""
    out = a
    for k in range(3):
        if k != j:
            out = _mode_dot(out, us[k].T, k + 1)
    return out


def _factor_update(a, us, j, r):
    m = _unfold(_project_others(a, us, j), j + 1)
    u, svals, s_next = _top_left_fast(m, r)
    degenerate = (svals[-1] - s_next) < GAP_TOL
    return u, degenerate


def spectral_init(a, ranks):
    """Per-mode top singular factors of the raw matricizations."""
    a = as_tensor3(a)
    ranks = check_ranks(a.shape, ranks)
    us = []
    degenerate = False
    for j in range(3):
        u, svals, s_next = _top_left_fast(_unfold(a, j + 1), ranks[j])
        degenerate = degenerate or (svals[-1] - s_next) < GAP_TOL
        us.append(u)
    core = _project_all(a, us)
    return TuckerFactors(core, *us, degenerate=degenerate)


def _project_all(a, us):
    out = a
    for j, u in enumerate(us):
        out = _mode_dot(out, u.T, j + 1)
    return out


def hooi(a, ranks, t_max=2, sweep="jacobi"):
    """Alternating subspace estimation from the spectral start.

    Parameters
    ----------
    a : observed tensor
    ranks : multilinear rank triple
    t_max : number of sweeps after initialization
    sweep : "jacobi" (each sweep reads the previous sweep's factors) or
        "gauss-seidel" (updates are consumed immediately)

    Returns TuckerFactors with the core evaluated at the final factors.
    """
    a = as_tensor3(a)
    ranks = check_ranks(a.shape, ranks)
    t_max = int(t_max)
    if t_max < 0:
        raise ArgumentError(f"t_max must be nonnegative, got {t_max}")
    if sweep not in ("jacobi", "gauss-seidel"):
        raise ArgumentError(f"unknown sweep mode {sweep!r}")
    init = spectral_init(a, ranks)
    us = list(init.factors)
    degenerate = init.degenerate
    for _ in range(t_max):
        src = [u.copy() for u in us] if sweep == "jacobi" else us
        for j in range(3):
            us[j], deg = _factor_update(a, src, j, ranks[j])
            degenerate = degenerate or deg
    core = _project_all(a, us)
    if np.linalg.norm(core) == 0.0:
        degenerate = True
        warnings.warn(
            "projected energy is zero; factors are arbitrary",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return TuckerFactors(core, *us, degenerate=degenerate)


def pca_refine(a, init):
    """Two refinement sweeps from ``init``; the inferential target.

    Both sweeps read the factors of the previous sweep, and the core is
    the projection of ``a`` onto the final factors.  From the spectral
    start this coincides with ``hooi(a, ranks, 2)``.
    """
    a = as_tensor3(a)
    if not isinstance(init, TuckerFactors):
        raise ArgumentError("init must be TuckerFactors")
    if init.dims != a.shape:
        raise ArgumentError(
            f"init dims {init.dims} do not match tensor shape {a.shape}"
        )
    ranks = check_ranks(a.shape, init.ranks)
    us = list(init.factors)
    degenerate = False
    for _ in range(2):
        src = [u.copy() for u in us]
        for j in range(3):
            us[j], deg = _factor_update(a, src, j, ranks[j])
            degenerate = degenerate or deg
    core = _project_all(a, us)
    return TuckerFactors(core, *us, degenerate=degenerate)


def _unit(x, what):
    n = np.linalg.norm(x)
    if n == 0.0 or not np.isfinite(n):
        raise NumericError(f"cannot normalize {what}: zero or non-finite norm")
    return x / n


def orth_refine(a, init=None, r=None):
    """Two power sweeps for an orthogonally decomposable signal.

    ``init`` supplies unit starting vectors per component; when omitted,
    ``deflation_init`` builds one with ``r`` components.  Component
    values are recomputed at the final vectors:
    lambda_j = || a x_2 v_j x_3 w_j ||_2.
    """
    a = as_tensor3(a)
    if init is None:
        if r is None:
            raise ArgumentError("provide init or a component count r")
        init = deflation_init(a, r)
    if not isinstance(init, OrthFactors):
        raise ArgumentError("init must be OrthFactors")
    if init.dims != a.shape:
        raise ArgumentError(
            f"init dims {init.dims} do not match tensor shape {a.shape}"
        )
    u, v, w = init.u, init.v, init.w
    for _ in range(2):
        un = np.einsum("ijk,jm,km->im", a, v, w, optimize=True)
        vn = np.einsum("ijk,im,km->jm", a, u, w, optimize=True)
        wn = np.einsum("ijk,im,jm->km", a, u, v, optimize=True)
        cols = []
        for name, m in (("u", un), ("v", vn), ("w", wn)):
            norms = np.linalg.norm(m, axis=0)
            bad = np.where((norms == 0.0) | ~np.isfinite(norms))[0]
            if bad.size:
                raise NumericError(
                    f"component {bad[0]} of {name} collapsed during a sweep"
                )
            cols.append(m / norms)
        u, v, w = cols
    lam = np.linalg.norm(
        np.einsum("ijk,jm,km->im", a, v, w, optimize=True), axis=0
    )
    return OrthFactors(lambdas=lam, u=u, v=v, w=w)


def deflation_init(a, r, t_max=None):
    """Successive rank-one extraction followed by re-orthogonalization.

    Runs ``rank1_power``, subtracts the fitted component, repeats ``r``
    times, then orthonormalizes each mode's collected columns with a
    single QR pass (column order preserved).
    """
    a = as_tensor3(a)
    r = int(r)
    if not 1 <= r <= min(a.shape):
        raise ArgumentError(f"component count must lie in 1..{min(a.shape)}")
    residual = a.copy()
    cols_u, cols_v, cols_w, lams = [], [], [], []
    for _ in range(r):
        fit = rank1_power(residual, t_max)
        cols_u.append(fit.u)
        cols_v.append(fit.v)
        cols_w.append(fit.w)
        lams.append(fit.lambda_hat)
        residual = residual - fit.t_hat
    mats = []
    for cols in (cols_u, cols_v, cols_w):
        q, rr = np.linalg.qr(np.column_stack(cols))
        d = np.sign(np.diag(rr))
        d[d == 0] = 1.0
        mats.append(q * d)
    return OrthFactors(lambdas=np.asarray(lams), u=mats[0], v=mats[1], w=mats[2])


def default_power_iterations(p):
    """Sweep budget that grows logarithmically, never below 10."""
    return max(10, math.ceil(2.0 * math.log(max(p, 2))))


def rank1_power(a, t_max=None):
    """Rank-one power iteration with per-mode spectral initialization.

    Each sweep recomputes all three vectors from the previous sweep's
    values; the value estimate is the full contraction at the final
    vectors and ``t_hat`` the corresponding rank-one reconstruction.
    """
    a = as_tensor3(a)
    if t_max is None:
        t_max = default_power_iterations(max(a.shape))
    t_max = int(t_max)
    if t_max < 1:
        raise ArgumentError(f"t_max must be positive, got {t_max}")
    u = _top_left_fast(_unfold(a, 1), 1)[0][:, 0]
    v = _top_left_fast(_unfold(a, 2), 1)[0][:, 0]
    w = _top_left_fast(_unfold(a, 3), 1)[0][:, 0]
    for _ in range(t_max):
        un = _unit(np.einsum("ijk,j,k->i", a, v, w, optimize=True), "mode-1 vector")
        vn = _unit(np.einsum("ijk,i,k->j", a, u, w, optimize=True), "mode-2 vector")
        wn = _unit(np.einsum("ijk,i,j->k", a, u, v, optimize=True), "mode-3 vector")
        u, v, w = un, vn, wn
    lam = float(np.einsum("ijk,i,j,k", a, u, v, w, optimize=True))
    t_hat = lam * np.einsum("i,j,k->ijk", u, v, w)
    factors = OrthFactors(lambdas=np.array([abs(lam) if lam != 0 else 0.0]),
                          u=u, v=v, w=w)
    return Rank1Fit(factors=factors, lambda_hat=lam, t_hat=t_hat)
