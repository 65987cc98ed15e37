"""Low-rank tensor regression: least-squares subproblems, the
two-sweep alternating solver, and a gradient-descent initializer.

The model is y_i = <x_i, signal> + noise with a dense covariate tensor
per observation.  Every least-squares subproblem is solved through an
orthogonal factorization (never normal equations); designs that would
exceed ``DESIGN_BYTES_CAP`` when materialized are handled matrix-free
with LSMR at tolerance 1e-10.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsmr

from .exceptions import ArgumentError, NumericError
from .tenalg import as_tensor3, check_ranks, _unfold, _top_left_fast, _fix_signs
from .estimators import TuckerFactors, hooi

__all__ = [
    "RegressionDataset",
    "SgdConfig",
    "loss",
    "solve_core",
    "solve_factor",
    "regression_two_step",
    "sgd_init",
    "DESIGN_BYTES_CAP",
]

DESIGN_BYTES_CAP = 2 << 30  # bytes; larger designs go matrix-free
COND_LIMIT = 1e12
LSMR_TOL = 1e-10


@dataclass(frozen=True)
class RegressionDataset:
    """Covariate tensors stacked along the first axis plus responses.

    ``sigma`` is the known noise level when available, else None.
    """

    covariates: np.ndarray
    responses: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=np.float64)
        y = np.asarray(self.responses, dtype=np.float64)
        if x.ndim != 4:
            raise ArgumentError(
                f"covariates must be (n, p1, p2, p3), got ndim={x.ndim}"
            )
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ArgumentError("responses must be one value per covariate tensor")
        if x.shape[0] < 1 or min(x.shape[1:]) < 1:
            raise ArgumentError(f"empty dataset or empty modes: {x.shape}")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise NumericError("dataset contains non-finite entries")
        if self.sigma is not None and (self.sigma < 0 or not np.isfinite(self.sigma)):
            raise ArgumentError(f"sigma must be nonnegative, got {self.sigma}")
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "responses", y)

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def dims(self):
        return self.covariates.shape[1:]


@dataclass(frozen=True)
class SgdConfig:
    """Tuning for :func:`sgd_init`.

    ``eta=None`` scales the step to the warm start: 0.3 divided by
    twice the squared largest core singular value (floored at one).
    """

    a: float = 1.0
    b: float = 1.0
    eta: float | None = None
    t_max: int = 200

    def __post_init__(self):
        if self.a < 0 or self.b <= 0:
            raise ArgumentError("need a >= 0 and b > 0")
        if self.eta is not None and self.eta < 0:
            raise ArgumentError("eta must be nonnegative")
        if self.t_max < 0:
            raise ArgumentError("t_max must be nonnegative")


def _as_full_tensor(t_hat, dims):
    if isinstance(t_hat, TuckerFactors):
        t = t_hat.reconstruct()
    else:
        t = as_tensor3(t_hat)
    if t.shape != tuple(dims):
        raise ArgumentError(f"estimate shape {t.shape} does not match data {dims}")
    return t


def loss(t_hat, data):
    """Mean squared residual of ``t_hat`` on ``data``."""
    t = _as_full_tensor(t_hat, data.dims)
    pred = np.einsum("nijk,ijk->n", data.covariates, t, optimize=True)
    return float(np.mean((data.responses - pred) ** 2))


def _lstsq_dense(design, y):
    sol, _, _, svals = np.linalg.lstsq(design, y, rcond=None)
    if svals[-1] <= 0 or svals[0] / svals[-1] > COND_LIMIT:
        raise NumericError(
            "least-squares design is numerically rank deficient; "
            "increase the sample size n"
        )
    return sol


def _lstsq_streamed(matvec, rmatvec, shape, y):
    op = LinearOperator(shape, matvec=matvec, rmatvec=rmatvec)
    result = lsmr(op, y, atol=LSMR_TOL, btol=LSMR_TOL, conlim=COND_LIMIT)
    sol, istop = result[0], result[1]
    if istop == 7:
        raise NumericError(
            "least-squares design is numerically rank deficient; "
            "increase the sample size n"
        )
    return sol


def _project_batch(x, mats):
    """Contract each listed (mode, matrix) pair of the stacked tensors.

    ``mats`` maps mode (1-based) to a matrix multiplying that mode
    transposed, i.e. the result has that mode's size replaced by the
    matrix column count.
    """
    out = x
    for mode, m in mats.items():
        out = np.moveaxis(np.tensordot(out, m, axes=([mode], [0])), -1, mode)
    return out


def solve_core(data, u1, u2, u3, max_design_bytes=None):
    """Least-squares core given orthonormal factors.

    Requires n >= r1*r2*r3; raises NumericError when the projected
    design is ill conditioned (condition number above 1e12).
    """
    cap = DESIGN_BYTES_CAP if max_design_bytes is None else int(max_design_bytes)
    us = []
    for j, u in enumerate((u1, u2, u3)):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != data.dims[j]:
            raise ArgumentError(f"factor {j + 1} does not match data dims")
        us.append(u)
    ranks = tuple(u.shape[1] for u in us)
    k = ranks[0] * ranks[1] * ranks[2]
    if data.n < k:
        raise ArgumentError(
            f"need n >= r1*r2*r3 = {k} observations for the core, have {data.n}"
        )
    y = data.responses
    if data.n * k * 8 <= cap:
        design = _project_batch(
            data.covariates, {1: us[0], 2: us[1], 3: us[2]}
        ).reshape(data.n, k)
        sol = _lstsq_dense(design, y)
        return sol.reshape(ranks)

    x = data.covariates

    def matvec(vec):
        g = vec.reshape(ranks)
        full = g
        for j, u in enumerate(us):
            full = np.moveaxis(np.tensordot(u, full, axes=(1, j)), 0, j)
        return np.einsum("nijk,ijk->n", x, full, optimize=True)

    def rmatvec(res):
        s = np.einsum("n,nijk->ijk", res, x, optimize=True)
        for j, u in enumerate(us):
            s = np.moveaxis(np.tensordot(u.T, s, axes=(1, j)), 0, j)
        return s.ravel()

    sol = _lstsq_streamed(matvec, rmatvec, (data.n, k), y)
    return sol.reshape(ranks)


def solve_factor(data, mode, core, others, max_design_bytes=None):
    """Least-squares update of one factor at fixed core and companions.

    Parameters
    ----------
    data : RegressionDataset
    mode : 1, 2 or 3, the factor being solved
    core : current core tensor (r1, r2, r3)
    others : the two companion factors in ascending mode order

    Returns
    -------
    stage1 : unconstrained (p_mode, r_mode) solution
    stage2 : its top-r_mode left singular orthonormalization

    Requires n >= p_mode * r_mode.
    """
    cap = DESIGN_BYTES_CAP if max_design_bytes is None else int(max_design_bytes)
    if mode not in (1, 2, 3):
        raise ArgumentError(f"mode must be 1, 2 or 3, got {mode!r}")
    core = as_tensor3(core)
    other_modes = [m for m in (1, 2, 3) if m != mode]
    if len(others) != 2:
        raise ArgumentError("others must hold the two companion factors")
    comp = {}
    for m, u in zip(other_modes, others):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != data.dims[m - 1]:
            raise ArgumentError(f"companion factor for mode {m} does not match data")
        if u.shape[1] != core.shape[m - 1]:
            raise ArgumentError(f"companion factor for mode {m} does not match core")
        comp[m] = u
    p = data.dims[mode - 1]
    r = core.shape[mode - 1]
    cols = p * r
    if data.n < cols:
        raise ArgumentError(
            f"need n >= p_mode*r_mode = {cols} observations, have {data.n}"
        )
    core_mat = _unfold(core, mode)  # r x (product of other ranks)
    y = data.responses

    def rows_for(x_block):
        # (m, p, r) stack of per-observation coefficient matrices
        proj = _project_batch(x_block, {m: comp[m] for m in other_modes})
        unfolded = np.moveaxis(proj, mode, 1).reshape(x_block.shape[0], p, -1)
        return unfolded @ core_mat.T

    if data.n * cols * 8 <= cap:
        design = rows_for(data.covariates).reshape(data.n, cols)
        stage1 = _lstsq_dense(design, y).reshape(p, r)
    else:
        x = data.covariates
        # stream blocks of rows so no more than ~cap/16 bytes are live
        block = max(1, int(cap // (16 * cols * 8)))

        def matvec(vec):
            u = vec.reshape(p, r)
            out = np.empty(data.n)
            for lo in range(0, data.n, block):
                rows = rows_for(x[lo:lo + block])
                out[lo:lo + block] = np.einsum("npr,pr->n", rows, u, optimize=True)
            return out

        def rmatvec(res):
            acc = np.zeros((p, r))
            for lo in range(0, data.n, block):
                rows = rows_for(x[lo:lo + block])
                acc += np.einsum("n,npr->pr", res[lo:lo + block], rows, optimize=True)
            return acc.ravel()

        stage1 = _lstsq_streamed(matvec, rmatvec, (data.n, cols), y).reshape(p, r)

    stage2, svals, _ = _top_left_fast(stage1, r)
    if svals[-1] <= 0:
        raise NumericError(
            f"factor update for mode {mode} collapsed to rank below {r}"
        )
    return stage1, stage2


def regression_two_step(data, init):
    """Two sweeps of alternating least squares from ``init``.

    The starting core is solved at the initial factors; each sweep
    updates every factor from the previous sweep's companions and core,
    orthonormalizes, then re-solves the core at the new factors.
    """
    if not isinstance(init, TuckerFactors):
        raise ArgumentError("init must be TuckerFactors")
    if init.dims != tuple(data.dims):
        raise ArgumentError(
            f"init dims {init.dims} do not match data dims {tuple(data.dims)}"
        )
    ranks = check_ranks(data.dims, init.ranks)
    need = max(ranks[0] * ranks[1] * ranks[2],
               max(p * r for p, r in zip(data.dims, ranks)))
    if data.n < need:
        raise ArgumentError(f"need n >= {need} observations, have {data.n}")
    us = list(init.factors)
    core = solve_core(data, *us)
    for _ in range(2):
        prev = [u.copy() for u in us]
        for j in range(3):
            others = [prev[k] for k in range(3) if k != j]
            _, us[j] = solve_factor(data, j + 1, core, others)
        core = solve_core(data, *us)
    return TuckerFactors(core, *us)


def _grad(data, us, core):
    """Gradients of the mean squared loss in the factors and the core."""
    full = core
    for j, u in enumerate(us):
        full = np.moveaxis(np.tensordot(u, full, axes=(1, j)), 0, j)
    pred = np.einsum("nijk,ijk->n", data.covariates, full, optimize=True)
    res = data.responses - pred
    s = np.einsum("n,nijk->ijk", res, data.covariates, optimize=True)
    scale = -2.0 / data.n
    grads_u = []
    for j in range(3):
        proj = s
        for k in range(3):
            if k != j:
                proj = np.moveaxis(
                    np.tensordot(us[k].T, proj, axes=(1, k)), 0, k
                )
        grads_u.append(scale * _unfold(proj, j + 1) @ _unfold(core, j + 1).T)
    grad_core = s
    for j in range(3):
        grad_core = np.moveaxis(
            np.tensordot(us[j].T, grad_core, axes=(1, j)), 0, j
        )
    grad_core = scale * grad_core
    return grads_u, grad_core, float(np.mean(res**2))


def sgd_init(data, ranks, config=None):
    """Gradient-descent initializer with balance regularization.

    Warm start: hooi on sum_i y_i x_i, with the core put back on the
    loss scale (divided by n) and the balance parameter applied
    (factors times b, core divided by b^3).  Each iteration takes a
    simultaneous gradient step in all blocks; the factor blocks carry
    the penalty a * U (U'U - b^2 I).  The returned factors are
    re-extracted from the final reconstruction by per-mode SVD.
    """
    config = config or SgdConfig()
    ranks = check_ranks(data.dims, ranks)
    s = np.einsum("n,nijk->ijk", data.responses, data.covariates, optimize=True)
    warm = hooi(s, ranks, t_max=2)
    core = warm.core / data.n  # put the warm core on the scale of the loss
    us = [config.b * u for u in warm.factors]
    core = core / config.b**3
    if config.eta is None:
        lam_max = max(
            np.linalg.svd(_unfold(core, j), compute_uv=False)[0] for j in (1, 2, 3)
        )
        eta = 0.3 / max(1.0, 2.0 * lam_max**2)
    else:
        eta = config.eta
    loss0 = None
    for _ in range(config.t_max):
        grads_u, grad_core, cur = _grad(data, us, core)
        if loss0 is None:
            loss0 = cur if cur > 0 else 1.0
        if not np.isfinite(cur) or cur > 1e6 * loss0:
            raise NumericError(
                "gradient descent diverged; reduce the step size eta"
            )
        if eta == 0.0:
            break
        b2 = config.b**2
        new_us = []
        for j, u in enumerate(us):
            balance = config.a * (u @ (u.T @ u - b2 * np.eye(ranks[j])))
            new_us.append(u - eta * (grads_u[j] + balance))
        core = core - eta * grad_core
        us = new_us
    full = core
    for j, u in enumerate(us):
        full = np.moveaxis(np.tensordot(u, full, axes=(1, j)), 0, j)
    if not np.isfinite(full).all():
        raise NumericError("gradient descent diverged; reduce the step size eta")
    final_us = []
    for j in range(3):
        u, svals, _ = _top_left_fast(_unfold(full, j + 1), ranks[j])
        final_us.append(u)
    out_core = full
    for j, u in enumerate(final_us):
        out_core = np.moveaxis(np.tensordot(u.T, out_core, axes=(1, j)), 0, j)
    return TuckerFactors(out_core, *final_us)
