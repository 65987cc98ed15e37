"""Subspace distances, Procrustes alignment, component matching."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import ArgumentError
from .tenalg import as_matrix

__all__ = [
    "SubspaceDistance",
    "MatchResult",
    "sin_theta",
    "procrustes_align",
    "match_components",
]

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class SubspaceDistance:
    """Largest principal angle sine and the Frobenius aggregate."""

    spectral: float
    frobenius: float


@dataclass(frozen=True)
class MatchResult:
    """Alignment of estimated components to reference components.

    ``permutation[j]`` is the estimated component index matched to
    reference component ``j``; ``signs[j]`` makes the matched
    first-mode overlap nonnegative; ``overlaps`` are the matched
    absolute overlaps.
    """

    permutation: np.ndarray
    signs: np.ndarray
    overlaps: np.ndarray


def _check_orthonormal(m, name):
    m = as_matrix(m)
    p, r = m.shape
    if r > p:
        raise ArgumentError(f"{name}: more columns than rows ({r} > {p})")
    gram = m.T @ m
    err = np.abs(gram - np.eye(r)).max()
    if err > ORTHONORMAL_TOL:
        raise ArgumentError(
            f"{name}: columns not orthonormal (deviation {err:.2e} > {ORTHONORMAL_TOL:.0e})"
        )
    return m


def sin_theta(u, v):
    """Sine-theta distances between the column spans of ``u`` and ``v``.

    Both inputs must have orthonormal columns of equal count.  With
    s_1 >= ... >= s_r the singular values of u'v, the spectral distance
    is sqrt(1 - s_r^2) and the Frobenius distance sqrt(r - sum s_i^2);
    the latter also equals ||uu' - vv'||_F / sqrt(2).
    """
    u = _check_orthonormal(u, "u")
    v = _check_orthonormal(v, "v")
    if u.shape != v.shape:
        raise ArgumentError(f"shape mismatch: {u.shape} vs {v.shape}")
    # singular values of the projection residual (I - uu')v equal the
    # angle sines directly; the sqrt(1 - s^2) route loses half the
    # digits near perfect alignment
    resid = v - u @ (u.T @ v)
    s = np.linalg.svd(resid, compute_uv=False)
    s = np.clip(s, 0.0, 1.0)
    spectral = float(s[0])
    frob = float(np.sqrt(np.sum(s**2)))
    return SubspaceDistance(spectral=spectral, frobenius=frob)


def procrustes_align(u_hat, u):
    """Best rotation R minimizing ||u_hat R - u||_F.

    R = L W' where L S W' is the SVD of u_hat' u.  The residual obeys
    ||u_hat' u - R||_2 <= sin_theta(u_hat, u).spectral ** 2.
    """
    u_hat = _check_orthonormal(u_hat, "u_hat")
    u = _check_orthonormal(u, "u")
    if u_hat.shape != u.shape:
        raise ArgumentError(f"shape mismatch: {u_hat.shape} vs {u.shape}")
    left, _, right_t = np.linalg.svd(u_hat.T @ u)
    return left @ right_t


def match_components(est, truth):
    """Match estimated rank-one components to reference components.

    Components are compared through their first-mode vectors; the
    permutation maximizes the total absolute overlap (optimal
    assignment).  Requires equal component counts.
    """
    u_est = as_matrix(est.u if hasattr(est, "u") else est)
    u_true = as_matrix(truth.u if hasattr(truth, "u") else truth)
    if u_est.shape != u_true.shape:
        raise ArgumentError(
            f"component count/dimension mismatch: {u_est.shape} vs {u_true.shape}"
        )
    # cross[i, j] = <est_i, truth_j>
    cross = u_est.T @ u_true
    rows, cols = linear_sum_assignment(-np.abs(cross))
    perm = np.empty(u_est.shape[1], dtype=np.int64)
    perm[cols] = rows
    matched = cross[perm, np.arange(u_est.shape[1])]
    signs = np.where(matched < 0, -1, 1).astype(np.int64)
    return MatchResult(permutation=perm, signs=signs, overlaps=np.abs(matched))
