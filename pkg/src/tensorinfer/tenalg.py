"""Dense third-order tensor algebra.

Tensors are plain float64 ``numpy`` arrays of shape ``(p1, p2, p3)``.
The linear storage order is lexicographic with the last mode varying
fastest, i.e. entry ``(j1, j2, j3)`` sits at flat position
``j1*p2*p3 + j2*p3 + j3`` (C order).  Matricization along mode ``j``
keeps that convention for the column index, so

    matricize(multilinear_product(g, u1, u2, u3), 1)
        == u1 @ matricize(g, 1) @ kronecker(u2, u3).T

and the same identity holds for modes 2 and 3 with the remaining
factors in ascending mode order.  No routine mutates its input.
"""

import numpy as np

from .exceptions import ArgumentError, NumericError

__all__ = [
    "as_tensor3",
    "check_ranks",
    "matricize",
    "fold",
    "mode_product",
    "multilinear_product",
    "kronecker",
    "top_left_singular",
]

_MODES = (1, 2, 3)


def as_tensor3(t):
    """Validate and return ``t`` as a float64 array of shape (p1, p2, p3).

    Raises ArgumentError for wrong dimensionality or empty axes and
    NumericError for non-finite entries.
    """
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise ArgumentError(f"expected a third-order tensor, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ArgumentError(f"all dimensions must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError("tensor contains non-finite entries")
    return arr


def as_matrix(m):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(f"expected a matrix, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ArgumentError(f"matrix dimensions must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError("matrix contains non-finite entries")
    return arr


def check_ranks(dims, ranks):
    """Validate a multilinear rank triple against tensor dimensions."""
    if len(ranks) != 3:
        raise ArgumentError(f"expected three ranks, got {len(ranks)}")
    ranks = tuple(int(r) for r in ranks)
    for j, (p, r) in enumerate(zip(dims, ranks), start=1):
        if r < 1:
            raise ArgumentError(f"rank for mode {j} must be at least 1, got {r}")
        if r > p:
            raise ArgumentError(f"rank {r} exceeds dimension {p} of mode {j}")
    # a mode's rank can never exceed the product of the other two
    prods = (ranks[1] * ranks[2], ranks[0] * ranks[2], ranks[0] * ranks[1])
    for j, (r, q) in enumerate(zip(ranks, prods), start=1):
        if r > q:
            raise ArgumentError(
                f"rank {r} of mode {j} exceeds the product {q} of the other ranks"
            )
    return ranks


def _check_mode(mode):
    if mode not in _MODES:
        raise ArgumentError(f"mode must be 1, 2 or 3, got {mode!r}")


def _unfold(t, mode):
    # no validation; t must already be a (p1,p2,p3) float64 array
    if mode == 1:
        return t.reshape(t.shape[0], -1)
    if mode == 2:
        return np.moveaxis(t, 1, 0).reshape(t.shape[1], -1)
    return np.moveaxis(t, 2, 0).reshape(t.shape[2], -1)


def matricize(t, mode):
    """Unfold ``t`` along ``mode``.

    Row index is the chosen mode; columns run over the remaining modes
    lexicographically with the later mode fastest.
    """
    _check_mode(mode)
    return np.ascontiguousarray(_unfold(as_tensor3(t), mode))


def fold(m, mode, dims):
    """Inverse of :func:`matricize`; bit-exact round trip."""
    _check_mode(mode)
    m = as_matrix(m)
    p1, p2, p3 = (int(d) for d in dims)
    if min(p1, p2, p3) < 1:
        raise ArgumentError(f"all dimensions must be positive, got {dims}")
    expect = {1: (p1, p2 * p3), 2: (p2, p1 * p3), 3: (p3, p1 * p2)}[mode]
    if m.shape != expect:
        raise ArgumentError(
            f"matrix shape {m.shape} incompatible with dims {dims!r} on mode {mode}"
        )
    if mode == 1:
        return m.reshape(p1, p2, p3)
    if mode == 2:
        return np.moveaxis(m.reshape(p2, p1, p3), 0, 1).copy()
    return np.moveaxis(m.reshape(p3, p1, p2), 0, 2).copy()


def _mode_dot(t, mat, mode):
    return np.moveaxis(np.tensordot(mat, t, axes=(1, mode - 1)), 0, mode - 1)


def mode_product(t, mat, mode):
    """Multiply ``t`` along ``mode`` by ``mat`` (rows index the new mode)."""
    _check_mode(mode)
    t = as_tensor3(t)
    mat = as_matrix(mat)
    if mat.shape[1] != t.shape[mode - 1]:
        raise ArgumentError(
            f"matrix with {mat.shape[1]} columns cannot contract mode {mode} "
            f"of size {t.shape[mode - 1]}"
        )
    return _mode_dot(t, mat, mode)


def multilinear_product(g, a1, a2, a3):
    """Return ``(a1, a2, a3) . g``, multiplying every mode of ``g``."""
    g = as_tensor3(g)
    mats = (as_matrix(a1), as_matrix(a2), as_matrix(a3))
    for j, a in enumerate(mats):
        if a.shape[1] != g.shape[j]:
            raise ArgumentError(
                f"factor {j + 1} with {a.shape[1]} columns cannot contract "
                f"mode {j + 1} of size {g.shape[j]}"
            )
    out = g
    for j, a in enumerate(mats):
        out = _mode_dot(out, a, j + 1)
    return out


def kronecker(a, b):
    """Kronecker product; block (i,j) is ``a[i,j] * b``."""
    return np.kron(as_matrix(a), as_matrix(b))


def _fix_signs(u):
    # deterministic sign: each column's largest-magnitude entry is
    # nonnegative, first such entry on ties
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def top_left_singular(m, r):
    """Top-``r`` left singular vectors and singular values of ``m``.

    Parameters
    ----------
    m : (p, q) array
    r : int, 1 <= r <= min(p, q)

    Returns
    -------
    u : (p, r) array with orthonormal, sign-fixed columns
    s : (r,) array of singular values in descending order
    """
    m = as_matrix(m)
    r = int(r)
    if not 1 <= r <= min(m.shape):
        raise ArgumentError(
            f"r must lie in 1..{min(m.shape)} for shape {m.shape}, got {r}"
        )
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    return _fix_signs(u[:, :r]), s[:r].copy()


def _top_left_fast(m, r):
    """Internal top-r left factor with a Gram fast path for wide inputs.

    Returns (u, s, s_next) where s_next is the (r+1)-th singular value,
    or 0.0 when r exhausts the spectrum.  Used inside iteration loops;
    callers guarantee a finite 2-D float64 input.
    """
    p, q = m.shape
    if q >= 4 * p:
        w, vecs = np.linalg.eigh(m @ m.T)
        w = np.sqrt(np.clip(w[::-1], 0.0, None))
        vecs = vecs[:, ::-1]
        u = _fix_signs(vecs[:, :r])
        s_next = w[r] if r < w.size else 0.0
        return u, w[:r].copy(), float(s_next)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    s_next = s[r] if r < s.size else 0.0
    return _fix_signs(u[:, :r]), s[:r].copy(), float(s_next)
