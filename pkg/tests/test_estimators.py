"""Alternating low-rank estimators: spectral start, sweeps, rank-one power."""

import math

import numpy as np
import pytest

from tensorinfer.estimators import (
    OrthFactors,
    TuckerFactors,
    default_power_iterations,
    deflation_init,
    hooi,
    orth_refine,
    pca_refine,
    rank1_power,
    spectral_init,
)
from tensorinfer.exceptions import ArgumentError, RankDeficiencyWarning
from tensorinfer.subspace import sin_theta
from tensorinfer.tenalg import multilinear_product


def haar_frame(p, r, rng):
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    return q


def tucker_instance(p, r, lam, rng):
    """Random truth with mode singular values >= lam in every mode."""
    us = [haar_frame(p, r, rng) for _ in range(3)]
    core = np.zeros((r, r, r))
    idx = np.arange(r)
    core[idx, idx, idx] = lam * (1.0 + idx)
    return multilinear_product(core, *us), us


def orth_instance(p, r, lam, rng):
    u = haar_frame(p, r, rng)
    v = haar_frame(p, r, rng)
    w = haar_frame(p, r, rng)
    lams = lam * np.arange(r, 0, -1, dtype=float)
    t = np.einsum("m,im,jm,km->ijk", lams, u, v, w)
    return t, lams, (u, v, w)


def test_tucker_factors_validation():
    rng = np.random.default_rng(0)
    u = haar_frame(6, 2, rng)
    core = rng.standard_normal((2, 2, 2))
    fit = TuckerFactors(core=core, u1=u, u2=u.copy(), u3=u.copy())
    assert fit.ranks == (2, 2, 2)
    assert fit.dims == (6, 6, 6)
    with pytest.raises(ArgumentError):
        TuckerFactors(core=core, u1=2.0 * u, u2=u, u3=u)
    with pytest.raises(ArgumentError):
        TuckerFactors(core=rng.standard_normal((3, 2, 2)), u1=u, u2=u, u3=u)


def test_tucker_factors_spectrum_properties():
    """lambda_min/max/kappa read the core's mode-wise singular values."""
    rng = np.random.default_rng(1)
    us = [haar_frame(5, 2, rng) for _ in range(3)]
    core = np.zeros((2, 2, 2))
    core[0, 0, 0] = 3.0
    core[1, 1, 1] = 2.0
    fit = TuckerFactors(core=core, u1=us[0], u2=us[1], u3=us[2])
    assert fit.lambda_min == pytest.approx(2.0)
    assert fit.lambda_max == pytest.approx(3.0)
    assert fit.kappa == pytest.approx(1.5)
    np.testing.assert_allclose(fit.mode_singular_values(1), [3.0, 2.0], atol=1e-12)


def test_reconstruct_matches_multilinear_product():
    rng = np.random.default_rng(2)
    us = [haar_frame(4, 2, rng) for _ in range(3)]
    core = rng.standard_normal((2, 2, 2))
    fit = TuckerFactors(core=core, u1=us[0], u2=us[1], u3=us[2])
    np.testing.assert_allclose(
        fit.reconstruct(), multilinear_product(core, *us), atol=1e-12
    )


def test_orth_factors_promotes_vectors():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    f = OrthFactors(lambdas=np.array([2.0]), u=u, v=u.copy(), w=u.copy())
    assert f.u.shape == (5, 1)
    with pytest.raises(ArgumentError):
        OrthFactors(lambdas=np.array([2.0]), u=2.0 * u, v=u, w=u)


def test_hooi_noiseless_exact():
    """Without noise the two-sweep estimator recovers the planted truth."""
    rng = np.random.default_rng(4)
    t, us = tucker_instance(12, 3, 5.0, rng)
    fit = hooi(t, (3, 3, 3))
    for u_hat, u in zip(fit.factors, us):
        assert sin_theta(u_hat, u).frobenius < 1e-10
    np.testing.assert_allclose(fit.reconstruct(), t, atol=1e-10)
    assert not fit.degenerate


def test_hooi_gauss_seidel_noiseless_exact():
    rng = np.random.default_rng(5)
    t, us = tucker_instance(10, 2, 4.0, rng)
    fit = hooi(t, (2, 2, 2), sweep="gauss-seidel")
    for u_hat, u in zip(fit.factors, us):
        assert sin_theta(u_hat, u).frobenius < 1e-10


def test_hooi_zero_tensor_degenerate():
    with pytest.warns(RankDeficiencyWarning):
        fit = hooi(np.zeros((4, 4, 4)), (2, 2, 2))
    assert fit.degenerate


def test_hooi_rejects_bad_ranks():
    with pytest.raises(ArgumentError):
        hooi(np.ones((3, 3, 3)), (4, 1, 1))
    with pytest.raises(ArgumentError):
        hooi(np.ones((3, 3, 3)), (2, 2, 2), sweep="downhill")


def test_pca_refine_coincides_with_hooi():
    """Two sweeps from the spectral start equal the packaged estimator."""
    rng = np.random.default_rng(6)
    t, _ = tucker_instance(10, 2, 6.0, rng)
    a = t + 0.3 * rng.standard_normal(t.shape)
    via_refine = pca_refine(a, spectral_init(a, (2, 2, 2)))
    via_hooi = hooi(a, (2, 2, 2), t_max=2)
    np.testing.assert_allclose(via_refine.core, via_hooi.core, atol=1e-12)
    for m1, m2 in zip(via_refine.factors, via_hooi.factors):
        np.testing.assert_allclose(m1, m2, atol=1e-12)


def test_hooi_improves_on_spectral_init():
    """Sweeps never lose reconstruction accuracy on a noisy instance."""
    rng = np.random.default_rng(7)
    t, _ = tucker_instance(20, 3, 30.0, rng)
    a = t + rng.standard_normal(t.shape)
    init = spectral_init(a, (3, 3, 3))
    fit = hooi(a, (3, 3, 3))
    err0 = np.linalg.norm(init.reconstruct() - t)
    err2 = np.linalg.norm(fit.reconstruct() - t)
    assert err2 <= err0 + 1e-9


def test_hooi_mode_relabel_equivariance():
    """Transposing the input transposes the fit."""
    rng = np.random.default_rng(8)
    t, _ = tucker_instance(9, 2, 5.0, rng)
    a = t + 0.1 * rng.standard_normal(t.shape)
    fit = hooi(a, (2, 2, 2))
    fit_t = hooi(np.ascontiguousarray(a.transpose(1, 0, 2)), (2, 2, 2))
    assert sin_theta(fit_t.u1, fit.u2).frobenius < 1e-8
    assert sin_theta(fit_t.u2, fit.u1).frobenius < 1e-8
    assert sin_theta(fit_t.u3, fit.u3).frobenius < 1e-8


def test_orth_refine_noiseless_exact():
    """Component values come back sorted with their planted magnitudes."""
    rng = np.random.default_rng(9)
    t, lams, (u, v, w) = orth_instance(15, 3, 4.0, rng)
    fit = orth_refine(t, r=3)
    order = np.argsort(fit.lambdas)[::-1]
    np.testing.assert_allclose(fit.lambdas[order], lams, atol=1e-8)
    for j, col in enumerate(order):
        assert abs(float(fit.u[:, col] @ u[:, j])) > 1.0 - 1e-8
        assert abs(float(fit.v[:, col] @ v[:, j])) > 1.0 - 1e-8
        assert abs(float(fit.w[:, col] @ w[:, j])) > 1.0 - 1e-8


def test_orth_refine_requires_init_or_r():
    with pytest.raises(ArgumentError):
        orth_refine(np.ones((3, 3, 3)))


def test_deflation_init_noiseless_close():
    """Sequential extraction lands near the planted frames before refinement."""
    rng = np.random.default_rng(10)
    t, _, (u, v, w) = orth_instance(15, 3, 4.0, rng)
    init = deflation_init(t, 3)
    assert sin_theta(init.u, u).spectral < 1e-6
    assert sin_theta(init.v, v).spectral < 1e-6
    assert sin_theta(init.w, w).spectral < 1e-6


def test_default_power_iterations_values():
    assert default_power_iterations(2) == 10
    assert default_power_iterations(100) == 10
    assert default_power_iterations(1000) == math.ceil(2.0 * math.log(1000))


def test_rank1_power_noiseless_exact():
    rng = np.random.default_rng(11)
    u = rng.standard_normal(8)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(8)
    v /= np.linalg.norm(v)
    w = rng.standard_normal(8)
    w /= np.linalg.norm(w)
    t = 3.5 * np.einsum("i,j,k->ijk", u, v, w)
    fit = rank1_power(t)
    assert fit.lambda_hat == pytest.approx(3.5, abs=1e-10) or fit.lambda_hat == pytest.approx(-3.5, abs=1e-10)
    assert abs(float(fit.u @ u)) > 1.0 - 1e-12
    np.testing.assert_allclose(fit.t_hat, t, atol=1e-10)


def test_rank1_power_noisy_error_scales():
    """Estimation error stays well under the p/lambda^2 theory scale."""
    p, gamma = 50, 1.1
    lam = p**gamma
    count = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(p)
        u /= np.linalg.norm(u)
        t = lam * np.einsum("i,j,k->ijk", u, u, u)
        a = t + rng.standard_normal(t.shape)
        fit = rank1_power(a)
        sin2 = 1.0 - float(fit.u @ u) ** 2
        count += sin2 < 10.0 * p / lam**2
    assert count == 10


def test_rank1_power_rejects_bad_budget():
    with pytest.raises(ArgumentError):
        rank1_power(np.ones((3, 3, 3)), t_max=0)
