import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deblur.errors import BadSize, NullSpaceOverlap, WrongVariant
from deblur.image import relative_error, vec
from deblur.operators import DenseOperator, assemble_dense, build_operator
from deblur.psf import gaussian_psf_2d, generate_test_image
from deblur.regularization import (FirstDerivative2D, IrlsOptions, derivative_operator,
                                   general_tikhonov_solve, null_space_gap, tikhonov_fft_solve,
                                   tikhonov_separable_solve, tv_irls_solve, tv_objective)
from deblur.svd import Tikhonov, filtered_solve, svd_of


def _dense_tikhonov(op, b, mu, L=None):
    A = assemble_dense(op)
    LtL = np.eye(op.m) if L is None else (L.dense().T @ L.dense()).toarray()
    return np.linalg.solve(A.T @ A + mu * LtL, A.T @ vec(b))


# ------------------------------------------------------------ derivative operator


def test_l1_for_p3():
    L = derivative_operator(3, 3).dense().toarray()
    L1 = np.array([[-1, 1, 0], [0, -1, 1]])
    np.testing.assert_array_equal(L, np.vstack([np.kron(np.eye(3), L1), np.kron(L1, np.eye(3))]))
    assert L.shape[0] == 2 * 3 * 2


def test_derivative_annihilates_constants():
    L = FirstDerivative2D(5, 7)
    np.testing.assert_array_equal(L.apply(np.full((5, 7), 2.5)), 0)


@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_derivative_matrix_free_matches_dense(p, q, seed):
    L = FirstDerivative2D(p, q)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p, q))
    g = rng.standard_normal(L.rows)
    D = L.dense()
    np.testing.assert_allclose(L.apply(X), D @ vec(X), atol=1e-12)
    np.testing.assert_allclose(vec(L.adjoint(g)), D.T @ g, atol=1e-12)


def test_derivative_bad_size():
    with pytest.raises(BadSize):
        FirstDerivative2D(1, 5)


def test_null_space_gap():
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 4)
    assert null_space_gap(op, FirstDerivative2D(4)) > 0
    blank = DenseOperator(np.zeros((16, 16)), 4, 4, "zero")
    with pytest.raises(NullSpaceOverlap):
        null_space_gap(blank, FirstDerivative2D(4))


# ---------------------------------------------------------------- general form


@pytest.mark.parametrize("p, hw, method", [(8, 3, "dense"), (8, 3, "cg"), (64, None, "auto")])
def test_identity_penalty_matches_svd_filter(p, hw, method):
    op = build_operator(gaussian_psf_2d(hw), "zero", p)
    b = op.apply(generate_test_image("H", p)) + 1e-3 * np.random.default_rng(0).random((p, p))
    lam = 0.02
    x = general_tikhonov_solve(op, b, mu=lam**2, method=method)
    ref = filtered_solve(svd_of(op), b, Tikhonov(lam))
    assert relative_error(x, ref) < 1e-8


def test_small_mu_recovers_inverse():
    rng = np.random.default_rng(4)
    A = np.eye(16) + 0.1 * rng.standard_normal((16, 16))
    op = DenseOperator(A, 4, 4, "zero")
    x_true = rng.standard_normal((4, 4))
    x = general_tikhonov_solve(op, op.apply(x_true), mu=1e-12)
    assert relative_error(x, x_true) < 1e-9


def test_constants_unpenalized():
    op = build_operator(gaussian_psf_2d(2, 1.0), "zero", 8)
    c = np.full((8, 8), 3.0)
    b = op.apply(c)
    L = FirstDerivative2D(8)
    norms = []
    for mu in (1e-6, 1.0, 1e6):
        x = general_tikhonov_solve(op, b, L, mu)
        norms.append(np.linalg.norm(L.apply(x)))
        assert relative_error(x, c) < 1e-6
    assert norms[-1] < 1e-9


@pytest.mark.parametrize("method", ["dense", "cg"])
def test_normal_equation_residual(method):
    op = build_operator(gaussian_psf_2d(3, 1.5), "zero", 16)
    b = np.random.default_rng(2).random((16, 16))
    L = FirstDerivative2D(16)
    mu = 1e-3
    x = general_tikhonov_solve(op, b, L, mu, method=method)
    lhs = op.apply(op.apply(x), adjoint=True) + mu * L.adjoint(L.apply(x))
    rhs = op.apply(b, adjoint=True)
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_general_form_matches_dense_oracle():
    op = build_operator(gaussian_psf_2d(2, 1.0), "reflexive", 8)
    b = np.random.default_rng(5).random((8, 8))
    L = FirstDerivative2D(8)
    x = general_tikhonov_solve(op, b, L, 1e-2)
    ref = _dense_tikhonov(op, b, 1e-2, L)
    assert relative_error(vec(x), ref) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_general_form_monotone_in_mu(seed):
    op = build_operator(gaussian_psf_2d(2, 1.0), "zero", 8)
    b = np.random.default_rng(seed).random((8, 8))
    L = FirstDerivative2D(8)
    res, pen = [], []
    for mu in np.logspace(-6, 3, 12):
        x = general_tikhonov_solve(op, b, L, mu)
        res.append(np.linalg.norm(op.apply(x) - b))
        pen.append(np.linalg.norm(L.apply(x)))
    assert np.all(np.diff(res) >= -1e-10 * max(res))
    assert np.all(np.diff(pen) <= 1e-10 * max(pen))


def test_bad_mu():
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 4)
    with pytest.raises(ValueError):
        general_tikhonov_solve(op, np.ones((4, 4)), mu=0.0)


# ------------------------------------------------------------------- fast paths


def test_fft_delta_psf():
    op = build_operator(gaussian_psf_2d(0, 1.0), "periodic", 6, 6, "bccb")
    B = np.random.default_rng(0).random((6, 6))
    np.testing.assert_allclose(tikhonov_fft_solve(op, B, 0.25), B / 1.25, atol=1e-15)


@pytest.mark.parametrize("mu", [1e-4, 1e-2, 1.0])
def test_fft_matches_dense(mu):
    op = build_operator(gaussian_psf_2d(2, 1.0), "periodic", 8, 8, "bccb")
    B = np.random.default_rng(1).random((8, 8))
    ref = _dense_tikhonov(op, B, mu)
    assert relative_error(vec(tikhonov_fft_solve(op, B, mu)), ref) < 1e-9


def test_fft_small_mu_deconvolves():
    op = build_operator(gaussian_psf_2d(1, 0.6), "periodic", 8, 8, "bccb")
    X = np.random.default_rng(2).random((8, 8))
    assert relative_error(tikhonov_fft_solve(op, op.apply(X), 1e-14), X) < 1e-8


def test_fft_wrong_variant():
    op = build_operator(gaussian_psf_2d(1, 1.0), "periodic", 4)
    with pytest.raises(WrongVariant):
        tikhonov_fft_solve(op, np.ones((4, 4)), 1.0)


def test_separable_identity():
    op = build_operator(gaussian_psf_2d(0, 1.0), "zero", 5)
    B = np.random.default_rng(0).random((5, 5))
    np.testing.assert_allclose(tikhonov_separable_solve(svd_of(op), B, 0.5), B / 1.5, atol=1e-15)


@pytest.mark.parametrize("bc", ["zero", "periodic"])
def test_separable_matches_filter_and_dense(bc):
    op = build_operator(gaussian_psf_2d(2, 1.0), bc, 8)
    svd = svd_of(op)
    B = np.random.default_rng(3).random((8, 8))
    mu = 1e-3
    X = tikhonov_separable_solve(svd, B, mu)
    assert relative_error(X, filtered_solve(svd, B, Tikhonov(np.sqrt(mu)))) < 1e-9
    assert relative_error(vec(X), _dense_tikhonov(op, B, mu)) < 1e-9


def test_separable_wrong_variant():
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 4)
    with pytest.raises(WrongVariant):
        tikhonov_separable_solve(svd_of(op, "dense"), np.ones((4, 4)), 1.0)


# -------------------------------------------------------------------------- TV


def test_irls_constant_scene_one_step():
    op = build_operator(gaussian_psf_2d(2, 1.0), "zero", 16)
    c = np.full((16, 16), 0.7)
    res = tv_irls_solve(op, op.apply(c), 1e-2, opts=IrlsOptions(max_outer=1))
    assert np.abs(res.x - c).max() < 1e-6


@pytest.mark.parametrize("p", [16, 48])
def test_irls_objective_nonincreasing(p):
    op = build_operator(gaussian_psf_2d(), "zero", p)
    x = generate_test_image("H", p)
    b = op.apply(x) + 1e-3 * np.random.default_rng(0).standard_normal((p, p))
    res = tv_irls_solve(op, b, 1e-3)
    J = res.objectives
    assert np.all(np.diff(J) <= 1e-10 * J[:-1])
    assert res.trace[0].iteration == 0 and len(J) == res.iterations + 1


def test_irls_huge_epsilon_is_quadratic():
    # weights become 1/eps, so each step is general Tikhonov with mu = lam / (2 eps)
    op = build_operator(gaussian_psf_2d(2, 1.0), "zero", 12)
    b = op.apply(generate_test_image("H", 12))
    lam, eps = 50.0, 1e6
    res = tv_irls_solve(op, b, lam, opts=IrlsOptions(epsilon=eps, max_outer=3))
    ref = general_tikhonov_solve(op, b, FirstDerivative2D(12), lam / (2 * eps))
    assert np.abs(res.x - ref).max() < 1e-6


def test_irls_trace_csv(tmp_path):
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 8)
    b = op.apply(generate_test_image("H", 8))
    res = tv_irls_solve(op, b, 1e-3, opts=IrlsOptions(max_outer=3))
    res.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,objective,residual_norm,penalty_norm"
    assert len(lines) == len(res.trace) + 1
    J, r, pen = tv_objective(op, b, res.x, 1e-3, FirstDerivative2D(8), res.epsilon)
    assert J == pytest.approx(r**2 + 1e-3 * pen)


def test_irls_options_validated():
    with pytest.raises(ValueError):
        IrlsOptions(epsilon=0.0)
    with pytest.raises(ValueError):
        IrlsOptions(max_outer=0)
    with pytest.raises(ValueError):
        IrlsOptions(tol=0.0)
