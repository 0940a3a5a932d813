import numpy as np
import pytest
import scipy.ndimage
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from deblur.errors import DimensionMismatch, IncompatibleVariant, KernelTooWide, TooLarge
from deblur.image import unvec, vec
from deblur.operators import (BccbOperator, CirculantMatrix, SeparableOperator, ToeplitzMatrix,
                              assemble_dense, build_operator, circulant_factor_from_kernel,
                              operator_from_manifest, operator_manifest,
                              toeplitz_factor_from_kernel)
from deblur.psf import gaussian_psf_2d, generate_test_image

VARIANTS = {"zero": [None, "dense"], "periodic": [None, "bccb", "dense"],
            "reflexive": [None, "dense"]}


def _all_ops(psf, p, q):
    for bc, variants in VARIANTS.items():
        for v in variants:
            yield bc, v, build_operator(psf, bc, p, q, v)


# ------------------------------------------------------------------ factors


def test_toeplitz_delta_is_identity():
    np.testing.assert_array_equal(toeplitz_factor_from_kernel([0, 1, 0], 3).dense(), np.eye(3))


def test_toeplitz_three_tap_layout():
    a, b, c = 0.2, 0.5, 0.3
    T = toeplitz_factor_from_kernel([a, b, c], 3).dense()
    np.testing.assert_array_equal(T, [[b, a, 0], [c, b, a], [0, c, b]])


def test_toeplitz_row_sums_lose_mass_at_border():
    k = gaussian_psf_2d(2, 1.0).kernel1d
    T = toeplitz_factor_from_kernel(k, 10).dense()
    np.testing.assert_allclose(T[2:-2].sum(axis=1), 1.0, atol=1e-15)
    assert np.all(T[[0, 1, -2, -1]].sum(axis=1) < 1 - 1e-3)


def test_toeplitz_too_wide():
    with pytest.raises(KernelTooWide):
        toeplitz_factor_from_kernel(np.ones(7), 3)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_toeplitz_structure_and_matmat(p, seed):
    rng = np.random.default_rng(seed)
    T = ToeplitzMatrix(rng.standard_normal(2 * p - 1))
    D = T.dense()
    for k in range(p):
        for l in range(p):
            assert D[k, l] == T.coefficient(k - l)
    M = rng.standard_normal((p, 3))
    np.testing.assert_allclose(T.matmat(M), D @ M, atol=1e-12)
    np.testing.assert_array_equal(T.T.dense(), D.T)


def test_circulant_delta_and_shift():
    np.testing.assert_array_equal(circulant_factor_from_kernel([0, 1, 0], 4).dense(), np.eye(4))
    P = circulant_factor_from_kernel([0, 0, 1], 4).dense()
    np.testing.assert_array_equal(P.sum(axis=0), 1)
    np.testing.assert_array_equal(P.sum(axis=1), 1)
    assert set(np.unique(P)) == {0.0, 1.0}
    assert not np.array_equal(P, np.eye(4))
    # (Px)_k = x_{k-1}: the kernel moves mass forward by one sample
    np.testing.assert_array_equal(P @ np.arange(4.0), [3, 0, 1, 2])


def test_circulant_row_sums():
    C = circulant_factor_from_kernel(gaussian_psf_2d(3, 1.0).kernel1d, 9).dense()
    np.testing.assert_allclose(C.sum(axis=1), 1.0, atol=1e-15)


def test_circulant_rows_shift_right():
    c = np.arange(1.0, 6.0)
    C = CirculantMatrix(c).dense()
    np.testing.assert_array_equal(C[0], c)
    for k in range(1, 5):
        np.testing.assert_array_equal(C[k], np.roll(C[k - 1], 1))
    np.testing.assert_array_equal(CirculantMatrix(c).T.dense(), C.T)


def test_circulant_too_wide():
    with pytest.raises(KernelTooWide):
        circulant_factor_from_kernel(np.ones(5), 4)


# ------------------------------------------------------------------ operators


def test_delta_psf_is_identity():
    psf = gaussian_psf_2d(0, 1.0)
    X = np.random.default_rng(0).standard_normal((6, 5))
    for bc, v, op in _all_ops(psf, 6, 5):
        np.testing.assert_allclose(op.apply(X), X, atol=1e-15, err_msg=f"{bc}/{v}")


def test_zero_vs_periodic_differ_only_near_border():
    p, hw = 16, 4
    psf = gaussian_psf_2d(hw, 1.0)
    Az = assemble_dense(build_operator(psf, "zero", p))
    Ap = assemble_dense(build_operator(psf, "periodic", p))
    X = np.zeros((p, p))
    X[8, 7] = 1.0
    np.testing.assert_allclose(unvec(Az @ vec(X), p, p), unvec(Ap @ vec(X), p, p), atol=1e-15)
    rows = np.flatnonzero(np.abs(Az - Ap).max(axis=1) > 0)
    i, j = rows % p, rows // p
    near = (np.minimum(i, p - 1 - i) < hw) | (np.minimum(j, p - 1 - j) < hw)
    assert rows.size > 0 and near.all()


def test_bccb_constant_psf_eigenvalues():
    p, q = 4, 6
    op = BccbOperator(np.full((p, q), 1.0 / (p * q)))
    expected = np.zeros((p, q))
    expected[0, 0] = 1.0
    np.testing.assert_allclose(op.eig, expected, atol=1e-15)


def test_bccb_eig_is_dft_of_shifted_psf():
    psf = gaussian_psf_2d(2, 1.0)
    op = build_operator(psf, "periodic", 8, 8, "bccb")
    a_s = np.zeros((8, 8))
    a_s[:5, :5] = psf.kernel2d
    a_s = np.roll(a_s, (-2, -2), axis=(0, 1))
    assert a_s[0, 0] == psf.kernel2d.max()
    np.testing.assert_allclose(op.eig, np.fft.fft2(a_s), atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_bccb_diagonalization_multiset(seed):
    rng = np.random.default_rng(seed)
    op = BccbOperator(rng.random((6, 8)))
    lam = np.linalg.eigvals(assemble_dense(op))
    ref = op.eig.ravel()
    cost = np.abs(lam[:, None] - ref[None, :])
    r, c = linear_sum_assignment(cost)
    assert cost[r, c].max() < 1e-8


def test_variants_agree_with_independent_convolution():
    psf = gaussian_psf_2d(3, 1.2)
    X = np.random.default_rng(1).random((12, 10))
    k = psf.kernel2d
    ref = {"zero": scipy.signal.convolve2d(X, k, mode="same"),
           "periodic": scipy.ndimage.convolve(X, k, mode="wrap"),
           "reflexive": scipy.ndimage.convolve(X, k, mode="reflect")}
    for bc, v, op in _all_ops(psf, 12, 10):
        np.testing.assert_allclose(op.apply(X), ref[bc], atol=1e-12, err_msg=f"{bc}/{v}")


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 16), st.integers(2, 16), st.floats(0.4, 2.0), st.integers(0, 2**32 - 1))
def test_adjoint_identity(p, q, s, seed):
    hw = min(int(np.ceil(2 * s)), (min(p, q) - 1) // 2)
    psf = gaussian_psf_2d(hw, s)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, p, q))
    for bc, v, op in _all_ops(psf, p, q):
        lhs = np.sum(op.apply(x) * y)
        rhs = np.sum(x * op.apply(y, adjoint=True))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs)), f"{bc}/{v}"


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 16), st.integers(0, 2**32 - 1))
def test_representations_agree(p, seed):
    psf = gaussian_psf_2d((p - 1) // 2, 1.5)
    X = np.random.default_rng(seed).standard_normal((p, p))
    for bc, variants in VARIANTS.items():
        outs = [build_operator(psf, bc, p, p, v).apply(X) for v in variants]
        for o in outs[1:]:
            np.testing.assert_allclose(o, outs[0], atol=1e-10)


def test_separable_matches_dense_kronecker():
    psf = gaussian_psf_2d(2, 1.0)
    op = build_operator(psf, "zero", 8)
    X = np.random.default_rng(3).standard_normal((8, 8))
    np.testing.assert_allclose(vec(op.A_c @ X @ op.A_r.T), np.kron(op.A_r, op.A_c) @ vec(X),
                               atol=1e-14)
    np.testing.assert_allclose(vec(op.apply(X)), assemble_dense(op) @ vec(X), atol=1e-14)


def test_single_pixel_spreads_to_kernel():
    psf = gaussian_psf_2d()
    X = generate_test_image("single_pixel", 64)
    for bc in VARIANTS:
        Y = build_operator(psf, bc, 64).apply(X)
        np.testing.assert_allclose(Y[24:41, 24:41], psf.kernel2d, atol=1e-15)
        assert np.abs(Y).sum() == pytest.approx(1.0, abs=1e-12)


def test_apply_dimension_mismatch():
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 4)
    with pytest.raises(DimensionMismatch):
        op.apply(np.zeros((4, 5)))


def test_incompatible_variants():
    psf = gaussian_psf_2d(1, 1.0)
    with pytest.raises(IncompatibleVariant):
        build_operator(psf, "zero", 4, 4, "bccb")
    with pytest.raises(IncompatibleVariant):
        build_operator(psf, "reflexive", 4, 4, "separable")
    with pytest.raises(IncompatibleVariant):
        build_operator(psf, "periodic", 4, 4, "matvec")


def test_kronecker_block_formula_2x2():
    a, b, c = 0.5, 0.2, 0.3
    M = np.array([[a, b], [c, a]])
    T = ToeplitzMatrix([b, a, c])
    np.testing.assert_array_equal(T.dense(), M)
    A = assemble_dense(SeparableOperator(T, T))
    expected = np.block([[a * M, b * M], [c * M, a * M]])
    np.testing.assert_allclose(A, expected, atol=1e-16)


def test_bttb_and_bccb_block_layout():
    psf = gaussian_psf_2d(2, 1.0)
    p = 6
    A = assemble_dense(build_operator(psf, "zero", p))
    blocks = {}
    for i in range(p):
        for j in range(p):
            blk = A[i * p:(i + 1) * p, j * p:(j + 1) * p]
            blocks.setdefault(i - j, blk)
            np.testing.assert_array_equal(blk, blocks[i - j])
    Ab = assemble_dense(build_operator(psf, "periodic", p, p, "bccb"))
    first = unvec(Ab[:, 0], p, p)
    for col in range(p * p):
        i, j = col % p, col // p
        np.testing.assert_allclose(unvec(Ab[:, col], p, p), np.roll(first, (i, j), axis=(0, 1)),
                                   atol=1e-15)


def test_assemble_guard():
    op = build_operator(gaussian_psf_2d(1, 1.0), "zero", 65, 64)
    with pytest.raises(TooLarge):
        assemble_dense(op)


@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_periodic_conserves_intensity(p, seed):
    psf = gaussian_psf_2d((p - 1) // 2, 1.0)
    X = np.random.default_rng(seed).random((p, p))
    for v in (None, "bccb"):
        assert build_operator(psf, "periodic", p, p, v).apply(X).sum() == pytest.approx(
            X.sum(), abs=1e-10)


def test_manifest_roundtrip():
    psf = gaussian_psf_2d(3, 1.25)
    for bc, v, op in _all_ops(psf, 8, 7):
        text = operator_manifest(op)
        assert "s=1.25" in text and "half_width=3" in text and f"bc={bc}" in text
        op2 = operator_from_manifest(text)
        assert op2.variant == op.variant
        X = np.random.default_rng(0).random((8, 7))
        np.testing.assert_array_equal(op2.apply(X), op.apply(X))
