"""SVD of blur operators, Picard diagnostics and spectral filtering.

Two factorizations share one interface. :class:`DenseSvd` wraps a full
``numpy.linalg.svd``; :class:`KronSvd` keeps the SVDs of the two separable
factors and never forms the ``m x m`` singular vector matrices.

Spectral coefficients are always returned in nonincreasing order of the
singular values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotSeparable, SingularOperator, TooLarge
from .image import unvec, vec, write_csv
from .operators import MAX_DENSE, BlurOperator, assemble_dense

__all__ = [
    "DenseSvd",
    "KronSvd",
    "svd_of",
    "Naive",
    "TSVD",
    "Tikhonov",
    "PicardData",
    "picard_coefficients",
    "filtered_solve",
    "write_sigma_csv",
]


class _SvdBase:
    p: int
    q: int
    sigma: np.ndarray

    @property
    def shape(self):
        return (self.p, self.q)

    @property
    def m(self):
        return self.p * self.q

    def _check(self, B):
        B = np.asarray(B, dtype=float)
        if B.shape != self.shape:
            raise DimensionMismatch(f"image shape {B.shape} does not match {self.shape}")
        return B

    @property
    def condition_number(self) -> float:
        return float(self.sigma[0] / self.sigma[-1]) if self.sigma[-1] > 0 else np.inf


class DenseSvd(_SvdBase):
    """``A = U diag(sigma) V^T`` with explicit ``m x m`` factors."""

    def __init__(self, U, sigma, Vt, p, q):
        self.U = U
        self.sigma = sigma
        self.Vt = Vt
        self.p, self.q = p, q

    @classmethod
    def from_matrix(cls, A, p, q):
        U, s, Vt = np.linalg.svd(A)
        return cls(U, s, Vt, p, q)

    def project(self, B) -> np.ndarray:
        """Coefficients ``u_l^T vec(B)``."""
        return self.U.T @ vec(self._check(B))

    def synthesize(self, coeffs) -> np.ndarray:
        """Image of ``sum_l coeffs[l] v_l``."""
        return unvec(self.Vt.T @ np.asarray(coeffs, dtype=float), self.p, self.q)

    def project_right(self, X) -> np.ndarray:
        """Coefficients ``v_l^T vec(X)``."""
        return self.Vt @ vec(self._check(X))

    def u(self, ell: int) -> np.ndarray:
        return unvec(self.U[:, ell], self.p, self.q)

    def v(self, ell: int) -> np.ndarray:
        return unvec(self.Vt[ell], self.p, self.q)


class KronSvd(_SvdBase):
    """SVD of ``A_r kron A_c`` from the factor SVDs.

    The singular values are the products ``s_r[j] * s_c[i]``; ``perm`` lists
    the column-major flat indices ``i + j*p`` sorted by decreasing product,
    ties broken by ``(j, i)`` in lexicographic order.
    """

    def __init__(self, U_r, s_r, V_r, U_c, s_c, V_c):
        self.U_r, self.s_r, self.V_r = U_r, s_r, V_r
        self.U_c, self.s_c, self.V_c = U_c, s_c, V_c
        self.p, self.q = U_c.shape[0], U_r.shape[0]
        flat = np.kron(s_r, s_c)
        self.perm = np.argsort(-flat, kind="stable")
        self.sigma = flat[self.perm]

    @classmethod
    def from_factors(cls, A_r, A_c):
        U_r, s_r, Vt_r = np.linalg.svd(A_r)
        if A_c is A_r:
            U_c, s_c, Vt_c = U_r, s_r, Vt_r
        else:
            U_c, s_c, Vt_c = np.linalg.svd(A_c)
        return cls(U_r, s_r, Vt_r.T, U_c, s_c, Vt_c.T)

    def project(self, B) -> np.ndarray:
        C = self.U_c.T @ self._check(B) @ self.U_r
        return vec(C)[self.perm]

    def project_right(self, X) -> np.ndarray:
        C = self.V_c.T @ self._check(X) @ self.V_r
        return vec(C)[self.perm]

    def synthesize(self, coeffs) -> np.ndarray:
        z = np.empty(self.m)
        z[self.perm] = coeffs
        return self.V_c @ unvec(z, self.p, self.q) @ self.V_r.T

    def _pair(self, ell):
        k = int(self.perm[ell])
        return k % self.p, k // self.p

    def u(self, ell: int) -> np.ndarray:
        i, j = self._pair(ell)
        return np.outer(self.U_c[:, i], self.U_r[:, j])

    def v(self, ell: int) -> np.ndarray:
        i, j = self._pair(ell)
        return np.outer(self.V_c[:, i], self.V_r[:, j])


def svd_of(op: BlurOperator, variant: str | None = None):
    """Factorize ``op``: Kronecker form when separable, dense otherwise."""
    if variant is None:
        variant = "kron" if op.is_separable else "dense"
    if variant == "kron":
        if not op.is_separable:
            raise NotSeparable(f"{op!r} has no Kronecker factors")
        A_r, A_c = op.A_r, op.A_c
        if np.array_equal(A_r, A_c):
            A_c = A_r
        return KronSvd.from_factors(A_r, A_c)
    if variant == "dense":
        if op.m > MAX_DENSE:
            raise TooLarge(f"dense SVD of a {op.m}x{op.m} operator exceeds the guard {MAX_DENSE}")
        return DenseSvd.from_matrix(assemble_dense(op), op.p, op.q)
    raise ValueError(f"unknown SVD variant {variant!r}")


# ---------------------------------------------------------------------- filters


@dataclass(frozen=True)
class Naive:
    """No filtering; reproduces the least-squares solution."""

    def factors(self, sigma):
        return np.ones_like(sigma)


@dataclass(frozen=True)
class TSVD:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"TSVD cutoff must be >= 1, got {self.k}")

    def factors(self, sigma):
        if self.k > sigma.size:
            raise ValueError(f"TSVD cutoff {self.k} exceeds the {sigma.size} singular values")
        phi = np.zeros_like(sigma)
        phi[:self.k] = 1.0
        return phi


@dataclass(frozen=True)
class Tikhonov:
    """Standard-form Tikhonov filter ``sigma^2 / (sigma^2 + lam^2)``."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"Tikhonov parameter must be positive, got {self.lam}")

    def factors(self, sigma):
        return 1.0 / (1.0 + (self.lam / sigma) ** 2)


def filtered_solve(svd, b, spec=Naive()) -> np.ndarray:
    """Regularized solution ``sum_l phi_l (u_l^T b / sigma_l) v_l``."""
    beta = svd.project(b)
    sigma = svd.sigma
    if isinstance(spec, Tikhonov):
        coeffs = sigma * beta / (sigma**2 + spec.lam**2)
    else:
        phi = spec.factors(sigma)
        used = phi != 0
        if np.any(sigma[used] == 0):
            raise SingularOperator("a retained singular value is zero")
        coeffs = np.zeros_like(beta)
        coeffs[used] = phi[used] * beta[used] / sigma[used]
    return svd.synthesize(coeffs)


# ----------------------------------------------------------------------- Picard


@dataclass(frozen=True)
class PicardData:
    sigma: np.ndarray
    coeffs: np.ndarray
    ratio: np.ndarray

    def to_csv(self, path) -> None:
        rows = [(i + 1, repr(float(s)), repr(float(c)), repr(float(r)))
                for i, (s, c, r) in enumerate(zip(self.sigma, self.coeffs, self.ratio))]
        write_csv(path, ("l", "sigma", "coeff", "ratio"), rows)


def picard_coefficients(svd, b) -> PicardData:
    """``|u_l^T b|`` and ``|u_l^T b| / sigma_l`` in decreasing-sigma order."""
    coeffs = np.abs(svd.project(b))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(svd.sigma > 0, coeffs / svd.sigma, np.inf)
    return PicardData(svd.sigma.copy(), coeffs, ratio)


def write_sigma_csv(path, sigma) -> None:
    """Singular values for log plots; underflow is clamped to the smallest normal."""
    tiny = np.finfo(float).tiny
    rows = [(i + 1, repr(float(max(s, tiny)))) for i, s in enumerate(sigma)]
    write_csv(path, ("l", "sigma"), rows)
