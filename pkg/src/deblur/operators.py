"""Blur operators under zero, periodic and reflexive boundary conditions.

All operators act on ``p x q`` images and agree with the matrix ``A`` acting
on ``vec(X)``. The separable variants store two 1-D factors and represent
``A = A_r kron A_c``, applied as ``A_c @ X @ A_r.T``; ``A_c`` is ``p x p``
and ``A_r`` is ``q x q``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.signal
from scipy.sparse.linalg import LinearOperator

from .errors import DimensionMismatch, IncompatibleVariant, KernelTooWide, TooLarge
from .image import unvec, vec
from .psf import GaussianPsf, gaussian_psf_2d

__all__ = [
    "BoundaryCondition",
    "ToeplitzMatrix",
    "CirculantMatrix",
    "BlurOperator",
    "DenseOperator",
    "SeparableOperator",
    "BccbOperator",
    "ReflexiveOperator",
    "toeplitz_factor_from_kernel",
    "circulant_factor_from_kernel",
    "build_operator",
    "assemble_dense",
    "operator_manifest",
    "operator_from_manifest",
    "MAX_DENSE",
]

#: largest ``m = p*q`` for which dense ``m x m`` matrices are formed
MAX_DENSE = 4096


class BoundaryCondition(str, enum.Enum):
    ZERO = "zero"
    PERIODIC = "periodic"
    REFLEXIVE = "reflexive"

    def __str__(self):
        return self.value


# ------------------------------------------------------------------ 1-D factors


@dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    """``p x p`` Toeplitz matrix with ``T[k, l] = t_{k-l}``.

    ``t`` holds ``t_{-(p-1)}, ..., t_{p-1}``, i.e. ``t[d + p - 1] = t_d``.
    """

    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float).ravel()
        if t.size % 2 == 0:
            raise ValueError(f"Toeplitz vector must have odd length 2p-1, got {t.size}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def p(self) -> int:
        return (self.t.size + 1) // 2

    def coefficient(self, d: int) -> float:
        return float(self.t[d + self.p - 1])

    def dense(self) -> np.ndarray:
        p = self.p
        return scipy.linalg.toeplitz(self.t[p - 1:], self.t[p - 1::-1])

    @property
    def T(self) -> "ToeplitzMatrix":
        return ToeplitzMatrix(self.t[::-1])

    @cached_property
    def _spectrum(self) -> np.ndarray:
        # first column of the 2p circulant embedding
        p = self.p
        col = np.concatenate([self.t[p - 1:], [0.0], self.t[:p - 1]])
        return np.fft.rfft(col)

    def matmat(self, M: np.ndarray) -> np.ndarray:
        """``T @ M`` via circulant embedding and FFT along axis 0."""
        p = self.p
        F = np.fft.rfft(M, n=2 * p, axis=0)
        spec = self._spectrum.reshape((-1,) + (1,) * (M.ndim - 1))
        return np.fft.irfft(spec * F, n=2 * p, axis=0)[:p]


@dataclass(frozen=True, eq=False)
class CirculantMatrix:
    """``p x p`` circulant matrix given by its first row ``c``.

    Each row is the cyclic right shift of the previous one, so
    ``C[k, l] = c[(l - k) mod p]``.
    """

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        if c.size < 1:
            raise ValueError("empty circulant")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def p(self) -> int:
        return self.c.size

    @property
    def column(self) -> np.ndarray:
        return np.roll(self.c[::-1], 1)

    def dense(self) -> np.ndarray:
        return scipy.linalg.circulant(self.column)

    @property
    def T(self) -> "CirculantMatrix":
        return CirculantMatrix(self.column)

    @cached_property
    def _spectrum(self) -> np.ndarray:
        return np.fft.rfft(self.column)

    def matmat(self, M: np.ndarray) -> np.ndarray:
        p = self.p
        spec = self._spectrum.reshape((-1,) + (1,) * (M.ndim - 1))
        return np.fft.irfft(spec * np.fft.rfft(M, axis=0), n=p, axis=0)


def _check_kernel(kernel1d) -> tuple[np.ndarray, int]:
    k = np.asarray(kernel1d, dtype=float).ravel()
    if k.size % 2 == 0:
        raise ValueError(f"kernel length must be odd, got {k.size}")
    return k, k.size // 2


def toeplitz_factor_from_kernel(kernel1d, p: int) -> ToeplitzMatrix:
    """Zero-boundary 1-D blur: ``t_d = kernel[center + d]``, zero beyond the kernel."""
    k, hw = _check_kernel(kernel1d)
    if k.size > 2 * p - 1:
        raise KernelTooWide(f"kernel of length {k.size} does not fit a {p}x{p} Toeplitz matrix")
    t = np.zeros(2 * p - 1)
    t[p - 1 - hw:p + hw] = k
    return ToeplitzMatrix(t)


def circulant_factor_from_kernel(kernel1d, p: int) -> CirculantMatrix:
    """Periodic 1-D blur; the kernel center sits at index 0 of the first column."""
    k, hw = _check_kernel(kernel1d)
    if k.size > p:
        raise KernelTooWide(f"kernel of length {k.size} exceeds circulant size {p}")
    col = np.zeros(p)
    col[(np.arange(-hw, hw + 1)) % p] = k
    return CirculantMatrix(np.roll(col[::-1], 1))


# ------------------------------------------------------------------- operators


class BlurOperator:
    """Common interface of all blur operator variants."""

    variant = "abstract"

    def __init__(self, p: int, q: int, bc, psf: GaussianPsf | None = None):
        self.p = int(p)
        self.q = int(q)
        self.bc = BoundaryCondition(bc)
        self.psf = psf

    @property
    def shape(self) -> tuple[int, int]:
        return (self.p, self.q)

    @property
    def m(self) -> int:
        return self.p * self.q

    @property
    def is_separable(self) -> bool:
        return False

    def __repr__(self):
        return f"{type(self).__name__}({self.p}x{self.q}, bc={self.bc.value})"

    def apply(self, X, adjoint: bool = False) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape != self.shape:
            raise DimensionMismatch(f"image shape {X.shape} does not match operator {self.shape}")
        return self._adjoint(X) if adjoint else self._forward(X)

    def matvec(self, x) -> np.ndarray:
        return vec(self.apply(unvec(x, self.p, self.q)))

    def rmatvec(self, x) -> np.ndarray:
        return vec(self.apply(unvec(x, self.p, self.q), adjoint=True))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.m, self.m), matvec=self.matvec, rmatvec=self.rmatvec,
                              dtype=float)

    def descriptor(self) -> dict:
        d = {"variant": self.variant, "bc": self.bc.value}
        if self.psf is not None:
            d["s"] = self.psf.s
            d["half_width"] = self.psf.half_width
        d["p"] = self.p
        d["q"] = self.q
        return d

    def _forward(self, X):
        raise NotImplementedError

    def _adjoint(self, X):
        raise NotImplementedError

    def _dense(self) -> np.ndarray:
        # column j is the blurred unit image e_j
        A = np.empty((self.m, self.m))
        E = np.zeros(self.shape)
        for j in range(self.m):
            idx = (j % self.p, j // self.p)
            E[idx] = 1.0
            A[:, j] = vec(self._forward(E))
            E[idx] = 0.0
        return A


class DenseOperator(BlurOperator):
    variant = "dense"

    def __init__(self, matrix, p, q, bc, psf=None):
        super().__init__(p, q, bc, psf)
        matrix = np.array(matrix, dtype=float)
        if matrix.shape != (self.m, self.m):
            raise DimensionMismatch(f"matrix shape {matrix.shape} does not match {p}x{q} images")
        matrix.setflags(write=False)
        self.matrix = matrix

    def _forward(self, X):
        return unvec(self.matrix @ vec(X), self.p, self.q)

    def _adjoint(self, X):
        return unvec(self.matrix.T @ vec(X), self.p, self.q)

    def _dense(self):
        return self.matrix.copy()


class SeparableOperator(BlurOperator):
    """``A = A_r kron A_c`` with Toeplitz (zero bc) or circulant (periodic bc) factors."""

    def __init__(self, row_factor, col_factor, bc=None, psf=None):
        if type(row_factor) is not type(col_factor):
            raise TypeError("row and column factors must be of the same kind")
        kind = type(row_factor)
        if kind is ToeplitzMatrix:
            default_bc = BoundaryCondition.ZERO
        elif kind is CirculantMatrix:
            default_bc = BoundaryCondition.PERIODIC
        else:
            raise TypeError(f"unsupported factor type {kind.__name__}")
        bc = default_bc if bc is None else BoundaryCondition(bc)
        if bc is not default_bc:
            raise IncompatibleVariant(f"{kind.__name__} factors require bc={default_bc.value}")
        super().__init__(col_factor.p, row_factor.p, bc, psf)
        self.row_factor = row_factor
        self.col_factor = col_factor

    @property
    def variant(self):
        if isinstance(self.row_factor, ToeplitzMatrix):
            return "separable_toeplitz"
        return "separable_circulant"

    @property
    def is_separable(self):
        return True

    @property
    def A_r(self) -> np.ndarray:
        return self.row_factor.dense()

    @property
    def A_c(self) -> np.ndarray:
        return self.col_factor.dense()

    def _forward(self, X):
        Y = self.col_factor.matmat(X)
        return self.row_factor.matmat(Y.T).T

    def _adjoint(self, X):
        Y = self.col_factor.T.matmat(X)
        return self.row_factor.T.matmat(Y.T).T

    def _dense(self):
        return np.kron(self.A_r, self.A_c)


class BccbOperator(BlurOperator):
    """Periodic 2-D convolution diagonalized by the 2-D DFT.

    ``eig = fft2(psf_shifted)`` with the unnormalized forward transform, so
    ``apply(X) = ifft2(eig * fft2(X))``.
    """

    variant = "bccb"

    def __init__(self, psf_shifted, psf=None):
        a_s = np.array(psf_shifted, dtype=float)
        p, q = a_s.shape
        super().__init__(p, q, BoundaryCondition.PERIODIC, psf)
        a_s.setflags(write=False)
        self.psf_shifted = a_s
        eig = np.fft.fft2(a_s)
        eig.setflags(write=False)
        self.eig = eig

    def _forward(self, X):
        return np.fft.ifft2(self.eig * np.fft.fft2(X)).real

    def _adjoint(self, X):
        return np.fft.ifft2(np.conj(self.eig) * np.fft.fft2(X)).real

    def _dense(self):
        p, q = self.shape
        i = np.arange(p)
        j = np.arange(q)
        di = (i[:, None, None, None] - i[None, None, :, None]) % p
        dj = (j[None, :, None, None] - j[None, None, None, :]) % q
        A4 = self.psf_shifted[di, dj]  # axes (i, j, k, l)
        return A4.transpose(1, 0, 3, 2).reshape(self.m, self.m)


class ReflexiveOperator(BlurOperator):
    """Matrix-free blur with mirrored (symmetric) extension outside the image."""

    variant = "reflexive_matvec"

    def __init__(self, kernel2d, p, q, psf=None):
        super().__init__(p, q, BoundaryCondition.REFLEXIVE, psf)
        k = np.array(kernel2d, dtype=float)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValueError(f"kernel must be 2-D with odd sides, got {k.shape}")
        k.setflags(write=False)
        self.kernel2d = k
        hr, hc = k.shape[0] // 2, k.shape[1] // 2
        self._rows = np.pad(np.arange(self.p), hr, mode="symmetric")
        self._cols = np.pad(np.arange(self.q), hc, mode="symmetric")

    def _forward(self, X):
        Xp = X[np.ix_(self._rows, self._cols)]
        return scipy.signal.convolve2d(Xp, self.kernel2d, mode="valid")

    def _adjoint(self, X):
        Z = scipy.signal.convolve2d(X, self.kernel2d[::-1, ::-1], mode="full")
        out = np.zeros(self.shape)
        np.add.at(out, (self._rows[:, None], self._cols[None, :]), Z)
        return out


# ----------------------------------------------------------------- construction


def _shifted_psf(kernel2d, p, q) -> np.ndarray:
    k = np.asarray(kernel2d, dtype=float)
    if k.shape[0] > p or k.shape[1] > q:
        raise KernelTooWide(f"kernel {k.shape} does not fit a {p}x{q} periodic image")
    a = np.zeros((p, q))
    a[:k.shape[0], :k.shape[1]] = k
    return np.roll(a, (-(k.shape[0] // 2), -(k.shape[1] // 2)), axis=(0, 1))


def build_operator(psf: GaussianPsf, bc="zero", p: int = 64, q: int | None = None,
                   variant: str | None = None) -> BlurOperator:
    """Construct the blur operator for ``psf`` on ``p x q`` images.

    ``variant`` is one of ``None`` (natural structure for ``bc``),
    ``"separable"``, ``"bccb"``, ``"dense"`` or ``"matvec"``.
    """
    q = p if q is None else q
    bc = BoundaryCondition(bc)
    variant = (variant or "auto").lower()
    if variant not in ("auto", "separable", "bccb", "dense", "matvec"):
        raise ValueError(f"unknown operator variant {variant!r}")

    if bc is BoundaryCondition.REFLEXIVE:
        if variant in ("separable", "bccb"):
            raise IncompatibleVariant(f"variant {variant!r} is not available for reflexive bc")
        op = ReflexiveOperator(psf.kernel2d, p, q, psf)
        if variant == "dense":
            return DenseOperator(assemble_dense(op), p, q, bc, psf)
        return op

    if variant == "matvec":
        raise IncompatibleVariant("the matvec-only variant is reserved for reflexive bc")
    if variant == "bccb":
        if bc is not BoundaryCondition.PERIODIC:
            raise IncompatibleVariant("BCCB structure requires periodic bc")
        return BccbOperator(_shifted_psf(psf.kernel2d, p, q), psf)

    if bc is BoundaryCondition.ZERO:
        op = SeparableOperator(toeplitz_factor_from_kernel(psf.kernel1d, q),
                               toeplitz_factor_from_kernel(psf.kernel1d, p), bc, psf)
    else:
        op = SeparableOperator(circulant_factor_from_kernel(psf.kernel1d, q),
                               circulant_factor_from_kernel(psf.kernel1d, p), bc, psf)
    if variant == "dense":
        return DenseOperator(op._dense(), p, q, bc, psf)
    return op


def assemble_dense(op: BlurOperator) -> np.ndarray:
    """Explicit ``m x m`` matrix of ``op``; guarded by :data:`MAX_DENSE`."""
    if op.m > MAX_DENSE:
        raise TooLarge(f"refusing to assemble a dense {op.m}x{op.m} matrix (limit {MAX_DENSE})")
    return op._dense()


def operator_manifest(op: BlurOperator) -> str:
    """Text description ``key=value`` sufficient to rebuild a PSF-based operator."""
    return "".join(f"{k}={v}\n" for k, v in op.descriptor().items())


_VARIANT_HINT = {
    "dense": "dense",
    "separable_toeplitz": "separable",
    "separable_circulant": "separable",
    "bccb": "bccb",
    "reflexive_matvec": "matvec",
}


def operator_from_manifest(text_or_dict) -> BlurOperator:
    if isinstance(text_or_dict, str):
        d = dict(line.split("=", 1) for line in text_or_dict.splitlines() if "=" in line)
    else:
        d = dict(text_or_dict)
    if "s" not in d:
        raise ValueError("manifest has no PSF parameters")
    psf = gaussian_psf_2d(int(d["half_width"]), float(d["s"]))
    return build_operator(psf, d["bc"], int(d["p"]), int(d["q"]),
                          _VARIANT_HINT[d.get("variant", "dense")])
