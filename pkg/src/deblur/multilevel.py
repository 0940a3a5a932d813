"""Haar-wavelet restriction and structure-preserving coarsening of blur operators.

The restriction is ``R = W1 kron W1`` where ``W1`` is the low-pass half of the
orthonormal Haar transform, and the prolongation is ``P = R^T``. For a
separable operator ``A_r kron A_c`` the coarse operator ``R A P`` is again
separable with factors ``W1 A_r W1^T`` and ``W1 A_c W1^T``, and those keep
Toeplitz or circulant structure.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NotPowerOfTwo, NotSeparable, OddDimension, TooDeep
from .operators import BlurOperator, CirculantMatrix, SeparableOperator, ToeplitzMatrix
from .param_select import discrepancy_lambda, discrepancy_search
from .regularization import FirstDerivative2D, IrlsOptions, general_tikhonov_solve, tv_irls_solve
from .svd import Tikhonov, filtered_solve, svd_of

__all__ = [
    "HaarRestriction",
    "haar_w1",
    "haar_matrix",
    "restrict_image",
    "prolong_image",
    "coarsen_toeplitz",
    "coarsen_circulant",
    "Level",
    "LevelHierarchy",
    "build_hierarchy",
    "MultilevelResult",
    "multilevel_solve",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class HaarRestriction:
    p: int
    W1: np.ndarray

    @property
    def W2(self) -> np.ndarray:
        W2 = self.W1.copy()
        W2[:, 1::2] *= -1
        return W2

    @property
    def W(self) -> np.ndarray:
        return np.vstack([self.W1, self.W2])


def haar_w1(p: int) -> HaarRestriction:
    """Low-pass Haar block: row ``i`` has ``1/sqrt(2)`` in columns ``2i`` and ``2i+1``."""
    if p < 2 or p % 2:
        raise OddDimension(f"Haar restriction needs an even size >= 2, got {p}")
    W1 = np.zeros((p // 2, p))
    r = np.arange(p // 2)
    W1[r, 2 * r] = W1[r, 2 * r + 1] = 1.0 / np.sqrt(2.0)
    W1.setflags(write=False)
    return HaarRestriction(p, W1)


def haar_matrix(p: int) -> np.ndarray:
    """The full orthonormal ``p x p`` Haar matrix ``[W1; W2]``."""
    return haar_w1(p).W


def restrict_image(X) -> np.ndarray:
    """``W1 X W1^T``, i.e. ``unvec(R vec(X))``; both sides halve."""
    X = np.asarray(X, dtype=float)
    p, q = X.shape
    if p % 2 or q % 2:
        raise OddDimension(f"cannot restrict a {p}x{q} image")
    # each coarse pixel is half the sum of a 2x2 block
    return 0.5 * (X[0::2, 0::2] + X[1::2, 0::2] + X[0::2, 1::2] + X[1::2, 1::2])


def prolong_image(X) -> np.ndarray:
    """``W1^T X W1``, the transpose of :func:`restrict_image`; sides double."""
    X = np.asarray(X, dtype=float)
    return 0.5 * np.kron(X, np.ones((2, 2)))


def coarsen_toeplitz(t, p: int | None = None) -> np.ndarray:
    """Toeplitz vector of ``W1 T W1^T`` for a ``p x p`` Toeplitz ``T``.

    Forms ``t~ = T~ t`` with ``T~`` the ``(2p-1) x (2p-1)`` Toeplitz matrix whose
    only nonzero coefficients are ``1/2`` at offsets ``0`` and ``-2`` and ``1``
    at offset ``-1``, then keeps entries ``1, 3, ..., 2p-3`` (1-based).
    """
    t = np.asarray(t, dtype=float).ravel()
    if p is None:
        p = (t.size + 1) // 2
    if not _is_power_of_two(p):
        raise NotPowerOfTwo(f"Toeplitz coarsening needs p = 2^s, got {p}")
    if t.size != 2 * p - 1:
        raise ValueError(f"Toeplitz vector for p={p} must have length {2 * p - 1}, got {t.size}")
    n = 2 * p - 1
    col = np.zeros(n)
    col[0] = 0.5
    row = np.zeros(n)
    row[:3] = (0.5, 1.0, 0.5)
    t_tilde = scipy.linalg.toeplitz(col, row) @ t
    return t_tilde[0:2 * p - 3:2]


def coarsen_circulant(c, p: int | None = None) -> np.ndarray:
    """First row of ``W1 C W1^T`` for a circulant ``C`` with first row ``c``."""
    c = np.asarray(c, dtype=float).ravel()
    if p is None:
        p = c.size
    if not _is_power_of_two(p):
        raise NotPowerOfTwo(f"circulant coarsening needs p = 2^s, got {p}")
    if c.size != p:
        raise ValueError(f"first row must have length {p}, got {c.size}")
    even = c[0::2]
    odd = c[1::2]
    # c[2j] + (c[2j+1] + c[2j-1]) / 2, indices mod p
    return even + 0.5 * (odd + np.roll(odd, 1))


def _coarsen_factor(f):
    if isinstance(f, ToeplitzMatrix):
        return ToeplitzMatrix(coarsen_toeplitz(f.t))
    return CirculantMatrix(coarsen_circulant(f.c))


# ------------------------------------------------------------------- hierarchy


@dataclass
class Level:
    op: SeparableOperator
    b: np.ndarray

    @property
    def p(self) -> int:
        return self.op.p

    @property
    def structure(self) -> str:
        return self.op.variant


@dataclass
class LevelHierarchy:
    levels: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, n) -> Level:
        return self.levels[n]

    @property
    def structure_tags(self) -> list:
        return [lv.structure for lv in self.levels]

    def manifest(self) -> str:
        """One line per level: ``level p structure checksum`` of the factor vectors."""
        lines = []
        for n, lv in enumerate(self.levels):
            h = hashlib.sha256()
            for f in (lv.op.row_factor, lv.op.col_factor):
                vecs = f.t if isinstance(f, ToeplitzMatrix) else f.c
                h.update(np.ascontiguousarray(vecs, dtype="<f8").tobytes())
            lines.append(f"level={n} p={lv.op.p} q={lv.op.q} structure={lv.structure} "
                         f"checksum={h.hexdigest()[:16]}")
        return "\n".join(lines) + "\n"


def build_hierarchy(op: BlurOperator, b, depth: int) -> LevelHierarchy:
    """Coarsen a separable operator and its data ``depth`` times."""
    if not isinstance(op, SeparableOperator):
        raise NotSeparable(f"multilevel coarsening needs a separable operator, got {op.variant}")
    p, q = op.shape
    if p != q or not _is_power_of_two(p):
        raise NotPowerOfTwo(f"hierarchy needs square power-of-two images, got {p}x{q}")
    s = p.bit_length() - 1
    if depth < 0 or depth > s - 2:
        raise TooDeep(f"depth {depth} not in [0, {s - 2}] for {p}x{p} images "
                      "(coarsest level must be at least 4x4)")
    b = np.asarray(b, dtype=float)
    levels = [Level(op, b)]
    for _ in range(depth):
        prev = levels[-1]
        coarse = SeparableOperator(_coarsen_factor(prev.op.row_factor),
                                   _coarsen_factor(prev.op.col_factor), prev.op.bc)
        levels.append(Level(coarse, restrict_image(prev.b)))
    return LevelHierarchy(levels)


@dataclass
class MultilevelResult:
    x: np.ndarray
    level: int
    method: str
    parameter: float
    delta: float | None
    seconds: float


def _restrict_n(X, n):
    for _ in range(n):
        X = restrict_image(X)
    return X


def multilevel_solve(h: LevelHierarchy, level: int, method: str = "tikhonov", *,
                     mu: float | None = None, delta: float | None = None, noise=None,
                     tau: float = 1.0, prolong: bool = False,
                     irls: IrlsOptions | None = None) -> MultilevelResult:
    """Regularized solve of ``A^(n) x = b^(n)`` on one level of the hierarchy.

    The parameter is either fixed (``mu``; for ``"tikhonov"`` this is the
    squared standard-form ``lam``) or chosen by the discrepancy principle. The
    noise norm at level ``n`` is ``||R^n e||`` when the noise image is given,
    otherwise ``delta / 2**n``.

    With ``prolong=True`` the result is mapped back to the finest grid by
    ``P^n``; this is a visualization aid only.
    """
    if not 0 <= level <= h.depth:
        raise TooDeep(f"level {level} not in hierarchy of depth {h.depth}")
    lv = h[level]
    op, b = lv.op, lv.b
    if mu is None:
        if noise is not None:
            delta_n = float(np.linalg.norm(_restrict_n(np.asarray(noise, dtype=float), level)))
        elif delta is not None:
            delta_n = float(delta) / 2**level
        else:
            raise ValueError("give either a fixed mu or a noise estimate")
    else:
        delta_n = None

    start = time.perf_counter()
    if method == "tikhonov":
        svd = svd_of(op)
        if mu is None:
            lam = discrepancy_lambda(svd, b, delta_n, tau)
            mu_used = lam**2
        else:
            lam, mu_used = float(np.sqrt(mu)), mu
        x = filtered_solve(svd, b, Tikhonov(lam))
    elif method == "gtik":
        L = FirstDerivative2D(*op.shape)

        def solve(m):
            return general_tikhonov_solve(op, b, L, m)

        mu_used = mu if mu is not None else discrepancy_search(
            lambda m: np.linalg.norm(op.apply(solve(m)) - b), tau * delta_n, 1e-12, 1e2)
        x = solve(mu_used)
    elif method == "tv":
        def solve(lam):
            return tv_irls_solve(op, b, lam, opts=irls).x

        mu_used = mu if mu is not None else discrepancy_search(
            lambda lam: np.linalg.norm(op.apply(solve(lam)) - b), tau * delta_n,
            1e-10, 1e1, rtol=1e-3)
        x = solve(mu_used)
    else:
        raise ValueError(f"unknown method {method!r}")
    seconds = time.perf_counter() - start

    if prolong:
        for _ in range(level):
            x = prolong_image(x)
    return MultilevelResult(x, level, method, float(mu_used), delta_n, seconds)
