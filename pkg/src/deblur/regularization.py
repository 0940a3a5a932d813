"""Variational deblurring: general-form Tikhonov, FFT and Kronecker fast paths, TV.

The penalty multiplier is always called ``mu``. The standard-form filter
parameter ``lam`` used in :mod:`deblur.svd` corresponds to ``mu = lam**2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .errors import BadSize, NotConverged, NullSpaceOverlap, WrongVariant
from .image import unvec, vec, write_csv
from .operators import BccbOperator, BlurOperator, assemble_dense
from .svd import KronSvd

__all__ = [
    "IdentityRegularizer",
    "FirstDerivative2D",
    "derivative_operator",
    "null_space_gap",
    "general_tikhonov_solve",
    "tikhonov_fft_solve",
    "tikhonov_separable_solve",
    "IrlsOptions",
    "IrlsStep",
    "IrlsResult",
    "tv_irls_solve",
    "tv_objective",
    "DENSE_SOLVE_LIMIT",
]

#: unstructured operators up to this many unknowns use a dense Cholesky solve
DENSE_SOLVE_LIMIT = 1024


class IdentityRegularizer:
    """``L = I`` on ``p x q`` images."""

    def __init__(self, p, q=None):
        self.p = int(p)
        self.q = int(p if q is None else q)

    @property
    def rows(self):
        return self.p * self.q

    def apply(self, X):
        return vec(X)

    def adjoint(self, g):
        return unvec(g, self.p, self.q)

    def dense(self):
        return sp.identity(self.rows, format="csr")


class FirstDerivative2D:
    """Zero-boundary forward differences ``L = [I kron L1; L1 kron I]``.

    ``L1`` is the ``(n-1) x n`` matrix with rows ``(.., -1, 1, ..)``. Applied
    to ``vec(X)`` the first block differences along columns (axis 0), the
    second along rows (axis 1).
    """

    def __init__(self, p, q=None):
        q = p if q is None else q
        if p < 2 or q < 2:
            raise BadSize(f"first differences need at least 2x2 pixels, got {p}x{q}")
        self.p, self.q = int(p), int(q)

    @property
    def rows(self):
        return (self.p - 1) * self.q + self.p * (self.q - 1)

    @property
    def _split(self):
        return (self.p - 1) * self.q

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        return np.concatenate([vec(np.diff(X, axis=0)), vec(np.diff(X, axis=1))])

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        G1 = unvec(g[:self._split], self.p - 1, self.q)
        G2 = unvec(g[self._split:], self.p, self.q - 1)
        out = np.zeros((self.p, self.q))
        out[1:, :] += G1
        out[:-1, :] -= G1
        out[:, 1:] += G2
        out[:, :-1] -= G2
        return out

    def dense(self):
        def l1(n):
            return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))

        top = sp.kron(sp.identity(self.q), l1(self.p))
        bottom = sp.kron(l1(self.q), sp.identity(self.p))
        return sp.vstack([top, bottom]).tocsr()


def derivative_operator(p, q=None) -> FirstDerivative2D:
    return FirstDerivative2D(p, q)


def null_space_gap(op: BlurOperator, L) -> float:
    """Smallest singular value of ``[A; L]``; raises when it vanishes."""
    A = assemble_dense(op)
    stacked = np.vstack([A, L.dense().toarray()])
    smin = np.linalg.svd(stacked, compute_uv=False)[-1]
    if smin <= 1e-12 * max(1.0, np.linalg.norm(A, 2)):
        raise NullSpaceOverlap(f"[A; L] is rank deficient (smallest singular value {smin:.3g})")
    return float(smin)


# ------------------------------------------------------------ normal equations


class _NormalSystem:
    """Solver for ``(A^T A + mu L^T W L) x = rhs`` reused across calls."""

    def __init__(self, op: BlurOperator, L, method="auto", rtol=1e-8, maxiter=20000):
        if method == "auto":
            # structured operators have a cheap spectral preconditioner
            structured = op.is_separable or isinstance(op, BccbOperator)
            method = "cg" if structured or op.m > DENSE_SOLVE_LIMIT else "dense"
        if method not in ("dense", "cg"):
            raise ValueError(f"unknown solver method {method!r}")
        self.op, self.L = op, L
        self.method = method
        self.rtol = rtol
        self.maxiter = maxiter
        self._gram = None
        self._Ld = None
        self._spectral = None

    # dense path
    def _dense_gram(self):
        if self._gram is None:
            op = self.op
            if op.is_separable:
                A_r, A_c = op.A_r, op.A_c
                self._gram = np.kron(A_r.T @ A_r, A_c.T @ A_c)
            else:
                A = assemble_dense(op)
                self._gram = A.T @ A
            self._Ld = self.L.dense()
        return self._gram

    def _solve_dense(self, rhs, mu, weights):
        K = self._dense_gram().copy()
        Ld = self._Ld
        if weights is not None:
            Ld = sp.diags(weights) @ Ld
            K += mu * (self._Ld.T @ Ld).toarray()
        else:
            K += mu * (Ld.T @ Ld).toarray()
        try:
            factor = scipy.linalg.cho_factor(K)
        except np.linalg.LinAlgError as exc:
            raise NullSpaceOverlap("normal matrix is not positive definite; "
                                   "N(A) and N(L) intersect") from exc
        x = scipy.linalg.cho_solve(factor, rhs)
        # one step of iterative refinement
        x += scipy.linalg.cho_solve(factor, rhs - K @ x)
        return x

    # matrix-free path
    def _preconditioner(self, mu, omega):
        op = self.op
        p, q = op.shape
        if op.is_separable:
            if self._spectral is None:
                U_r, s_r, Vt_r = np.linalg.svd(op.A_r)
                U_c, s_c, Vt_c = np.linalg.svd(op.A_c)
                self._spectral = (Vt_r.T, Vt_c.T, np.outer(s_c, s_r) ** 2)
            V_r, V_c, D2 = self._spectral
            denom = D2 + mu * omega

            def apply(r):
                R = unvec(r, p, q)
                return vec(V_c @ ((V_c.T @ R @ V_r) / denom) @ V_r.T)
        elif isinstance(op, BccbOperator):
            denom = np.abs(op.eig) ** 2 + mu * omega

            def apply(r):
                R = unvec(r, p, q)
                return vec(np.fft.ifft2(np.fft.fft2(R) / denom).real)
        else:
            return None
        return LinearOperator((op.m, op.m), matvec=apply, dtype=float)

    def _solve_cg(self, rhs, mu, weights, x0):
        op, L = self.op, self.L
        p, q = op.shape
        w = 1.0 if weights is None else weights

        def matvec(x):
            X = unvec(x, p, q)
            AtAx = op.apply(op.apply(X), adjoint=True)
            return vec(AtAx + mu * L.adjoint(w * L.apply(X)))

        K = LinearOperator((op.m, op.m), matvec=matvec, dtype=float)
        omega = 1.0 if weights is None else float(np.median(weights))
        M = self._preconditioner(mu, omega)
        x, info = cg(K, rhs, x0=x0, rtol=self.rtol, atol=0.0, maxiter=self.maxiter, M=M)
        if info != 0:
            raise NotConverged(f"conjugate gradients stopped after {info} iterations "
                               f"without reaching rtol={self.rtol}")
        return x

    def solve(self, rhs, mu, weights=None, x0=None):
        if not mu > 0:
            raise ValueError(f"penalty multiplier must be positive, got {mu}")
        if self.method == "dense":
            return self._solve_dense(rhs, mu, weights)
        return self._solve_cg(rhs, mu, weights, x0)


def general_tikhonov_solve(op: BlurOperator, b, L=None, mu: float = 1e-3, *,
                           weights=None, x0=None, method="auto", rtol=1e-8) -> np.ndarray:
    """Minimize ``||A x - b||^2 + mu ||W^(1/2) L x||^2``.

    Solves the normal equations ``(A^T A + mu L^T W L) x = A^T b``. With
    ``method="auto"`` separable and BCCB operators use conjugate gradients
    preconditioned by the ``L = I`` spectral solve; other operators use a
    dense Cholesky factorization up to :data:`DENSE_SOLVE_LIMIT` unknowns
    and plain conjugate gradients beyond. ``L`` defaults to the identity.

    Returns the solution as an image.
    """
    b = np.asarray(b, dtype=float)
    if L is None:
        L = IdentityRegularizer(*op.shape)
    system = _NormalSystem(op, L, method, rtol)
    rhs = vec(op.apply(b, adjoint=True))
    x = system.solve(rhs, mu, weights, None if x0 is None else vec(x0))
    return unvec(x, *op.shape)


def tikhonov_fft_solve(op: BccbOperator, B, mu: float) -> np.ndarray:
    """``IDFT(conj(eig) * DFT(B) / (|eig|^2 + mu))`` for a BCCB operator."""
    if not isinstance(op, BccbOperator):
        raise WrongVariant(f"FFT Tikhonov needs a BCCB operator, got {op.variant}")
    if not mu > 0:
        raise ValueError(f"penalty multiplier must be positive, got {mu}")
    B = np.asarray(B, dtype=float)
    Z = np.fft.ifft2(np.conj(op.eig) * np.fft.fft2(B) / (np.abs(op.eig) ** 2 + mu))
    scale = max(np.abs(Z.real).max(), np.finfo(float).tiny)
    if np.abs(Z.imag).max() > 1e-10 * scale:
        raise ArithmeticError("FFT solution has a non-negligible imaginary part")
    return Z.real


def tikhonov_separable_solve(svd: KronSvd, B, mu: float) -> np.ndarray:
    """``V_c ((D / (D^2 + mu)) * (U_c^T B U_r)) V_r^T`` with ``D = d_c d_r^T``."""
    if not isinstance(svd, KronSvd):
        raise WrongVariant("separable Tikhonov needs a Kronecker SVD")
    if not mu > 0:
        raise ValueError(f"penalty multiplier must be positive, got {mu}")
    B = svd._check(B)
    D = np.outer(svd.s_c, svd.s_r)
    return svd.V_c @ ((D / (D**2 + mu)) * (svd.U_c.T @ B @ svd.U_r)) @ svd.V_r.T


# ------------------------------------------------------------------- TV / IRLS


@dataclass
class IrlsOptions:
    """Settings for :func:`tv_irls_solve`.

    ``epsilon=None`` means ``1e-4 * max|b|``.
    """

    epsilon: float | None = None
    max_outer: int = 30
    tol: float = 1e-4
    method: str = "auto"
    rtol: float = 1e-8

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class IrlsStep:
    iteration: int
    objective: float
    residual_norm: float
    penalty_norm: float


@dataclass
class IrlsResult:
    x: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    epsilon: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def objectives(self) -> np.ndarray:
        return np.array([s.objective for s in self.trace])

    def to_csv(self, path) -> None:
        rows = [(s.iteration, repr(s.objective), repr(s.residual_norm), repr(s.penalty_norm))
                for s in self.trace]
        write_csv(path, ("iteration", "objective", "residual_norm", "penalty_norm"), rows)


def tv_objective(op, b, X, lam, L, epsilon):
    """Smoothed TV objective and its parts ``(J, ||Ax-b||, sum sqrt((Lx)^2+eps^2))``."""
    res = np.linalg.norm(op.apply(X) - b)
    pen = float(np.sum(np.sqrt(L.apply(X) ** 2 + epsilon**2)))
    return res**2 + lam * pen, float(res), pen


def tv_irls_solve(op: BlurOperator, b, lam: float, L=None,
                  opts: IrlsOptions | None = None) -> IrlsResult:
    """Total-variation deblurring by iteratively reweighted least squares.

    Minimizes ``||Ax - b||^2 + lam * sum_i sqrt((Lx)_i^2 + eps^2)``. Each outer
    step solves the quadratic majorizer at the current iterate,
    ``||Ax - b||^2 + (lam/2) ||W^(1/2) L x||^2`` with
    ``w_i = ((L x_k)_i^2 + eps^2)^(-1/2)``, so the objective never increases.
    The starting point uses unit weights.

    If ``max_outer`` steps pass without the relative change dropping to
    ``tol``, the best iterate is returned with ``converged=False``.
    """
    if not lam > 0:
        raise ValueError(f"TV parameter must be positive, got {lam}")
    opts = opts or IrlsOptions()
    b = np.asarray(b, dtype=float)
    p, q = op.shape
    if L is None:
        L = FirstDerivative2D(p, q)
    eps = opts.epsilon
    if eps is None:
        eps = 1e-4 * float(np.abs(b).max()) or 1e-12

    system = _NormalSystem(op, L, opts.method, opts.rtol)
    rhs = vec(op.apply(b, adjoint=True))
    half = lam / 2.0

    def record(k, x):
        J, r, pen = tv_objective(op, b, unvec(x, p, q), lam, L, eps)
        trace.append(IrlsStep(k, float(J), r, pen))

    trace: list[IrlsStep] = []
    x = system.solve(rhs, half)
    record(0, x)
    best_x, best_J = x, trace[-1].objective
    converged = False
    for k in range(1, opts.max_outer + 1):
        t = L.apply(unvec(x, p, q))
        w = 1.0 / np.sqrt(t**2 + eps**2)
        x_new = system.solve(rhs, half, w, x0=x)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), np.finfo(float).tiny)
        x = x_new
        record(k, x)
        if trace[-1].objective <= best_J:
            best_x, best_J = x, trace[-1].objective
        if change <= opts.tol:
            converged = True
            break
    return IrlsResult(unvec(best_x, p, q), trace, converged, eps)
