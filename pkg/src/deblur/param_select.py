"""Regularization parameter choice: L-curve corner and discrepancy principle."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BadGrid, FlatCurve, NotBracketed, NotConverged, TooFewPoints
from .image import write_csv

__all__ = [
    "LCurvePoint",
    "LCurveWarning",
    "default_grid",
    "tikhonov_residual_norm",
    "tikhonov_solution_norm",
    "lcurve_scan",
    "lcurve_curvature",
    "lcurve_corner",
    "write_lcurve_csv",
    "discrepancy_lambda",
    "discrepancy_search",
]


class LCurveWarning(UserWarning):
    """The L-curve corner is weakly pronounced; treat the selected value with care."""


@dataclass(frozen=True)
class LCurvePoint:
    lam: float
    residual: float
    solution_norm: float

    @property
    def log_residual(self) -> float:
        return math.log10(self.residual)

    @property
    def log_solution_norm(self) -> float:
        return math.log10(self.solution_norm)


def default_grid(sigma, n: int = 50) -> np.ndarray:
    """``n`` log-spaced values from ``1e-8 * sigma_1`` to ``sigma_1``."""
    s1 = float(np.max(sigma))
    return np.logspace(math.log10(s1) - 8, math.log10(s1), n)


# Both norms are evaluated in spectral form. The expressions are written so that
# each term is monotone in lam under floating point rounding, which keeps the
# sampled curve monotone as well.


def tikhonov_residual_norm(sigma, beta, lam) -> float:
    """``||A x_lam - b||`` from singular values and ``beta = U^T b``."""
    with np.errstate(divide="ignore"):
        damp = 1.0 / (1.0 + (sigma / lam) ** 2)
    return float(np.sqrt(np.sum((damp * beta) ** 2)))


def tikhonov_solution_norm(sigma, beta, lam) -> float:
    pos = sigma > 0
    s = sigma[pos]
    c = (beta[pos] / s) / (1.0 + (lam / s) ** 2)
    return float(np.sqrt(np.sum(c**2)))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size < 3:
        raise BadGrid(f"need at least 3 grid values, got {grid.size}")
    if np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise BadGrid("grid values must be positive and finite")
    if np.any(np.diff(grid) <= 0):
        raise BadGrid("grid must be strictly increasing")
    return grid


def lcurve_scan(svd, b, grid=None) -> list[LCurvePoint]:
    """Residual and solution norms of the Tikhonov solution for each ``lam`` in ``grid``."""
    grid = default_grid(svd.sigma) if grid is None else _check_grid(grid)
    beta = svd.project(b)
    return [LCurvePoint(float(lam), tikhonov_residual_norm(svd.sigma, beta, lam),
                        tikhonov_solution_norm(svd.sigma, beta, lam)) for lam in grid]


def lcurve_curvature(points) -> np.ndarray:
    """Signed curvature of ``(log residual, log norm)`` against ``log lam``.

    Derivatives are centered differences on the log-lam grid. Endpoints are
    returned as NaN. Positive values bend the way an L-curve corner does.
    """
    t = np.log10([pt.lam for pt in points])
    x = np.array([pt.log_residual for pt in points])
    y = np.array([pt.log_solution_norm for pt in points])
    dx, dy = np.gradient(x, t), np.gradient(y, t)
    ddx, ddy = np.gradient(dx, t), np.gradient(dy, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (dx * ddy - dy * ddx) / (dx**2 + dy**2) ** 1.5
    kappa[0] = kappa[-1] = np.nan
    return kappa


def lcurve_corner(points) -> float:
    """Grid value of ``lam`` with maximal L-curve curvature (endpoints excluded).

    Warns with :class:`LCurveWarning` when the peak curvature is below ten
    times the median interior curvature.
    """
    points = list(points)
    if len(points) < 5:
        raise TooFewPoints(f"need at least 5 points, got {len(points)}")
    lams = np.array([pt.lam for pt in points])
    if np.log10(lams.max() / lams.min()) < 4:
        raise TooFewPoints("the grid must span at least four decades")
    kappa = lcurve_curvature(points)
    interior = kappa[1:-1]
    x = np.array([pt.log_residual for pt in points])
    y = np.array([pt.log_solution_norm for pt in points])
    extent = max(np.ptp(x), np.ptp(y), np.finfo(float).eps)
    finite = np.where(np.isfinite(interior), interior, -np.inf)
    k = int(np.argmax(finite))
    if not finite[k] * extent > 1e-8:
        raise FlatCurve("the curve has no bend with positive curvature")
    med = np.median(np.abs(interior[np.isfinite(interior)]))
    if finite[k] < 10 * med:
        warnings.warn(f"weak L-curve corner: peak curvature {finite[k]:.3g} vs median {med:.3g}",
                      LCurveWarning, stacklevel=2)
    return float(lams[k + 1])


def write_lcurve_csv(path, points, corner=None) -> None:
    kappa = lcurve_curvature(points)
    rows = []
    for pt, kp in zip(points, kappa):
        rows.append((repr(pt.lam), repr(pt.residual), repr(pt.solution_norm),
                     "" if not np.isfinite(kp) else repr(float(kp)),
                     int(corner is not None and pt.lam == corner)))
    write_csv(path, ("lambda", "residual", "solution_norm", "curvature", "is_corner"), rows)


# ------------------------------------------------------------------ discrepancy


def discrepancy_lambda(svd, b, delta: float, tau: float = 1.0, rtol: float = 1e-7,
                       max_iter: int = 60, return_iterations: bool = False):
    """Tikhonov ``lam`` whose residual equals ``tau * delta``.

    Bisection on ``log lam`` over ``[1e-24 sigma_1, 1e8 sigma_1]`` until the
    residual is within ``rtol`` (relative) of the target.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    target = tau * delta
    beta = svd.project(b)
    sigma = svd.sigma
    s1 = float(sigma[0])
    if not s1 > 0:
        raise NotBracketed("operator has no positive singular value")

    def res(log_lam):
        return tikhonov_residual_norm(sigma, beta, 10.0**log_lam)

    lo, hi = math.log10(s1) - 24, math.log10(s1) + 8
    r_lo, r_hi = res(lo), res(hi)
    if not r_lo < target < r_hi:
        raise NotBracketed(f"target residual {target:.6g} outside attainable range "
                           f"({r_lo:.6g}, {r_hi:.6g})")
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        r = res(mid)
        if abs(r - target) <= rtol * target:
            return (10.0**mid, it) if return_iterations else 10.0**mid
        if r < target:
            lo = mid
        else:
            hi = mid
    raise NotConverged(f"bisection did not reach rtol={rtol} in {max_iter} iterations")


def discrepancy_search(residual_fn, target: float, lo: float, hi: float,
                       rtol: float = 1e-6) -> float:
    """Root of ``residual_fn(param) = target`` for a residual increasing in ``param``.

    For solvers without a spectral shortcut (general-form Tikhonov, TV). Uses
    Brent's method on ``log10(param)`` inside ``[lo, hi]``.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    cache = {}

    def f(t):
        if t not in cache:
            cache[t] = residual_fn(10.0**t) - target
        return cache[t]

    a, b = math.log10(lo), math.log10(hi)
    fa, fb = f(a), f(b)
    if not (fa < 0 < fb):
        raise NotBracketed(f"target residual {target:.6g} not bracketed by "
                           f"[{fa + target:.6g}, {fb + target:.6g}]")
    ftol = rtol * target

    # brentq only offers tolerances on the argument; stop early on the residual
    def g(t):
        v = f(t)
        if abs(v) <= ftol:
            raise _Found(t)
        return v

    try:
        t = brentq(g, a, b, xtol=1e-12, maxiter=200)
    except _Found as hit:
        t = hit.t
    return 10.0**t


class _Found(Exception):
    def __init__(self, t):
        self.t = t
