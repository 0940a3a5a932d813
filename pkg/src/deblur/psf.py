"""Gaussian point-spread functions and synthetic test scenes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpread, UnsupportedSize

__all__ = [
    "GaussianPsf",
    "default_half_width",
    "gaussian_kernel_1d",
    "gaussian_psf_2d",
    "generate_test_image",
    "DEFAULT_SPREAD",
]

DEFAULT_SPREAD = 2.0


def default_half_width(s: float) -> int:
    return int(math.ceil(4 * s))


def gaussian_kernel_1d(half_width: int, s: float) -> np.ndarray:
    """Unnormalized samples ``exp(-0.5 (d/s)^2)`` for ``d = -half_width..half_width``."""
    if not s > 0:
        raise InvalidSpread(f"spread must be positive, got {s}")
    if half_width < 0:
        raise ValueError(f"half_width must be nonnegative, got {half_width}")
    d = np.arange(-half_width, half_width + 1, dtype=float)
    return np.exp(-0.5 * (d / s) ** 2)


@dataclass(frozen=True, eq=False)
class GaussianPsf:
    """Truncated, normalized, separable Gaussian blur kernel.

    ``kernel1d`` is normalized to unit sum so that
    ``kernel2d == np.outer(kernel1d, kernel1d)`` holds exactly;
    ``normalization`` is the constant N dividing the raw 2-D Gaussian.
    """

    s: float
    half_width: int
    kernel1d: np.ndarray
    kernel2d: np.ndarray
    normalization: float

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    @property
    def center(self) -> int:
        return self.half_width


def gaussian_psf_2d(half_width: int | None = None, s: float = DEFAULT_SPREAD) -> GaussianPsf:
    if not s > 0:
        raise InvalidSpread(f"spread must be positive, got {s}")
    if half_width is None:
        half_width = default_half_width(s)
    raw = gaussian_kernel_1d(half_width, s)
    total = raw.sum()
    k1 = raw / total
    k2 = np.outer(k1, k1)
    k1.setflags(write=False)
    k2.setflags(write=False)
    return GaussianPsf(float(s), int(half_width), k1, k2, float(total * total))


def generate_test_image(kind: str, p: int, q: int | None = None) -> np.ndarray:
    """Synthetic scenes: ``"single_pixel"`` or the block letter ``"H"``.

    The H has stroke width ``p // 8`` and is symmetric under a left-right
    mirror.
    """
    q = p if q is None else q
    kind = kind.lower()
    if kind in ("single_pixel", "pixel"):
        if p < 1 or q < 1:
            raise UnsupportedSize(f"bad size {p}x{q}")
        X = np.zeros((p, q))
        X[p // 2, q // 2] = 1.0
        return X
    if kind == "h":
        if p < 8 or q < 8:
            raise UnsupportedSize(f"the H scene needs at least 8x8 pixels, got {p}x{q}")
        X = np.zeros((p, q))
        w = max(1, q // 8)
        top, left = p // 4, q // 4
        X[top:p - top, left:left + w] = 1.0
        X[top:p - top, q - left - w:q - left] = 1.0
        h = max(1, p // 8)
        mid = (p - h) // 2
        X[mid:mid + h, left + w:q - left - w] = 1.0
        return X
    raise ValueError(f"unknown scene kind {kind!r}")
