"""Gaussian white, Poisson and salt-and-pepper noise with explicit seeding.

Every generator is a pure function of its inputs and the seed; arrays of any
shape are accepted and returned in the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadFraction, NegativeIntensity, ZeroSignal

__all__ = [
    "NoiseSpec",
    "add_gaussian_white",
    "add_poisson",
    "add_salt_pepper",
    "parse_noise_spec",
    "apply_noise",
]


def add_gaussian_white(b, level: float, seed: int):
    """Return ``(b + e, e)`` with ``||e||_2 == level * ||b||_2`` exactly.

    ``e`` is a standard normal draw rescaled to the target norm.
    """
    b = np.asarray(b, dtype=float)
    if not level > 0:
        raise ValueError(f"noise level must be positive, got {level}")
    nb = np.linalg.norm(b.ravel())
    if nb == 0:
        raise ZeroSignal("cannot scale relative noise for a zero signal")
    g = np.random.default_rng(seed).standard_normal(b.shape)
    e = g * (level * nb / np.linalg.norm(g.ravel()))
    return b + e, e


def add_poisson(b, peak: float, seed: int) -> np.ndarray:
    """Photon-count noise: ``Poisson(c*b) / c`` with ``c = peak / max(b)``."""
    b = np.asarray(b, dtype=float)
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    top = b.max() if b.size else 0.0
    # blurred data carries round-off negatives; treat those as zero
    slack = 64 * np.finfo(float).eps * max(top, 0.0)
    if np.any(b < -slack):
        raise NegativeIntensity("Poisson noise needs nonnegative intensities")
    b = np.maximum(b, 0.0)
    if top == 0:
        return np.zeros_like(b)
    c = peak / top
    counts = np.random.default_rng(seed).poisson(c * b)
    return counts / c


def add_salt_pepper(b, fraction: float, seed: int) -> np.ndarray:
    """Set ``floor(fraction * size)`` distinct pixels to ``min(b)`` or ``max(b)``."""
    b = np.asarray(b, dtype=float)
    if not 0 < fraction < 1:
        raise BadFraction(f"fraction must lie in (0, 1), got {fraction}")
    out = b.copy()
    k = int(math.floor(fraction * b.size))
    if k == 0:
        return out
    rng = np.random.default_rng(seed)
    idx = rng.choice(b.size, size=k, replace=False)
    salt = rng.random(k) < 0.5
    flat = out.reshape(-1)
    flat[idx] = np.where(salt, b.max(), b.min())
    return out


@dataclass(frozen=True)
class NoiseSpec:
    """One of ``gaussian`` (relative level), ``poisson`` (peak) or ``saltpepper`` (fraction)."""

    kind: str
    value: float
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower().replace("_", "").replace("-", "")
        if kind not in ("gaussian", "poisson", "saltpepper"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "saltpepper":
            if not 0 < self.value < 1:
                raise BadFraction(f"fraction must lie in (0, 1), got {self.value}")
        elif not self.value > 0:
            raise ValueError(f"{kind} parameter must be positive, got {self.value}")

    def __str__(self):
        return f"{self.kind}:{self.value!r}"


def parse_noise_spec(text: str, seed: int = 0) -> NoiseSpec:
    """Parse ``"gaussian:0.001"``, ``"poisson:1e5"`` or ``"saltpepper:0.05"``."""
    kind, sep, value = text.partition(":")
    if not sep:
        raise ValueError(f"noise spec must look like kind:value, got {text!r}")
    return NoiseSpec(kind, float(value), seed)


def apply_noise(b, spec: NoiseSpec) -> np.ndarray:
    """Return the noisy version of ``b`` described by ``spec``."""
    if spec.kind == "gaussian":
        return add_gaussian_white(b, spec.value, spec.seed)[0]
    if spec.kind == "poisson":
        return add_poisson(b, spec.value, spec.seed)
    return add_salt_pepper(b, spec.value, spec.seed)
