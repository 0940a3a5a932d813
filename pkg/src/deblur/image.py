"""Image arrays, column-stacking, error metrics and 16-bit PGM I/O.

Images are plain 2-D ``float64`` numpy arrays of shape ``(p, q)``. The vector
form stacks columns, so ``vec(X)[i + j*p] == X[i, j]``.
"""
from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LengthMismatch, MalformedFile, ZeroReference

MAXVAL = 65535

__all__ = [
    "as_image",
    "vec",
    "unvec",
    "relative_error",
    "ErrorReport",
    "write_pgm",
    "read_pgm",
    "sidecar_path",
    "atomic_write_bytes",
    "write_csv",
    "read_meta",
]


def as_image(X) -> np.ndarray:
    """Validate and convert ``X`` to a finite 2-D float64 array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"image must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("image contains non-finite entries")
    return X


def vec(X) -> np.ndarray:
    """Stack the columns of ``X`` into a vector of length ``p*q``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {X.shape}")
    return X.reshape(-1, order="F")


def unvec(x, p: int, q: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p * q:
        raise LengthMismatch(f"vector of length {x.size} cannot form a {p}x{q} image")
    return x.reshape((p, q), order="F")


def relative_error(x, x_ref) -> float:
    """Return ``||x - x_ref||_2 / ||x_ref||_2`` (arrays of any matching shape)."""
    x = np.asarray(x, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x.size != x_ref.size:
        raise LengthMismatch(f"sizes differ: {x.size} vs {x_ref.size}")
    ref = np.linalg.norm(x_ref.ravel())
    if ref == 0:
        raise ZeroReference("reference has zero norm")
    return float(np.linalg.norm(x.ravel() - x_ref.ravel()) / ref)


@dataclass(frozen=True)
class ErrorReport:
    relative_error: float
    residual_norm: float
    solution_norm: float

    def __post_init__(self):
        for name in ("relative_error", "residual_norm", "solution_norm"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @classmethod
    def compute(cls, op, X, B, X_ref) -> "ErrorReport":
        """Evaluate the report for reconstruction ``X`` of data ``B`` under ``op``."""
        residual = np.linalg.norm(op.apply(X) - B)
        return cls(relative_error(X, X_ref), float(residual), float(np.linalg.norm(X)))


# --------------------------------------------------------------------------- PGM


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    """Write an RFC 4180 CSV file (header row first) atomically."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode())


def _format_meta(meta: dict) -> bytes:
    return "".join(f"{k}={v}\n" for k, v in meta.items()).encode()


def _parse_meta(text: str) -> dict:
    meta = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedFile(f"bad sidecar line: {line!r}")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def write_pgm(path, X, seed=None) -> None:
    """Write ``X`` as a binary 16-bit PGM plus a ``.meta`` sidecar.

    Intensities are mapped linearly from ``[min(X), max(X)]`` onto
    ``[0, 65535]``; the sidecar stores ``min``, ``max``, ``p``, ``q`` and
    ``seed`` so that :func:`read_pgm` can undo the scaling.
    """
    X = as_image(X)
    p, q = X.shape
    lo, hi = float(X.min()), float(X.max())
    if hi > lo:
        counts = np.rint((X - lo) / (hi - lo) * MAXVAL)
    else:
        counts = np.zeros_like(X)
    counts = np.clip(counts, 0, MAXVAL).astype(">u2")
    header = f"P5\n{q} {p}\n{MAXVAL}\n".encode("ascii")
    atomic_write_bytes(path, header + counts.tobytes(order="C"))
    meta = {"min": repr(lo), "max": repr(hi), "p": p, "q": q,
            "seed": "" if seed is None else int(seed)}
    atomic_write_bytes(sidecar_path(path), _format_meta(meta))


_HEADER = re.compile(rb"\AP5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_pgm(path, raw: bool = False) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm` (or any P5 file).

    With a sidecar present and ``raw=False`` the stored intensity range is
    restored; otherwise the integer counts are returned as floats.
    """
    path = Path(path)
    buf = path.read_bytes()
    m = _HEADER.match(buf)
    if m is None:
        raise MalformedFile(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if width < 1 or height < 1 or not 0 < maxval <= MAXVAL:
        raise MalformedFile(f"{path}: bad header values {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    data = buf[m.end():]
    if len(data) < need:
        raise MalformedFile(f"{path}: truncated pixel data ({len(data)} of {need} bytes)")
    counts = np.frombuffer(data[:need], dtype=dtype).reshape(height, width).astype(float)

    side = sidecar_path(path)
    if raw or not side.exists():
        return counts
    meta = _parse_meta(side.read_text())
    try:
        lo, hi = float(meta["min"]), float(meta["max"])
        p, q = int(meta["p"]), int(meta["q"])
    except (KeyError, ValueError) as exc:
        raise MalformedFile(f"{side}: incomplete sidecar") from exc
    if (p, q) != counts.shape:
        raise MalformedFile(f"{side}: sidecar shape {p}x{q} disagrees with {height}x{width}")
    if maxval != MAXVAL:
        raise MalformedFile(f"{path}: sidecar scaling requires maxval {MAXVAL}")
    X = lo + counts * ((hi - lo) / MAXVAL)
    # pin the top level exactly so that write(read(.)) reproduces the sidecar
    X[counts == MAXVAL] = hi
    return X


def read_meta(path) -> dict:
    """Return the sidecar of a PGM as a dict of strings."""
    return _parse_meta(sidecar_path(path).read_text())
