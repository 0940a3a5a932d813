"""Blurring an image, watching the naive inverse fail, and fixing it with filters.

Run with ``python demos/blur_and_filters.py``. Figures are saved next to the
script when matplotlib is installed (``pip install -e .[demos]``).
"""
from pathlib import Path

import numpy as np

import deblur as db

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

OUT = Path(__file__).with_suffix("")

# A 64x64 test scene and a Gaussian PSF of width 2 pixels
x_true = db.generate_test_image("H", 64)
psf = db.gaussian_psf_2d()
print("psf size", psf.size, "sum", psf.kernel2d.sum())

# Zero boundary conditions give a separable Toeplitz operator A = A_r kron A_c
A = db.build_operator(psf, "zero", 64)
b_true = A.apply(x_true)
b, e = db.add_gaussian_white(b_true, 1e-3, seed=7)
print("noise norm / data norm", np.linalg.norm(e) / np.linalg.norm(b_true))

# The Kronecker SVD never forms the 4096x4096 matrix
svd = db.svd_of(A)
print("sigma_1 / sigma_m = %.3e" % (svd.sigma[0] / svd.sigma[-1]))

# Naive inversion amplifies the noise in the small singular values
x_naive = db.filtered_solve(svd, b, db.Naive())
print("naive relative error %.3e" % db.relative_error(x_naive, x_true))

# Truncation and Tikhonov damping
x_tsvd = db.filtered_solve(svd, b, db.TSVD(800))
lam = db.discrepancy_lambda(svd, b, np.linalg.norm(e))
x_tik = db.filtered_solve(svd, b, db.Tikhonov(lam))
print("TSVD(800) error %.4f" % db.relative_error(x_tsvd, x_true))
print("Tikhonov, discrepancy lam=%.3e, error %.4f" % (lam, db.relative_error(x_tik, x_true)))

# The L-curve gives a parameter without knowing the noise level
points = db.lcurve_scan(svd, b)
corner = db.lcurve_corner(points)
x_corner = db.filtered_solve(svd, b, db.Tikhonov(corner))
print("L-curve corner lam=%.3e, error %.4f" % (corner, db.relative_error(x_corner, x_true)))

# Picard plot: |u_l^T b| against sigma_l
beta = np.abs(svd.project(b))

if plt is not None:
    fig, ax = plt.subplots(2, 3, figsize=(10, 6.5))
    for a, img, title in zip(ax.flat[:5], (x_true, b, x_tsvd, x_tik, x_corner),
                             ("true", "blurred + noise", "TSVD", "Tikhonov (discrepancy)",
                              "Tikhonov (L-curve)")):
        a.imshow(img, cmap="gray")
        a.set_title(title)
        a.axis("off")
    ax.flat[5].semilogy(svd.sigma, label="sigma")
    ax.flat[5].semilogy(beta, ".", ms=1, label="|u^T b|")
    ax.flat[5].legend()
    fig.tight_layout()
    fig.savefig(f"{OUT}_images.png", dpi=100)

    fig, ax = plt.subplots()
    ax.loglog([p.residual for p in points], [p.solution_norm for p in points], "o-", ms=3)
    ax.set_xlabel("||A x - b||")
    ax.set_ylabel("||x||")
    fig.savefig(f"{OUT}_lcurve.png", dpi=100)
    print("figures written to", OUT.parent)
