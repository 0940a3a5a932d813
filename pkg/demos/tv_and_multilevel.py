"""Edge-preserving TV deblurring and solving on coarser Haar levels.

Run with ``python demos/tv_and_multilevel.py`` (takes about half a minute).
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

x_true = db.generate_test_image("H", 64)
A = db.build_operator(db.gaussian_psf_2d(), "zero", 64)
b, e = db.add_gaussian_white(A.apply(x_true), 1e-3, seed=7)
delta = np.linalg.norm(e)

# General-form Tikhonov with a first-derivative penalty, mu by the discrepancy principle
L = db.FirstDerivative2D(64)
mu = db.discrepancy_search(
    lambda m: np.linalg.norm(A.apply(db.general_tikhonov_solve(A, b, L, m)) - b), delta,
    1e-12, 1e2)
x_gtik = db.general_tikhonov_solve(A, b, L, mu)
print("gTik mu=%.3e error %.4f" % (mu, db.relative_error(x_gtik, x_true)))

# Total variation by reweighted least squares; a fixed lam close to the discrepancy value
res = db.tv_irls_solve(A, b, 4.5e-4)
print("TV error %.4f after %d outer steps" % (db.relative_error(res.x, x_true), res.iterations))
print("objective", np.array2string(np.asarray(res.objectives[:5]), precision=4), "...")

# Multilevel: the Haar restriction keeps the separable Toeplitz structure
h = db.build_hierarchy(A, b, 2)
print(h.manifest(), end="")
for n in range(h.depth + 1):
    r = db.multilevel_solve(h, n, "tikhonov", noise=e)
    ref = x_true
    for _ in range(n):
        ref = db.restrict_image(ref)
    print("level %d: %dx%d error %.4f in %.3f s" % (n, h[n].p, h[n].p,
                                                     db.relative_error(r.x, ref), r.seconds))

if plt is not None:
    fig, ax = plt.subplots(1, 3, figsize=(10, 3.5))
    for a, img, title in zip(ax, (b, x_gtik, res.x), ("data", "general Tikhonov", "TV")):
        a.imshow(img, cmap="gray")
        a.set_title(title)
        a.axis("off")
    fig.tight_layout()
    fig.savefig(f"{OUT}.png", dpi=100)
    print("figure written to", OUT.parent)
