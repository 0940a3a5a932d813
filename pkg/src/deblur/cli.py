"""Command-line driver: simulate, deblur, analyze, multilevel, repro-figures.

Every command reads and writes inside one scene directory (``-o``). Images are
written as 16-bit PGM files for viewing and as ``.npy`` arrays holding the
exact floats, which later commands read back. Text manifests use
``key=value`` lines.

Exit codes: 2 bad flags, 3 I/O failure, 4 solver failure, 5 size guard,
6 multilevel hierarchy error.
"""
from __future__ import annotations

import argparse
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import errors
from .image import atomic_write_bytes, relative_error, write_csv, write_pgm
from .multilevel import build_hierarchy, multilevel_solve, restrict_image
from .noise import parse_noise_spec
from .noise import add_gaussian_white, add_poisson, add_salt_pepper
from .operators import build_operator
from .param_select import (discrepancy_lambda, discrepancy_search, lcurve_corner, lcurve_scan,
                           write_lcurve_csv)
from .psf import DEFAULT_SPREAD, default_half_width, gaussian_psf_2d, generate_test_image
from .regularization import (FirstDerivative2D, IrlsOptions, general_tikhonov_solve,
                             tv_irls_solve)
from .svd import TSVD, Naive, Tikhonov, filtered_solve, picard_coefficients, svd_of
from .svd import write_sigma_csv

EXIT_FLAGS, EXIT_IO, EXIT_SOLVER, EXIT_GUARD, EXIT_HIERARCHY = 2, 3, 4, 5, 6

MANIFEST = "manifest.txt"
REPORT_COLUMNS = ("method", "selector", "parameter", "mu", "relative_error", "residual_norm",
                  "solution_norm", "noise_norm", "data_relative_error")


class UsageError(Exception):
    """Flags are syntactically valid but inconsistent."""


# ------------------------------------------------------------------ file helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_manifest(path, items: dict) -> None:
    atomic_write_bytes(path, "".join(f"{k}={_fmt(v)}\n" for k, v in items.items()).encode())


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def save_array(path, X) -> None:
    buf = io.BytesIO()
    np.save(buf, np.asarray(X, dtype=float), allow_pickle=False)
    atomic_write_bytes(path, buf.getvalue())


def load_array(path) -> np.ndarray:
    return np.load(path, allow_pickle=False)


def save_image(outdir: Path, name: str, X, seed=None) -> None:
    write_pgm(outdir / f"{name}.pgm", X, seed)
    save_array(outdir / f"{name}.npy", X)


class Scene:
    """Simulation outputs of one scene directory."""

    def __init__(self, outdir):
        self.dir = Path(outdir)
        path = self.dir / MANIFEST
        if not path.is_file():
            raise FileNotFoundError(f"no {MANIFEST} in {self.dir}; run 'simulate' first")
        self.meta = read_manifest(path)
        try:
            self.p, self.q = int(self.meta["p"]), int(self.meta["q"])
            self.s = float(self.meta["s"])
            self.half_width = int(self.meta["half_width"])
            self.bc = self.meta["bc"]
        except (KeyError, ValueError) as exc:
            raise errors.MalformedFile(f"{path}: incomplete manifest") from exc
        self.b = load_array(self.dir / "b.npy")
        self.b_true = self._optional("b_true.npy")
        self.x_true = self._optional("x_true.npy")
        self.e = self._optional("e.npy")
        nn = self.meta.get("noise_norm", "")
        self.noise_norm = float(nn) if nn else None

    def _optional(self, name):
        path = self.dir / name
        return load_array(path) if path.is_file() else None

    def operator(self, variant=None):
        psf = gaussian_psf_2d(self.half_width, self.s)
        return build_operator(psf, self.bc, self.p, self.q, variant)


# ------------------------------------------------------------------- selectors


def parse_method(text: str):
    name, _, arg = text.partition(":")
    name = name.lower()
    if name == "tsvd":
        try:
            k = int(arg)
        except ValueError:
            raise UsageError(f"tsvd needs an integer cutoff, e.g. tsvd:200 (got {text!r})")
        if k < 1:
            raise UsageError("tsvd cutoff must be >= 1")
        return name, k
    if name in ("naive", "tikhonov", "gtik", "tv") and not arg:
        return name, None
    raise UsageError(f"unknown method {text!r}; use naive, tsvd:k, tikhonov, gtik or tv")


def parse_selector(text: str):
    name, _, arg = text.partition(":")
    name = name.lower()
    if name == "lcurve" and not arg:
        return name, None
    if name == "discrepancy":
        if arg in ("", "auto"):
            return name, "auto"
        try:
            v = float(arg)
        except ValueError:
            raise UsageError(f"bad noise estimate in {text!r}")
        if not v > 0:
            raise UsageError("noise estimate must be positive")
        return name, v
    if name == "fixed":
        try:
            v = float(arg)
        except ValueError:
            raise UsageError(f"bad fixed parameter in {text!r}")
        if not v > 0:
            raise UsageError("fixed parameter must be positive")
        return name, v
    raise UsageError(f"unknown selector {text!r}; use lcurve, discrepancy:delta|auto or fixed:value")


def _noise_estimate(scene: Scene, arg, tau: float) -> float:
    if arg == "auto":
        if scene.noise_norm is None:
            raise UsageError("discrepancy:auto needs noise_norm in the simulation manifest")
        return tau * scene.noise_norm
    return tau * arg


# -------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    outdir = Path(args.output)
    p = args.size
    q = args.cols or p
    hw = args.half_width if args.half_width is not None else default_half_width(args.s)
    psf = gaussian_psf_2d(hw, args.s)
    op = build_operator(psf, args.bc, p, q)
    noise = parse_noise_spec(args.noise, args.seed)

    x_true = generate_test_image(args.scene, p, q)
    b_true = op.apply(x_true)
    if noise.kind == "gaussian":
        b, e = add_gaussian_white(b_true, noise.value, noise.seed)
    elif noise.kind == "poisson":
        b = add_poisson(b_true, noise.value, noise.seed)
        e = b - b_true
    else:
        b = add_salt_pepper(b_true, noise.value, noise.seed)
        e = b - b_true

    outdir.mkdir(parents=True, exist_ok=True)
    save_image(outdir, "x_true", x_true, args.seed)
    save_image(outdir, "b_true", b_true, args.seed)
    save_image(outdir, "b", b, args.seed)
    save_array(outdir / "e.npy", e)
    manifest = {
        "seed": args.seed, "scene": args.scene, "p": p, "q": q, "s": float(args.s),
        "half_width": hw, "bc": args.bc, "noise": str(noise),
        "noise_norm": float(np.linalg.norm(e)), "b_true_norm": float(np.linalg.norm(b_true)),
        "files": "x_true.pgm b_true.pgm b.pgm",
    }
    write_manifest(outdir / MANIFEST, manifest)
    print(f"simulated {args.scene} {p}x{q} s={args.s} bc={args.bc} noise={noise} "
          f"||e||={manifest['noise_norm']:.6g}")
    return 0


def solve_scene(scene: Scene, method: str, marg, selector: str, sarg, tau: float = 1.0,
                variant=None, irls: IrlsOptions | None = None):
    """Run one method/selector pair; returns ``(X, parameter, mu, extras)``."""
    op = scene.operator(variant)
    b = scene.b
    extras = {"op": op}
    if method in ("naive", "tsvd", "tikhonov"):
        svd = svd_of(op)
        extras["svd"] = svd
        if method == "naive":
            return filtered_solve(svd, b, Naive()), None, None, extras
        if method == "tsvd":
            return filtered_solve(svd, b, TSVD(marg)), float(marg), None, extras
        if selector == "lcurve":
            points = lcurve_scan(svd, b)
            lam = lcurve_corner(points)
            extras["lcurve"] = (points, lam)
        elif selector == "discrepancy":
            lam = discrepancy_lambda(svd, b, _noise_estimate(scene, sarg, 1.0), tau)
        else:
            lam = sarg
        return filtered_solve(svd, b, Tikhonov(lam)), lam, lam**2, extras

    if selector == "lcurve":
        raise UsageError(f"the lcurve selector is only available for spectral methods, not {method}")
    if method == "gtik":
        L = FirstDerivative2D(*op.shape)

        def run(mu):
            return general_tikhonov_solve(op, b, L, mu)

        if selector == "discrepancy":
            target = _noise_estimate(scene, sarg, tau)
            mu = discrepancy_search(lambda m: np.linalg.norm(op.apply(run(m)) - b),
                                    target, 1e-14, 1e4)
        else:
            mu = sarg
        return run(mu), mu, mu, extras

    def run_tv(lam):
        return tv_irls_solve(op, b, lam, opts=irls)

    if selector == "discrepancy":
        target = _noise_estimate(scene, sarg, tau)
        lam = discrepancy_search(lambda v: np.linalg.norm(op.apply(run_tv(v).x) - b),
                                 target, 1e-10, 1e2, rtol=1e-3)
    else:
        lam = sarg
    result = run_tv(lam)
    extras["irls"] = result
    return result.x, lam, None, extras


def report_row(scene: Scene, op, X, method_text, selector_text, parameter, mu) -> tuple:
    residual = float(np.linalg.norm(op.apply(X) - scene.b))
    rel = relative_error(X, scene.x_true) if scene.x_true is not None else None
    data_rel = relative_error(scene.b, scene.x_true) if scene.x_true is not None else None
    return (method_text, selector_text, _fmt(parameter), _fmt(mu), _fmt(rel), _fmt(residual),
            _fmt(float(np.linalg.norm(X))), _fmt(scene.noise_norm), _fmt(data_rel))


def cmd_deblur(args) -> int:
    method, marg = parse_method(args.method)
    selector, sarg = parse_selector(args.select)
    scene = Scene(args.output)
    irls = IrlsOptions(max_outer=args.max_outer)
    X, parameter, mu, extras = solve_scene(scene, method, marg, selector, sarg, args.tau,
                                           args.variant, irls)
    suffix = f"_{args.tag}" if args.tag else ""
    save_image(scene.dir, f"x_reg{suffix}", X, scene.meta.get("seed") or None)
    row = report_row(scene, extras["op"], X, args.method, args.select, parameter, mu)
    write_csv(scene.dir / f"report{suffix}.csv", REPORT_COLUMNS, [row])
    if "irls" in extras:
        extras["irls"].to_csv(scene.dir / f"irls{suffix}.csv")
    if "lcurve" in extras:
        points, lam = extras["lcurve"]
        write_lcurve_csv(scene.dir / f"lcurve{suffix}.csv", points, lam)
    run = dict(scene.meta)
    run.update(method=args.method, selector=args.select, tau=args.tau, parameter=parameter,
               mu=mu, variant=extras["op"].variant,
               relative_error=row[4], residual_norm=row[5],
               files=f"x_reg{suffix}.pgm report{suffix}.csv")
    write_manifest(scene.dir / f"run{suffix}.txt", run)
    print(f"{args.method} [{args.select}] parameter={row[2] or '-'} "
          f"relative_error={row[4] or '-'} residual={row[5]}")
    return 0


def cmd_analyze(args) -> int:
    scene = Scene(args.output)
    op = scene.operator(args.variant)
    svd = svd_of(op)
    write_sigma_csv(scene.dir / "sigma.csv", svd.sigma)
    picard_coefficients(svd, scene.b).to_csv(scene.dir / "picard.csv")
    if scene.b_true is not None:
        picard_coefficients(svd, scene.b_true).to_csv(scene.dir / "picard_true.csv")

    points = lcurve_scan(svd, scene.b, np.logspace(np.log10(svd.sigma[0]) - 8,
                                                   np.log10(svd.sigma[0]), args.grid))
    try:
        corner = lcurve_corner(points)
    except (errors.FlatCurve, errors.TooFewPoints):
        corner = None
    write_lcurve_csv(scene.dir / "lcurve.csv", points, corner)

    # |v_l^T x_true| against |v_l^T x_LS| = |u_l^T b| / sigma_l
    beta = svd.project(scene.b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ls = np.where(svd.sigma > 0, np.abs(beta) / svd.sigma, np.inf)
    if scene.x_true is not None:
        vx = np.abs(svd.project_right(scene.x_true))
    else:
        vx = np.full_like(ls, np.nan)
    rows = [(i + 1, repr(float(s)), repr(float(a)), repr(float(c)))
            for i, (s, a, c) in enumerate(zip(svd.sigma, vx, ls))]
    write_csv(scene.dir / "coefficients.csv", ("l", "sigma", "vtx_true", "vtx_ls"), rows)
    print(f"analyzed {scene.p}x{scene.q}: sigma_1/sigma_m = {svd.condition_number:.3e}"
          + (f", L-curve corner lambda = {corner:.6g}" if corner else ""))
    return 0


def cmd_multilevel(args) -> int:
    method, _ = parse_method(args.method)
    if method not in ("tikhonov", "gtik", "tv"):
        raise UsageError("multilevel supports tikhonov, gtik and tv")
    selector, sarg = parse_selector(args.select)
    if selector == "lcurve":
        raise UsageError("multilevel supports discrepancy and fixed selectors")
    scene = Scene(args.output)
    op = scene.operator()
    h = build_hierarchy(op, scene.b, args.levels)

    kw = {"tau": args.tau, "prolong": args.prolong}
    if selector == "fixed":
        kw["mu"] = sarg
    elif sarg == "auto" and scene.e is not None:
        kw["noise"] = scene.e
    else:
        kw["delta"] = _noise_estimate(scene, sarg, 1.0)

    rows = []
    x_coarse = scene.x_true
    for n in range(h.depth + 1):
        res = multilevel_solve(h, n, method, **kw)
        save_image(scene.dir, f"x_level{n}", res.x)
        save_image(scene.dir, f"b_level{n}", h[n].b)
        rel = None
        if x_coarse is not None:
            rel = relative_error(res.x, scene.x_true if args.prolong else x_coarse)
            if n < h.depth:
                x_coarse = restrict_image(x_coarse)
        rows.append((n, h[n].p, h[n].structure, _fmt(res.parameter), _fmt(res.delta), _fmt(rel)))
    write_csv(scene.dir / "multilevel.csv",
              ("level", "p", "structure", "parameter", "noise_estimate", "relative_error"), rows)
    text = h.manifest() + f"method={args.method}\nselector={args.select}\nprolong={args.prolong}\n"
    atomic_write_bytes(scene.dir / "multilevel_manifest.txt", text.encode())
    for r in rows:
        print(f"level {r[0]}: {r[1]}x{r[1]} {r[2]} parameter={r[3]} relative_error={r[5] or '-'}")
    return 0


def cmd_repro_figures(args) -> int:
    """Regenerate the data behind every figure: one scene, all methods."""
    out = args.output
    base = ["-o", out]
    steps = [
        ["simulate", "--size", str(args.size), "--scene", "H", "--s", str(args.s),
         "--bc", "zero", "--noise", "gaussian:0.001", "--seed", str(args.seed)],
        ["analyze"],
        ["deblur", "--method", "naive", "--tag", "naive"],
        ["deblur", "--method", f"tsvd:{args.size * args.size // 4}", "--tag", "tsvd"],
        ["deblur", "--method", "tikhonov", "--select", "lcurve", "--tag", "tikhonov_lcurve"],
        ["deblur", "--method", "tikhonov", "--select", "discrepancy:auto",
         "--tag", "tikhonov_discrepancy"],
        ["deblur", "--method", "gtik", "--select", "discrepancy:auto", "--tag", "gtik"],
        ["deblur", "--method", "tv", "--select", "discrepancy:auto", "--tag", "tv"],
        ["multilevel", "--levels", "1", "--method", "tikhonov", "--select", "discrepancy:auto"],
    ]
    for step in steps:
        code = main(step + base)
        if code:
            return code
    # scenes for the other boundary conditions, for the operator figures
    for bc in ("periodic", "reflexive"):
        sub = str(Path(out) / bc)
        code = main(["simulate", "--size", "32", "--scene", "H", "--s", str(args.s), "--bc", bc,
                     "--noise", "gaussian:0.001", "--seed", str(args.seed), "-o", sub])
        code = code or main(["analyze", "-o", sub])
        if code:
            return code
    return 0


# ---------------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deblur", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-o", "--output", required=True, help="scene directory")
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "build x_true, b_true = A x_true and noisy b")
    sp.add_argument("--size", type=_positive_int, default=64, help="image rows p")
    sp.add_argument("--cols", type=_positive_int, default=None, help="image columns q (default p)")
    sp.add_argument("--scene", default="H", choices=["H", "single_pixel", "pixel"])
    sp.add_argument("--s", type=float, default=DEFAULT_SPREAD, help="Gaussian spread")
    sp.add_argument("--half-width", type=int, default=None, help="PSF half width (default ceil(4s))")
    sp.add_argument("--bc", default="zero", choices=["zero", "periodic", "reflexive"])
    sp.add_argument("--noise", default="gaussian:0.001",
                    help="gaussian:level | poisson:peak | saltpepper:fraction")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("deblur", cmd_deblur, "reconstruct x from b")
    sp.add_argument("--method", default="tikhonov", help="naive | tsvd:k | tikhonov | gtik | tv")
    sp.add_argument("--select", default="discrepancy:auto",
                    help="lcurve | discrepancy:delta|auto | fixed:value")
    sp.add_argument("--tau", type=float, default=1.0, help="discrepancy safety factor")
    sp.add_argument("--variant", default=None,
                    choices=["separable", "bccb", "dense", "matvec"], help="operator variant")
    sp.add_argument("--max-outer", type=_positive_int, default=30, help="IRLS outer steps")
    sp.add_argument("--tag", default="", help="suffix for output file names")

    sp = add("analyze", cmd_analyze, "export SVD, Picard and L-curve data")
    sp.add_argument("--variant", default=None, choices=["separable", "bccb", "dense", "matvec"])
    sp.add_argument("--grid", type=_positive_int, default=50, help="L-curve grid points")

    sp = add("multilevel", cmd_multilevel, "solve on coarse Haar levels")
    sp.add_argument("--levels", type=int, default=1, help="hierarchy depth")
    sp.add_argument("--method", default="tikhonov", help="tikhonov | gtik | tv")
    sp.add_argument("--select", default="discrepancy:auto", help="discrepancy:delta|auto | fixed:value")
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--prolong", action="store_true",
                    help="map coarse solutions back to the fine grid (visualization only)")

    sp = add("repro-figures", cmd_repro_figures, "run the full figure pipeline")
    sp.add_argument("--size", type=_positive_int, default=64)
    sp.add_argument("--s", type=float, default=DEFAULT_SPREAD)
    sp.add_argument("--seed", type=int, default=7)
    return parser


_SOLVER_ERRORS = (errors.NotBracketed, errors.NotConverged, errors.NullSpaceOverlap,
                  errors.SingularOperator, errors.FlatCurve, errors.TooFewPoints, ArithmeticError)
_HIERARCHY_ERRORS = (errors.TooDeep, errors.NotSeparable, errors.NotPowerOfTwo,
                     errors.OddDimension)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, _HIERARCHY_ERRORS):
        return EXIT_HIERARCHY
    if isinstance(exc, errors.TooLarge):
        return EXIT_GUARD
    if isinstance(exc, _SOLVER_ERRORS):
        return EXIT_SOLVER
    if isinstance(exc, (OSError, errors.MalformedFile)):
        return EXIT_IO
    return EXIT_FLAGS


def _limit_threads():
    n = os.environ.get("DEBLUR_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    limiter = _limit_threads()
    try:
        return args.func(args)
    except (UsageError, errors.DeblurError, ValueError, OSError, ArithmeticError) as exc:
        code = _exit_code(exc)
        print(f"deblur {args.command}: error: {exc}", file=sys.stderr)
        return code
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
