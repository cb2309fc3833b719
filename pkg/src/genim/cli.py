"""Command-line front end: ``genim {gamma,triangle,oddsratio,mixed,validate,qform}``.

Every CSV starts with a ``#``-prefixed JSON line holding the resolved
configuration; every JSON output carries it under ``"config"``.

Exit codes: 0 success, 2 usage, 3 numeric failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np
from scipy import stats

from . import __version__
from ._optimize import OptimizationError
from ._validation import DomainError
from .assoc import Association, rng_for
from .cdf import CdfEstimator
from .models.gamma import GammaModel, basic_im_plausibility, wald_ellipse_statistic
from .models.mixed import (
    f_lambda_cdf,
    mixed_interval,
    mixed_marginal_plaus,
    mixed_prepare,
    mixed_T,
    one_way_design,
    simulate_mixed,
)
from .models.oddsratio import TwoByTwoTable, or_curve, or_plateau, sample_odds_ratio
from .models.triangular import TriangularModel, tri_simulate
from .plaus import plaus_curve
from .qform import ChiSqMix, QuadratureError, imhof_cdf, mc_cdf
from .regions import (
    SearchRangeError,
    cells_from_values,
    coverage_sim,
    interval_from_curve,
    region_to_json,
    run_coverage,
    write_curve_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
QFORM_TOLERANCE = 5e-3
F_LAMBDA_VALUES = (0.1, 1.0, 10.0, 100.0)


class DataFileError(Exception):
    """A data file could not be read or parsed."""


class NumericFailure(Exception):
    """A numerical check failed (reported with exit code 3)."""


# ------------------------------------------------------------------ helpers
def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "parser")}
    cfg["version"] = __version__
    return cfg


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_numbers(path):
    """Numbers from a text/CSV file (comma or whitespace separated, ``#`` comments)."""
    values = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataFileError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise DataFileError(f"{path}: line {lineno}: not a number: {tok!r}") from None
    if not values:
        raise DataFileError(f"{path}: no data")
    return np.asarray(values)


def read_matrix(path):
    rows = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataFileError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.replace(",", " ").split()])
            except ValueError:
                raise DataFileError(f"{path}: line {lineno}: non-numeric entry") from None
            if len(rows[-1]) != len(rows[0]):
                raise DataFileError(f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        raise DataFileError(f"{path}: no data")
    return np.asarray(rows)


def _m_type(value):
    try:
        m = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"M must be an integer, got {value!r}") from None
    if m < 100:
        raise argparse.ArgumentTypeError(f"M must be at least 100, got {m}")
    return m


def _alpha_type(value):
    a = float(value)
    if not 0.0 <= a < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1), got {a}")
    return a


def _positive_float(value):
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value!r}")
    return v


def _need(args, parser, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        parser.error("--simulate requires " + ", ".join("--" + m.replace("_", "-") for m in missing))


# ------------------------------------------------------------------ gamma
def cmd_gamma(args):
    if args.simulate:
        _need(args, args.parser, "n", "shape", "scale")
        rng = rng_for(args.seed, 0x6A)
        y = GammaModel(args.n).simulate([args.shape, args.scale], 1, rng)[0]
    elif args.data:
        y = read_numbers(args.data)
    else:
        args.parser.error("give --data FILE or --simulate")
    model = GammaModel(y.size)
    y = model.check_data(y)
    mle = model.mle(y)
    se = np.sqrt(np.diag(np.linalg.inv(model.fisher_info(mle))))
    lo = np.maximum(mle - args.span * se, mle / 50.0)
    hi = mle + args.span * 1.5 * se
    shapes = np.linspace(lo[0], hi[0], args.grid)
    scales = np.linspace(lo[1], hi[1], args.grid)

    assoc = Association(model, "deviance")
    est = CdfEstimator("naive", M=args.M, seed=args.seed)
    pts = np.array([[k, s] for k in shapes for s in scales])
    pl_gim = plaus_curve(assoc, "one_sided", est, y, pts).values.reshape(args.grid, args.grid)
    pl_basic = basic_im_plausibility(y, shapes, scales, M=args.M, seed=args.seed)
    top = model.max_loglik(y)
    dev = np.array([[-2.0 * (model.loglik(y, [k, s]) - top) for s in scales] for k in shapes])
    pl_dev = stats.chi2.sf(np.maximum(dev, 0.0), 2)
    pl_wald = stats.chi2.sf(wald_ellipse_statistic(y, shapes, scales), 2)

    cfg = _config(args)
    cfg["mle"] = mle.tolist()
    K, S = np.meshgrid(shapes, scales, indexing="ij")
    write_curve_csv(_out(args, "gamma_surface.csv"),
                    {"theta": K.ravel(), "theta2": S.ravel(), "pl": pl_gim.ravel(),
                     "pl_basic_im": pl_basic.ravel(), "pl_deviance": pl_dev.ravel(), "pl_ellipse": pl_wald.ravel()},
                    cfg)
    areas = {}
    for name, surf in (("gim", pl_gim), ("basic_im", pl_basic), ("deviance", pl_dev), ("ellipse", pl_wald)):
        region = cells_from_values(surf, shapes, scales, args.alpha)
        edge = np.concatenate([surf[0], surf[-1], surf[:, 0], surf[:, -1]])
        meta = {"method": name, "clipped": bool(np.any(edge > args.alpha)), "config": cfg}
        _write_json(_out(args, f"gamma_region_{name}.json"), region_to_json(region, meta))
        areas[name] = region.size
    print(json.dumps({"mle": mle.tolist(), "areas": areas}, sort_keys=True))
    if not areas["gim"] < areas["basic_im"]:
        print("warning: generalized-IM region is not smaller than the basic-IM region", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ triangle
def cmd_triangle(args):
    if args.simulate:
        _need(args, args.parser, "n", "theta")
        y = tri_simulate(args.theta, args.n, args.seed)
    elif args.data:
        y = read_numbers(args.data)
    else:
        args.parser.error("give --data FILE or --simulate")
    model = TriangularModel(y.size)
    y = model.check_data(y)
    mle = np.atleast_1d(model.mle(y))
    grid = (np.arange(args.grid) + 0.5) / args.grid
    assoc = Association(model, "deviance")
    naive = CdfEstimator("naive", M=args.M, seed=args.seed)
    defensive = np.linspace(0.0, 1.0, args.defensive) if args.defensive > 0 else None
    imp = CdfEstimator("importance", M=args.M, seed=args.seed, anchor=mle, defensive=defensive)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pl_naive = plaus_curve(assoc, "one_sided", naive, y, grid)
        pl_imp = plaus_curve(assoc, "one_sided", imp, y, grid)
    top = model.max_loglik(y)
    dev = np.array([max(-2.0 * (model.loglik(y, [t]) - top), 0.0) for t in grid])
    conf = stats.chi2.sf(dev, 1)
    cfg = _config(args)
    cfg["mle"] = float(mle[0])
    write_curve_csv(_out(args, "triangle_curve.csv"),
                    {"theta": grid, "pl_naive": pl_naive.values, "pl_importance": pl_imp.values,
                     "conf_curve": conf}, cfg)
    region = interval_from_curve(pl_naive, args.alpha) if args.alpha > 0 else None
    if region is not None:
        _write_json(_out(args, "triangle_interval.json"), region_to_json(region, {"config": cfg}))
    gap = float(np.max(np.abs(pl_naive.values - pl_imp.values)))
    print(json.dumps({"mle": float(mle[0]), "max_pl_naive": float(pl_naive.values.max()),
                      "max_pl_importance": float(pl_imp.values.max()), "sup_gap": gap}, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ odds ratio
def cmd_oddsratio(args):
    table = TwoByTwoTable(args.y0, args.y1, args.n0, args.n1)
    log_psi, pl = or_curve(table, (args.lo, args.hi), args.points)
    cfg = _config(args)
    write_curve_csv(_out(args, "oddsratio_curve.csv"), {"theta": log_psi, "pl": pl}, cfg)
    alpha = args.alpha if args.alpha > 0 else 0.05
    region = interval_from_curve((log_psi, pl, {"scale": "log_psi"}), alpha)
    plateau = or_plateau(table)
    out = region_to_json(region, {"config": cfg})
    out.update(odds_ratio=sample_odds_ratio(table), log_odds_ratio=float(np.log(sample_odds_ratio(table))),
               plateau_log_psi=list(plateau), scale="log_psi",
               intervals_psi=[[float(np.exp(a)), float(np.exp(b))] for a, b in region.intervals])
    _write_json(_out(args, "oddsratio_interval.json"), out)
    print(json.dumps({"odds_ratio": round(sample_odds_ratio(table), 2), "plateau_log_psi": plateau,
                      "interval_log_psi": region.intervals}, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ mixed
def _load_manifest(path):
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataFileError(f"cannot open {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    base = os.path.dirname(os.path.abspath(path))
    files = manifest.get("files", {})
    for key in ("X", "Z", "y"):
        if key not in files:
            raise DataFileError(f"{path}: manifest 'files' lacks {key!r}")
    X = read_matrix(os.path.join(base, files["X"]))
    Z = read_matrix(os.path.join(base, files["Z"]))
    A = read_matrix(os.path.join(base, files["A"])) if "A" in files else None
    y = read_numbers(os.path.join(base, files["y"]))
    for key, expect in (("n", X.shape[0]), ("p", X.shape[1]), ("a", Z.shape[1])):
        if key in manifest and int(manifest[key]) != expect:
            raise DataFileError(f"{path}: manifest says {key}={manifest[key]} but the files give {expect}")
    return X, Z, A, y


def _lambda_grid(args):
    return np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.lambda_points)


def cmd_mixed(args):
    if args.manifest:
        X, Z, A, y = _load_manifest(args.manifest)
    elif args.simulate:
        X, Z = one_way_design(args.groups)
        A = None
    else:
        args.parser.error("give --manifest FILE or --simulate")
    index_set = None if args.index_set is None else [i - 1 for i in args.index_set]
    spec = mixed_prepare(X, Z, A, index_set=index_set)
    if args.simulate and not args.manifest:
        y = simulate_mixed(spec, args.psi, args.lam, 1, rng_for(args.seed, 0x5E))[0]
    if y.size != spec.n:
        raise DataFileError(f"y has {y.size} entries but X has {spec.n} rows")
    grid = _lambda_grid(args)
    region, psi_grid, pl = mixed_interval(spec, y, args.alpha if args.alpha > 0 else 0.05, grid, args.M, args.seed)
    T, lam_hat = mixed_T(spec, y, psi_grid, full_output=True)
    cfg = _config(args)
    cfg.update(eigenvalues=spec.e.tolist(), multiplicities=spec.r.tolist(), index_set_0based=list(spec.index_set))
    write_curve_csv(_out(args, "mixed_T_curve.csv"),
                    {"theta": psi_grid, "T": T, "pl": pl, "lambda_hat": lam_hat}, cfg)
    z = np.linspace(0.0, 1.0, 201)
    cols = {f"F_lambda_{lam:g}": f_lambda_cdf(spec, lam, args.M, args.seed)(z) for lam in F_LAMBDA_VALUES}
    write_curve_csv(_out(args, "mixed_F_lambda.csv"), cols, {**cfg, "z_grid": [0.0, 1.0, 201]})
    _write_json(_out(args, "mixed_interval.json"), region_to_json(region, {"config": cfg}))
    print(json.dumps({"intervals": region.intervals, "lower_is_zero": region.metadata["lower_is_zero"],
                      "pl_at_zero": region.metadata["pl_at_zero"]}, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ validate
def cmd_validate(args):
    if args.model == "mixed":
        X, Z = one_way_design(args.groups)
        spec = mixed_prepare(X, Z)
        grid = _lambda_grid(args)
        psi0, lam0 = args.theta if args.theta else (1.0, 1.0)
        alpha = args.alpha

        def rep(r, seed):
            y = simulate_mixed(spec, psi0, lam0, 1, rng_for(seed, 0xC07E, r))[0]
            pl = mixed_marginal_plaus(spec, y, psi0, grid, args.M, seed)
            size = None
            if args.sizes and alpha > 0:
                size = mixed_interval(spec, y, alpha, grid, args.M, seed)[0].size
            return pl, size

        res = run_coverage(rep, alpha, args.n_reps, args.seed, n_jobs=args.jobs)
    else:
        defaults = {"triangular": ([0.3], 10), "gamma": ([7.0, 3.0], 25)}
        theta0, n0 = defaults[args.model]
        theta = np.asarray(args.theta if args.theta else theta0, dtype=float)
        n = args.n or n0
        model = TriangularModel(n) if args.model == "triangular" else GammaModel(n)
        est = CdfEstimator(args.cdf, M=args.M, seed=args.seed)
        size_grid = None
        if args.sizes:
            if model.dim != 1:
                args.parser.error("--sizes is supported for one-parameter models only")
            size_grid = (np.arange(128) + 0.5) / 128
        res = coverage_sim(model, args.statistic, args.random_set, est, theta, args.alpha, args.n_reps, args.seed,
                           size_grid=size_grid, n_jobs=args.jobs)
    report = res.report(args.model)
    report["config"] = _config(args)
    _write_json(_out(args, "validate_report.json"), report)
    print(json.dumps({k: report[k] for k in ("model", "alpha", "n_reps", "coverage", "se", "failures")},
                     sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ qform
def cmd_qform(args):
    if len(args.w) != len(args.r):
        args.parser.error("--w and --r need the same number of values")
    mix = ChiSqMix(tuple(args.w), tuple(args.r))
    res = imhof_cdf(mix, args.x, tol=args.tol, full_output=True)
    mc = mc_cdf(mix, args.x, args.M, args.seed)
    diff = abs(res.value - mc)
    print(f"imhof\t{res.value:.10f}\t(error bound {res.error_bound:.2e}{', mc fallback' if res.fallback else ''})")
    print(f"mc\t{mc:.10f}\t(M={args.M}, seed={args.seed})")
    print(f"diff\t{diff:.3e}")
    if diff > QFORM_TOLERANCE:
        raise NumericFailure(f"imhof and Monte Carlo disagree by {diff:.3e} > {QFORM_TOLERANCE:g}")
    return EXIT_OK


# ------------------------------------------------------------------ parser
def _common(alpha):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--M", type=_m_type, default=10_000, help="Monte Carlo size (>= 100)")
    common.add_argument("--alpha", type=_alpha_type, default=alpha, help=f"region level (default {alpha})")
    common.add_argument("--out", default=".", help="output directory")
    return common


def build_parser():
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, required=True, help="random seed (required)")

    p = argparse.ArgumentParser(prog="genim", description="Generalized inferential models")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gamma", parents=[_common(0.1), seeded], help="two-parameter gamma regions")
    g.add_argument("--data", help="file of positive observations")
    g.add_argument("--simulate", action="store_true")
    g.add_argument("--n", type=int)
    g.add_argument("--shape", type=_positive_float)
    g.add_argument("--scale", type=_positive_float)
    g.add_argument("--grid", type=int, default=48, help="points per axis (>= 16)")
    g.add_argument("--span", type=float, default=5.0, help="grid half-width in standard errors")
    g.set_defaults(func=cmd_gamma)

    t = sub.add_parser("triangle", parents=[_common(0.1), seeded], help="triangular-mode plausibility curves")
    t.add_argument("--data", help="file of observations in [0, 1]")
    t.add_argument("--simulate", action="store_true")
    t.add_argument("--n", type=int)
    t.add_argument("--theta", type=float)
    t.add_argument("--grid", type=int, default=512)
    t.add_argument("--defensive", type=int, default=9,
                   help="number of evenly spaced defensive proposal points for importance sampling (0: none)")
    t.set_defaults(func=cmd_triangle)

    o = sub.add_parser("oddsratio", parents=[_common(0.05)], help="odds ratio of a 2x2 table")
    for name in ("y0", "y1", "n0", "n1"):
        o.add_argument(name, type=int)
    o.add_argument("--lo", type=float, default=-6.0, help="log-psi grid start")
    o.add_argument("--hi", type=float, default=6.0, help="log-psi grid end")
    o.add_argument("--points", type=int, default=481)
    o.set_defaults(func=cmd_oddsratio)

    lam_args = argparse.ArgumentParser(add_help=False)
    lam_args.add_argument("--lambda-min", type=_positive_float, default=1e-2)
    lam_args.add_argument("--lambda-max", type=_positive_float, default=1e2)
    lam_args.add_argument("--lambda-points", type=int, default=25)
    lam_args.add_argument("--groups", type=int, nargs="+", default=[4] * 6,
                          help="one-way group sizes for synthetic designs")

    m = sub.add_parser("mixed", parents=[_common(0.05), seeded, lam_args], help="mixed-model error variance")
    m.add_argument("--manifest", help="JSON manifest {n, p, a, files: {X, Z, A, y}}")
    m.add_argument("--simulate", action="store_true")
    m.add_argument("--psi", type=_positive_float, default=1.0)
    m.add_argument("--lam", type=float, default=1.0)
    m.add_argument("--index-set", type=int, nargs="+", help="1-based eigen-group indices entering T")
    m.set_defaults(func=cmd_mixed)

    v = sub.add_parser("validate", parents=[_common(0.1), seeded, lam_args], help="coverage simulation")
    v.add_argument("--model", choices=["triangular", "gamma", "mixed"], required=True)
    v.add_argument("--n-reps", type=int, default=1000)
    v.add_argument("--theta", type=float, nargs="+", help="true parameter (mixed: psi lambda)")
    v.add_argument("--n", type=int, help="sample size")
    v.add_argument("--statistic", default="deviance", choices=["deviance", "score"])
    v.add_argument("--random-set", default="one_sided", choices=["one_sided", "default"])
    v.add_argument("--cdf", default="naive", choices=["naive", "asymptotic"])
    v.add_argument("--sizes", action="store_true", help="also compute mean region size")
    v.add_argument("--jobs", type=int, default=1)
    v.set_defaults(func=cmd_validate)

    q = sub.add_parser("qform", help="chi-square mixture CDF by Imhof and Monte Carlo")
    q.add_argument("--w", type=_positive_float, nargs="+", required=True)
    q.add_argument("--r", type=int, nargs="+", required=True)
    q.add_argument("--x", type=float, required=True)
    q.add_argument("--M", type=int, default=1_000_000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=float, default=1e-8)
    q.set_defaults(func=cmd_qform)

    for parser in (g, t, o, m, v, q):
        parser.set_defaults(parser=parser)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataFileError as exc:
        print(f"genim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"genim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"genim: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, OptimizationError, QuadratureError, SearchRangeError,
            np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"genim: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
