"""Plausibility regions ``{theta : pl_y(theta) > alpha}``: extraction, root finding, coverage."""
from __future__ import annotations

import csv
import dataclasses
import inspect
import json
import warnings
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from ._validation import check_alpha, check_positive_int, check_seed
from .assoc import Association, rng_for
from .cdf import CdfKind
from .plaus import PlausibilityCurve, plaus_curve, plaus_point

__all__ = [
    "PlausibilityRegion",
    "SearchRangeError",
    "CoverageResult",
    "interval_from_curve",
    "sa_root",
    "contour_region_2d",
    "cells_from_values",
    "pl_at_truth",
    "coverage_sim",
    "run_coverage",
    "write_curve_csv",
    "read_curve_csv",
    "region_to_json",
    "region_from_json",
]

_REP_TAG = 0xC07E
_CDF_TAG = 0xCDF


class SearchRangeError(RuntimeError):
    """A stochastic-approximation iterate left the search range."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclasses.dataclass
class PlausibilityRegion:
    """A level-``alpha`` plausibility region.

    One-dimensional regions are a sorted list of disjoint closed intervals;
    two-dimensional ones are the set of marked grid cells ``(ix, iy)`` whose
    lower-left corner is ``(grid_x[ix], grid_y[iy])``.
    """

    alpha: float
    intervals: Optional[list] = None
    cells: Optional[np.ndarray] = None
    grid_x: Optional[np.ndarray] = None
    grid_y: Optional[np.ndarray] = None
    metadata: dict = dataclasses.field(default_factory=dict)

    @property
    def ndim(self):
        return 1 if self.cells is None else 2

    @property
    def is_empty(self):
        if self.ndim == 1:
            return not self.intervals
        return self.cells.shape[0] == 0

    @property
    def size(self):
        """Total length (1-D, summed over components) or marked-cell area (2-D)."""
        if self.ndim == 1:
            return float(sum(hi - lo for lo, hi in self.intervals))
        if self.cells.shape[0] == 0:
            return 0.0
        dx = np.diff(self.grid_x)[self.cells[:, 0]]
        dy = np.diff(self.grid_y)[self.cells[:, 1]]
        return float(np.sum(dx * dy))

    def contains(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.ndim == 1:
            return any(lo <= theta[0] <= hi for lo, hi in self.intervals)
        ix = np.searchsorted(self.grid_x, theta[0], side="right") - 1
        iy = np.searchsorted(self.grid_y, theta[1], side="right") - 1
        hits = (self.cells[:, 0] == ix) & (self.cells[:, 1] == iy)
        return bool(np.any(hits))

    def sample_interior(self, n, seed):
        """``n`` random points from the region (uniform over its measure)."""
        rng = np.random.default_rng(check_seed(seed))
        if self.is_empty:
            return np.empty((0, self.ndim))
        if self.ndim == 1:
            iv = np.asarray(self.intervals)
            lengths = iv[:, 1] - iv[:, 0]
            p = lengths / lengths.sum() if lengths.sum() > 0 else np.full(len(iv), 1.0 / len(iv))
            k = rng.choice(len(iv), size=n, p=p)
            return (iv[k, 0] + rng.random(n) * lengths[k])[:, None]
        k = rng.integers(0, self.cells.shape[0], size=n)
        ix, iy = self.cells[k, 0], self.cells[k, 1]
        x = self.grid_x[ix] + rng.random(n) * np.diff(self.grid_x)[ix]
        y = self.grid_y[iy] + rng.random(n) * np.diff(self.grid_y)[iy]
        return np.column_stack([x, y])

    def recheck(self, plfun, n=10, seed=0):
        """Fraction of ``n`` random interior points with ``plfun > alpha``."""
        pts = self.sample_interior(n, seed)
        if pts.shape[0] == 0:
            return 1.0
        return float(np.mean([plfun(p if self.ndim == 2 else p[0]) > self.alpha for p in pts]))


def interval_from_curve(curve, alpha):
    """Union of intervals where a 1-D curve exceeds ``alpha``.

    Crossings are located by linear interpolation between neighbouring grid
    points; runs touching the grid edge stop at the edge (flagged in the
    metadata as ``open_left`` / ``open_right``).  Plateaus are kept whole.
    """
    if not isinstance(curve, PlausibilityCurve):
        curve = PlausibilityCurve(*curve)
    if curve.points.shape[1] != 1:
        raise ValueError("interval_from_curve needs a one-dimensional curve")
    if len(curve) < 3:
        raise ValueError("curve needs at least 3 points")
    alpha = check_alpha(alpha, allow_zero=True)
    x, p = curve.theta, curve.values
    above = p > alpha
    intervals = []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], above.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2]):
        i, j = start, stop - 1
        lo = x[i] if i == 0 else x[i - 1] + (alpha - p[i - 1]) * (x[i] - x[i - 1]) / (p[i] - p[i - 1])
        hi = x[j] if j == len(x) - 1 else x[j] + (p[j] - alpha) * (x[j + 1] - x[j]) / (p[j] - p[j + 1])
        intervals.append((float(lo), float(hi)))
    meta = dict(curve.metadata)
    meta.update(open_left=bool(above[0]), open_right=bool(above[-1]), empty=not intervals,
                max_pl=float(p.max()))
    return PlausibilityRegion(alpha=float(alpha), intervals=intervals, metadata=meta)


def _n_params(fn):
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError):
        return 1
    return sum(1 for q in params if q.default is inspect.Parameter.empty
               and q.kind in (q.POSITIONAL_ONLY, q.POSITIONAL_OR_KEYWORD))


def sa_root(plfun, alpha, theta_init, side, steps=2000, seed=0, lo=None, hi=None, c=None, power=0.6):
    """Robbins-Monro search for ``pl(theta) = alpha`` with Polyak averaging.

    ``plfun(theta)`` or ``plfun(theta, rng)`` returns a (possibly noisy)
    plausibility; the second form receives a generator keyed by
    ``(seed, k)`` so runs are reproducible.  ``side="upper"`` assumes
    ``pl`` decreases through the root and ``"lower"`` that it increases.
    The gain is ``c / k**power`` with ``c`` defaulting to a quarter of the
    search range; the average of the last half of the iterates is returned.
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    steps = check_positive_int(steps, "steps", minimum=100)
    seed = check_seed(seed)
    lo = -np.inf if lo is None else float(lo)
    hi = np.inf if hi is None else float(hi)
    if c is None:
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("the default gain needs a finite search range")
        c = 0.25 * (hi - lo)
    sign = 1.0 if side == "upper" else -1.0
    takes_rng = _n_params(plfun) >= 2
    theta = float(theta_init)
    path = np.empty(steps)
    for k in range(1, steps + 1):
        val = plfun(theta, rng_for(seed, k)) if takes_rng else plfun(theta)
        theta = theta + sign * c / k**power * (float(val) - alpha)
        if not lo <= theta <= hi:
            tail = np.append(path[max(0, k - 11):k - 1], theta)
            raise SearchRangeError(f"iterate {theta:.6g} left [{lo:.6g}, {hi:.6g}] at step {k}", trajectory=tail)
        path[k - 1] = theta
    return float(path[steps // 2:].mean())


def cells_from_values(values, grid_x, grid_y, alpha):
    """Region of grid cells whose largest corner value exceeds ``alpha``.

    ``values[i, j]`` is the plausibility at ``(grid_x[i], grid_y[j])``.
    """
    gx = np.asarray(grid_x, dtype=float)
    gy = np.asarray(grid_y, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != (gx.size, gy.size):
        raise ValueError("values must have shape (len(grid_x), len(grid_y))")
    corner = np.maximum.reduce([v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]])
    cells = np.argwhere(corner > alpha)
    return PlausibilityRegion(alpha=float(alpha), cells=cells, grid_x=gx, grid_y=gy,
                              metadata={"empty": cells.shape[0] == 0, "max_pl": float(v.max())})


def contour_region_2d(plfun, grid_x, grid_y, alpha):
    """Evaluate ``plfun((x, y))`` on the grid and mark cells above ``alpha``."""
    gx = np.asarray(grid_x, dtype=float)
    gy = np.asarray(grid_y, dtype=float)
    if gx.size < 16 or gy.size < 16:
        raise ValueError("2-D regions need at least 16 grid points per axis")
    if np.any(np.diff(gx) <= 0) or np.any(np.diff(gy) <= 0):
        raise ValueError("grids must be strictly increasing")
    values = np.array([[plfun(np.array([x, y])) for y in gy] for x in gx])
    region = cells_from_values(values, gx, gy, alpha)
    region.metadata["values"] = values
    return region


# ------------------------------------------------------------------ coverage
@dataclasses.dataclass
class CoverageResult:
    coverage: float
    se: float
    mean_size: Optional[float]
    failures: int
    n_reps: int
    alpha: float
    seed: int
    pl: Optional[np.ndarray] = None

    def report(self, model_name):
        return {"model": model_name, "alpha": self.alpha, "n_reps": self.n_reps, "coverage": self.coverage,
                "se": self.se, "mean_size": self.mean_size, "failures": self.failures, "seed": self.seed}


def _rep_cdf(cdf, seed, rep, anchor):
    est = cdf.with_seed(int(rng_for(seed, _CDF_TAG, rep).integers(0, 2**63 - 1)))
    if est.kind is CdfKind.IMPORTANCE and cdf.anchor is None:
        est = est.with_anchor(anchor)
    return est


def _one_rep(assoc, prs, cdf, theta_true, seed, rep, size_grid, alpha):
    model = assoc.model
    y = model.simulate(theta_true, 1, rng_for(seed, _REP_TAG, rep))[0]
    anchor = np.atleast_1d(model.mle(y)) if cdf.kind is CdfKind.IMPORTANCE and cdf.anchor is None else None
    est = _rep_cdf(cdf, seed, rep, anchor)
    pl = plaus_point(assoc, prs, est, y, theta_true)
    size = None
    if size_grid is not None:
        curve = plaus_curve(assoc, prs, est, y, size_grid)
        if curve.points.shape[1] == 1:
            size = interval_from_curve(curve, alpha).size
        else:
            raise ValueError("size grids are supported for one-dimensional parameters only")
    return pl, size


def pl_at_truth(assoc, prs, cdf, theta_true, n_reps, seed, n_jobs=1, size_grid=None, alpha=0.1):
    """Plausibility of the true parameter over ``n_reps`` simulated datasets.

    Returns ``(pl, sizes, failures)``; failed reps have ``nan`` entries.
    """
    theta_true = np.atleast_1d(np.asarray(theta_true, dtype=float))
    seed = check_seed(seed)

    def job(rep):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return _one_rep(assoc, prs, cdf, theta_true, seed, rep, size_grid, alpha)
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
            return np.nan, None

    if n_jobs == 1:
        out = [job(r) for r in range(n_reps)]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(job)(r) for r in range(n_reps))
    pl = np.array([o[0] for o in out], dtype=float)
    sizes = np.array([np.nan if o[1] is None else o[1] for o in out], dtype=float)
    return pl, sizes, int(np.sum(np.isnan(pl)))


def _summarize(pl, sizes, alpha, n_reps, seed, failures, max_fail_frac):
    if failures > max_fail_frac * n_reps:
        raise RuntimeError(f"{failures} of {n_reps} replications failed (limit {max_fail_frac:.0%})")
    ok = ~np.isnan(pl)
    # alpha = 0 makes the region the whole domain
    covered = np.ones(ok.sum(), bool) if alpha == 0 else pl[ok] > alpha
    rate = float(covered.mean())
    se = float(np.sqrt(max(rate * (1 - rate), 0.0) / covered.size))
    finite_sizes = sizes[np.isfinite(sizes)]
    mean_size = float(finite_sizes.mean()) if finite_sizes.size else None
    return CoverageResult(rate, se, mean_size, failures, n_reps, float(alpha), seed, pl)


def coverage_sim(model, assoc_kind, prs, cdf, theta_true, alpha, n_reps, seed, size_grid=None,
                 interest=None, n_jobs=1, max_fail_frac=0.01):
    """Coverage of ``{theta : pl_y(theta) > alpha}`` at ``theta_true``.

    The region contains ``theta_true`` exactly when ``pl_y(theta_true) >
    alpha``, so containment needs a single plausibility evaluation per rep.
    Data and Monte Carlo seeds are derived from ``(seed, rep)``.  Region
    sizes are computed only when ``size_grid`` (1-D) is supplied.
    Replication failures are counted; more than ``max_fail_frac`` of them
    is an error.
    """
    alpha = check_alpha(alpha, allow_zero=True)
    n_reps = check_positive_int(n_reps, "n_reps", minimum=100)
    assoc = assoc_kind if isinstance(assoc_kind, Association) else Association(model, assoc_kind, interest=interest)
    pl, sizes, failures = pl_at_truth(assoc, prs, cdf, theta_true, n_reps, seed, n_jobs, size_grid, alpha)
    return _summarize(pl, sizes, alpha, n_reps, check_seed(seed), failures, max_fail_frac)


def run_coverage(rep_fn, alpha, n_reps, seed, n_jobs=1, max_fail_frac=0.01):
    """Generic harness: ``rep_fn(rep, seed) -> (pl_at_truth, size_or_None)``."""
    alpha = check_alpha(alpha, allow_zero=True)
    n_reps = check_positive_int(n_reps, "n_reps", minimum=100)
    seed = check_seed(seed)

    def job(rep):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return rep_fn(rep, seed)
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
            return np.nan, None

    out = [job(r) for r in range(n_reps)] if n_jobs == 1 else Parallel(n_jobs=n_jobs)(
        delayed(job)(r) for r in range(n_reps))
    pl = np.array([o[0] for o in out], dtype=float)
    sizes = np.array([np.nan if o[1] is None else o[1] for o in out], dtype=float)
    return _summarize(pl, sizes, alpha, n_reps, seed, int(np.isnan(pl).sum()), max_fail_frac)


# ------------------------------------------------------------- serialization
def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if not isinstance(v, np.ndarray) or v.size < 4096}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_curve_csv(path, columns, metadata=None):
    """Write named columns as CSV preceded by a ``#``-prefixed JSON metadata line.

    ``columns`` is an ordered mapping ``name -> 1-D array``.  Values are
    written with ``repr`` precision so reading back reproduces them exactly.
    """
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(_jsonable(metadata or {}), sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def read_curve_csv(path):
    """Inverse of :func:`write_curve_csv`: ``(metadata, {name: array})``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: line 1 is not a metadata comment")
        meta = json.loads(first[1:])
        reader = csv.reader(fh)
        names = next(reader)
        rows = []
        for lineno, row in enumerate(reader, start=3):
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    arr = np.asarray(rows, dtype=float).reshape(-1, len(names))
    return meta, {n: arr[:, i] for i, n in enumerate(names)}


def region_to_json(region, metadata=None):
    """Region as a JSON-ready dict (interval or cell schema)."""
    out = {"alpha": region.alpha}
    if region.ndim == 1:
        out["intervals"] = [[lo, hi] for lo, hi in region.intervals]
        out["length"] = region.size
    else:
        out["cells"] = region.cells.tolist()
        dx = np.diff(region.grid_x)
        dy = np.diff(region.grid_y)
        out["dx"] = float(dx[0])
        out["dy"] = float(dy[0])
        out["origin"] = [float(region.grid_x[0]), float(region.grid_y[0])]
        out["shape"] = [int(region.grid_x.size - 1), int(region.grid_y.size - 1)]
        out["area"] = region.size
    meta = {k: v for k, v in region.metadata.items() if k != "values"}
    if metadata:
        meta.update(metadata)
    if meta:
        out["metadata"] = _jsonable(meta)
    return out


def region_from_json(obj):
    """Rebuild a region from :func:`region_to_json` output (uniform 2-D grids)."""
    alpha = float(obj["alpha"])
    meta = obj.get("metadata", {})
    if "intervals" in obj:
        return PlausibilityRegion(alpha, intervals=[tuple(map(float, iv)) for iv in obj["intervals"]], metadata=meta)
    nx, ny = obj["shape"]
    ox, oy = obj["origin"]
    gx = ox + obj["dx"] * np.arange(nx + 1)
    gy = oy + obj["dy"] * np.arange(ny + 1)
    cells = np.asarray(obj["cells"], dtype=int).reshape(-1, 2)
    return PlausibilityRegion(alpha, cells=cells, grid_x=gx, grid_y=gy, metadata=meta)
