"""Small optimization utilities used by the models and the plausibility engine."""
from __future__ import annotations

import numpy as np
from scipy import optimize

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class OptimizationError(RuntimeError):
    """An optimizer failed to converge; ``best`` carries the incumbent."""

    def __init__(self, message, best=None, value=None):
        super().__init__(message)
        self.best = best
        self.value = value


def maximize_scalar(f, lo, hi, xtol=1e-8):
    """Maximize a scalar function on ``[lo, hi]`` (golden section with parabolic steps)."""
    res = optimize.minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                                   options={"xatol": xtol, "maxiter": 500})
    if not res.success:
        raise OptimizationError(f"1-D maximization failed on [{lo}, {hi}]: {res.message}", best=res.x, value=-res.fun)
    x, fx = float(res.x), float(-res.fun)
    # the bounded method never evaluates the endpoints exactly
    for edge in (lo, hi):
        fe = f(edge)
        if np.isfinite(fe) and fe > fx:
            x, fx = float(edge), float(fe)
    return x, fx


def maximize_nelder_mead(f, x0, xatol=1e-8, fatol=1e-10, maxiter=4000):
    """Maximize ``f`` from ``x0``; restarts once from a perturbed simplex."""
    x0 = np.asarray(x0, dtype=float)

    def negf(x):
        v = f(x)
        return -v if np.isfinite(v) else np.inf

    opts = {"xatol": xatol, "fatol": fatol, "maxiter": maxiter, "maxfev": 2 * maxiter}
    res = optimize.minimize(negf, x0, method="Nelder-Mead", options=opts)
    if not res.success:
        simplex = np.vstack([res.x] + [res.x * (1.0 + 0.05 * np.eye(len(x0))[i]) + 0.05 * np.eye(len(x0))[i]
                                        for i in range(len(x0))])
        res = optimize.minimize(negf, res.x, method="Nelder-Mead", options={**opts, "initial_simplex": simplex})
        if not res.success:
            raise OptimizationError(f"Nelder-Mead did not converge: {res.message}", best=res.x, value=-res.fun)
    return res.x, -res.fun


def coordinate_search(f, x0, lo, hi, step=None, xtol=1e-6, max_evals=2000):
    """Compass search maximizing ``f`` inside the box ``[lo, hi]``.

    Returns ``(x, fx, converged)``; convergence means every coordinate step
    has shrunk below ``xtol`` times the box width.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = np.where(hi > lo, hi - lo, 1.0)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = f(x)
    step = 0.25 * width if step is None else np.asarray(step, dtype=float) * np.ones_like(x)
    evals = 1
    movable = hi > lo
    while evals < max_evals:
        if np.all(step[movable] <= xtol * width[movable]):
            return x, fx, True
        improved = False
        for i in np.flatnonzero(movable):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[i] = np.clip(cand[i] + sign * step[i], lo[i], hi[i])
                if cand[i] == x[i]:
                    continue
                fc = f(cand)
                evals += 1
                if fc > fx:
                    x, fx, improved = cand, fc, True
                    break
        if not improved:
            step = step * 0.5
    return x, fx, bool(np.all(step[movable] <= xtol * width[movable]))


def golden_section_max_batch(f, lo, hi, xtol=1e-10, n_scan=48):
    """Vectorized golden-section maximization of ``f(x)`` for a batch of problems.

    ``f`` maps an array of shape ``(B,)`` of abscissae to ``(B,)`` values,
    one per problem. A coarse scan over ``n_scan`` points picks the bracket,
    so problems with several local maxima settle on the best scanned one.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    grid = np.linspace(0.0, 1.0, n_scan)
    scan = np.stack([f(lo + g * (hi - lo)) for g in grid])
    best = np.argmax(scan, axis=0)
    h = (hi - lo) / (n_scan - 1)
    a = np.maximum(lo, lo + (best - 1) * h)
    b = np.minimum(hi, lo + (best + 1) * h)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    n_iter = int(np.ceil(np.log(xtol / max(np.max(b - a), xtol)) / np.log(GOLDEN))) + 1
    for _ in range(max(n_iter, 1)):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        # evaluate only the freshly placed point of each bracket
        fresh = np.where(left, c_next, d_next)
        fv = f(fresh)
        fc = np.where(left, fv, fc_next)
        fd = np.where(left, fd_next, fv)
        c, d = c_next, d_next
    x = 0.5 * (a + b)
    return x, f(x)
