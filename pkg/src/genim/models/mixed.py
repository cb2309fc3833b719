"""Error variance in a Gaussian linear mixed model ``Y = X beta + Z alpha + eps``.

With ``alpha ~ N(0, sigma_a^2 A)`` and ``eps ~ N(0, psi I)``, the residual
projection ``K' Y`` has covariance ``psi (I + lambda G)`` where
``G = K' Z A Z' K`` and ``lambda = sigma_a^2 / psi``.  Grouping the
eigenvectors of ``G`` by distinct eigenvalue gives the sufficient statistics
``S_l = |P_l' K' Y|^2``, each ``psi (lambda e_l + 1)`` times a chi-square
with ``r_l`` degrees of freedom.
"""
from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np
from scipy import special

from .._optimize import golden_section_max_batch
from .._validation import DomainError, check_alpha, check_positive_int, check_seed
from ..assoc import rng_for
from ..prs import RandomSetFamily, point_plaus_discrete
from ..qform import ChiSqMix, imhof_cdf
from ..regions import PlausibilityRegion

__all__ = [
    "MixedModelSpec",
    "LambdaHat",
    "EmpiricalCdf",
    "mixed_prepare",
    "default_index_set",
    "s_stats",
    "lambda_mle",
    "mixed_T",
    "f_lambda_cdf",
    "mixed_marginal_plaus",
    "mixed_plaus_curve",
    "mixed_interval",
    "simulate_mixed",
    "one_way_design",
    "DEFAULT_LAMBDA_GRID",
]

LAMBDA_MAX = 1e8
DEFAULT_LAMBDA_GRID = np.logspace(-2, 2, 25)
# H is resolved only to the quadrature tolerance, so values closer than this to
# 0 or 1 are pooled at the boundary and compared as ties
H_RESOLUTION = 1e-8
_FLAMBDA_TAG = 0xF1A
_SIM_TAG = 0x51A


@dataclasses.dataclass(frozen=True, eq=False)
class MixedModelSpec:
    """Prepared design: projection, eigenstructure and the chosen index set.

    ``e`` holds the distinct eigenvalues of ``G`` in decreasing order with
    multiplicities ``r`` and eigenvector blocks ``P``.  ``index_set`` lists
    the 0-based groups whose statistics enter ``T``; the rest drive the
    estimate of ``lambda``.
    """

    X: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    K: np.ndarray
    G: np.ndarray
    e: np.ndarray
    r: np.ndarray
    P: tuple
    index_set: tuple
    tol: float
    _cache: dict = dataclasses.field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def L(self):
        return self.e.size

    @property
    def inside(self):
        mask = np.zeros(self.L, bool)
        mask[list(self.index_set)] = True
        return mask

    def with_index_set(self, index_set):
        return dataclasses.replace(self, index_set=_check_index_set(index_set, self.L), _cache={})


def default_index_set(L):
    """Groups ``s..L`` (1-based) with ``s = max(floor(L/2), 2)``, as 0-based indices.

    These are the smaller eigenvalues; starting at 2 keeps the set proper.
    """
    if L < 2:
        raise DomainError("G has a single distinct eigenvalue, so no proper index set exists")
    s = max(L // 2, 2)
    return tuple(range(s - 1, L))


def _check_index_set(index_set, L):
    idx = tuple(sorted({int(i) for i in index_set}))
    if not idx or len(idx) >= L or idx[0] < 0 or idx[-1] >= L:
        raise DomainError(f"index set must be a proper non-empty subset of 0..{L - 1}, got {list(index_set)}")
    return idx


def mixed_prepare(X, Z, A=None, tol=None, index_set=None):
    """Projection ``K``, matrix ``G`` and its grouped eigendecomposition.

    ``tol`` is the absolute eigenvalue grouping tolerance; the default is
    ``1e-8 * ||Z||^2 ||A||``, which bounds the eigenvalues of ``G`` and stays
    meaningful when ``G`` is numerically zero.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Z.ndim == 1:
        Z = Z[:, None]
    n, p = X.shape
    if Z.shape[0] != n:
        raise DomainError(f"Z has {Z.shape[0]} rows but X has {n}")
    rank = np.linalg.matrix_rank(X)
    if rank < p:
        raise DomainError(f"X is rank deficient: rank {rank} < {p} columns")
    if p >= n:
        raise DomainError(f"need more observations than fixed effects (n={n}, p={p})")
    a = Z.shape[1]
    A = np.eye(a) if A is None else np.asarray(A, dtype=float)
    if A.shape != (a, a):
        raise DomainError(f"A must be {a}x{a}, got {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise DomainError("A must be symmetric")
    a_eig = np.linalg.eigvalsh(A)
    if a_eig[0] < -1e-10 * max(1.0, abs(a_eig[-1])):
        raise DomainError("A must be positive semi-definite")

    Q, _ = np.linalg.qr(X, mode="complete")
    K = Q[:, p:]
    ZK = Z.T @ K
    G = ZK.T @ A @ ZK
    G = 0.5 * (G + G.T)
    evals, evecs = np.linalg.eigh(G)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    scale = max(np.linalg.norm(Z, 2) ** 2 * np.abs(a_eig).max(), np.abs(evals).max())
    tol = 1e-8 * scale if tol is None else float(tol)
    breaks = np.flatnonzero(-np.diff(evals) > tol) + 1
    groups = np.split(np.arange(evals.size), breaks)
    e = np.array([evals[g].mean() for g in groups])
    e = np.where(np.abs(e) <= tol, 0.0, e)
    r = np.array([g.size for g in groups])
    P = tuple(evecs[:, g] for g in groups)
    idx = default_index_set(e.size) if index_set is None else _check_index_set(index_set, e.size)
    return MixedModelSpec(X, Z, A, K, G, e, r, P, idx, tol)


def one_way_design(group_sizes):
    """Intercept-only ``X`` and group-indicator ``Z`` for a one-way layout."""
    sizes = [check_positive_int(int(s), "group size") for s in group_sizes]
    n = sum(sizes)
    Z = np.zeros((n, len(sizes)))
    Z[np.arange(n), np.repeat(np.arange(len(sizes)), sizes)] = 1.0
    return np.ones((n, 1)), Z


def s_stats(spec, y):
    """``S_l = |P_l' K' y|^2`` for each eigen-group; ``y`` may be a batch ``(..., n)``."""
    w = np.asarray(y, dtype=float) @ spec.K
    return np.stack([np.sum((w @ P) ** 2, axis=-1) for P in spec.P], axis=-1)


class LambdaHat(NamedTuple):
    value: float
    unidentifiable: bool


def _loglik_lambda(lam, v, e, r):
    w = lam[..., None] * e + 1.0
    return np.sum(-0.5 * r * np.log(w) - 0.5 * v / w, axis=-1)


def _lambda_hat(v, e, r):
    """Batched maximizer over ``lambda >= 0``; ``v`` has shape ``(B, L')``."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    e = np.asarray(e, dtype=float)
    r = np.asarray(r, dtype=float)
    B = v.shape[0]
    if np.all(e == 0):
        return np.zeros(B)
    f = lambda x: _loglik_lambda(np.expm1(x), v, e, r)
    x, _ = golden_section_max_batch(f, np.zeros(B), np.full(B, np.log1p(LAMBDA_MAX)), xtol=1e-10)
    lam = np.expm1(x)
    # Newton polish on the analytic score.  Steps are accepted when they shrink
    # the score: for large lambda the likelihood is flat to rounding, so
    # comparing likelihood values would reject genuine improvements.
    def score(lam):
        w = lam[:, None] * e + 1.0
        return np.sum(e * (v - r * w) / (2 * w * w), axis=-1), w

    for _ in range(4):
        g, w = score(lam)
        h = np.sum(e * e * (0.5 * r * w - v) / w**3, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where(h < 0, lam - g / h, lam)
        cand = np.clip(np.where(np.isfinite(cand), cand, lam), 0.0, LAMBDA_MAX)
        lam = np.where(np.abs(score(cand)[0]) <= np.abs(g), cand, lam)
    at_zero = _loglik_lambda(np.zeros(B), v, e, r) >= _loglik_lambda(lam, v, e, r)
    return np.where(at_zero, 0.0, lam)


def lambda_mle(v, e, r):
    """Maximum likelihood ``lambda >= 0`` from scaled statistics ``v_l`` (``S_l / psi``).

    Maximizes ``sum_l -(r_l/2) log(lambda e_l + 1) - v_l / (2 (lambda e_l + 1))``
    by golden section on ``log(1 + lambda)`` over ``[0, 1e8]`` followed by
    Newton steps.  When every ``e_l`` is zero the likelihood is free of
    ``lambda``; the result is 0 with ``unidentifiable=True``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if not (v.shape == e.shape == r.shape):
        raise ValueError("v, e and r must have the same length")
    if np.any(v < 0) or np.any(e < 0) or np.any(r < 1):
        raise DomainError("need v >= 0, e >= 0 and r >= 1")
    if np.all(e == 0):
        return LambdaHat(0.0, True)
    return LambdaHat(float(_lambda_hat(v[None, :], e, r)[0]), False)


def _H(spec, x, lam):
    """``P(sum_{l in index set} (lam e_l + 1) V_l <= x)`` for arrays ``x``, ``lam``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), x.shape)
    inside = spec.inside
    e_in = spec.e[inside]
    r_in = spec.r[inside]
    w = lam[:, None] * e_in + 1.0
    equal = np.all(np.isclose(w, w[:, :1], rtol=1e-12, atol=0.0), axis=1)
    out = np.empty(x.shape)
    out[equal] = special.gammainc(0.5 * r_in.sum(), np.maximum(x[equal], 0.0) / (2.0 * w[equal, 0]))
    for i in np.flatnonzero(~equal):
        out[i] = imhof_cdf(ChiSqMix(tuple(w[i]), tuple(int(v) for v in r_in)), max(float(x[i]), 0.0))
    return out


def _T_from_stats(spec, S, psi):
    inside = spec.inside
    S = np.atleast_2d(S)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), S.shape[:1])
    v_out = S[:, ~inside] / psi[:, None]
    lam = _lambda_hat(v_out, spec.e[~inside], spec.r[~inside])
    x = S[:, inside].sum(axis=1) / psi
    return np.clip(_H(spec, x, lam), H_RESOLUTION, 1.0 - H_RESOLUTION), lam


def mixed_T(spec, y, psi, full_output=False):
    """``T_{y,psi} = H(sum_{l in L} S_l / psi | lambda_hat(S_{-L} / psi))``.

    ``psi`` may be an array, giving one value per entry.  With
    ``full_output`` the fitted ``lambda_hat`` values are returned too
    (``lambda_hat = 0`` means ``H`` was a plain scaled chi-square).
    """
    psi_arr = np.atleast_1d(np.asarray(psi, dtype=float))
    if np.any(~(psi_arr > 0)):
        raise DomainError("psi must be positive")
    S = s_stats(spec, y)
    if S.ndim != 1:
        raise ValueError("mixed_T takes a single response vector")
    T, lam = _T_from_stats(spec, np.broadcast_to(S, (psi_arr.size, S.size)), psi_arr)
    if np.ndim(psi) == 0:
        T, lam = float(T[0]), float(lam[0])
    return (T, lam) if full_output else T


@dataclasses.dataclass(frozen=True)
class EmpiricalCdf:
    """Step distribution function of a sorted sample."""

    sample: np.ndarray

    def __call__(self, z):
        out = np.searchsorted(self.sample, np.asarray(z, dtype=float), side="right") / self.sample.size
        return float(out) if np.ndim(out) == 0 else out

    def left(self, z):
        out = np.searchsorted(self.sample, np.asarray(z, dtype=float), side="left") / self.sample.size
        return float(out) if np.ndim(out) == 0 else out


def f_lambda_cdf(spec, lam, M=10_000, seed=0, true_lambda=False):
    """Distribution of ``Z = H(sum_{l in L} V_l(lam) | lambda_hat(V_{-L}(lam)))``.

    ``V_l(lam) = (lam e_l + 1) V_l`` with independent ``V_l ~ ChiSq(r_l)``.
    With ``true_lambda=True`` the estimate is replaced by ``lam`` itself,
    which makes ``Z`` exactly uniform (a diagnostic).  Results are cached on
    the spec.
    """
    M = check_positive_int(M, "M", minimum=1000)
    seed = check_seed(seed)
    lam = float(lam)
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    key = ("F", lam, M, seed, bool(true_lambda))
    hit = spec._cache.get(key)
    if hit is not None:
        return hit
    rng = rng_for(seed, _FLAMBDA_TAG, np.array([lam]))
    V = rng.chisquare(spec.r, size=(M, spec.L)) * (lam * spec.e + 1.0)
    inside = spec.inside
    if true_lambda:
        Z = np.clip(_H(spec, V[:, inside].sum(axis=1), np.full(M, lam)), H_RESOLUTION, 1.0 - H_RESOLUTION)
    else:
        Z, _ = _T_from_stats(spec, V, 1.0)
    ecdf = EmpiricalCdf(np.sort(Z))
    spec._cache[key] = ecdf
    return ecdf


def _grid(lambda_grid):
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("lambda grid must be non-empty")
    return grid


def mixed_plaus_curve(spec, y, psi, lambda_grid=None, M=10_000, seed=0):
    """Marginal plausibility of each ``psi``: the default random set applied to
    ``F_lambda(T_{y,psi})``, maximized over the ``lambda`` grid.

    ``T`` and the simulated ``Z`` share atoms at the clipped ends of [0, 1],
    so the left limit of ``F_lambda`` enters as for a discrete statistic.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    T = np.atleast_1d(mixed_T(spec, y, psi))
    best = np.zeros(psi.size)
    for lam in _grid(lambda_grid):
        F = f_lambda_cdf(spec, lam, M, seed)
        pl = point_plaus_discrete(RandomSetFamily.DEFAULT, np.atleast_1d(F.left(T)), np.atleast_1d(F(T)))
        best = np.maximum(best, pl)
    return best


def mixed_marginal_plaus(spec, y, psi, lambda_grid=None, M=10_000, seed=0):
    """Plausibility of ``psi`` after optimizing over the ``lambda`` grid (default 25 log-spaced points on [1e-2, 1e2])."""
    return float(mixed_plaus_curve(spec, y, [float(psi)], lambda_grid, M, seed)[0])


def _psi_scale(spec, y):
    S = s_stats(spec, y)
    inside = spec.inside
    return max(S[inside].sum() / spec.r[inside].sum(), 1e-300)


def mixed_interval(spec, y, alpha=0.05, lambda_grid=None, M=10_000, seed=0, psi_grid=None, n_grid=241):
    """Marginal plausibility interval for ``psi``.

    The curve is evaluated on a log-spaced ``psi`` grid spanning
    ``[1e-3, 1e2]`` times a crude scale estimate.  When the plausibility at
    the bottom of that range (``psi -> 0+``) still exceeds ``alpha`` the
    lower endpoint is reported as 0.
    """
    alpha = check_alpha(alpha)
    if psi_grid is None:
        c = _psi_scale(spec, y)
        psi_grid = c * np.logspace(-3, 2, n_grid)
    psi_grid = np.asarray(psi_grid, dtype=float)
    pl = mixed_plaus_curve(spec, y, psi_grid, lambda_grid, M, seed)
    above = pl > alpha
    intervals = []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], above.astype(int), [0]])))
    lx = np.log(psi_grid)
    for start, stop in zip(edges[::2], edges[1::2]):
        i, j = start, stop - 1
        if i == 0:
            lo = 0.0
        else:
            lo = float(np.exp(lx[i - 1] + (alpha - pl[i - 1]) * (lx[i] - lx[i - 1]) / (pl[i] - pl[i - 1])))
        if j == psi_grid.size - 1:
            hi = float(psi_grid[-1])
        else:
            hi = float(np.exp(lx[j] + (pl[j] - alpha) * (lx[j + 1] - lx[j]) / (pl[j] - pl[j + 1])))
        intervals.append((lo, hi))
    meta = {"pl_at_zero": float(pl[0]), "lower_is_zero": bool(above[0]), "open_right": bool(above[-1]),
            "empty": not intervals, "M": M, "seed": seed, "index_set": list(spec.index_set)}
    region = PlausibilityRegion(alpha=float(alpha), intervals=intervals, metadata=meta)
    return region, psi_grid, pl


def simulate_mixed(spec, psi, lam, size, rng):
    """``size`` responses with ``beta = 0`` (``K`` removes the fixed effects)."""
    a = spec.Z.shape[1]
    evals, evecs = np.linalg.eigh(spec.A)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    alpha = rng.standard_normal((size, a)) @ root.T * np.sqrt(lam * psi)
    eps = rng.standard_normal((size, spec.n)) * np.sqrt(psi)
    return alpha @ spec.Z.T + eps
