"""Distribution of positive linear combinations of independent chi-squares.

``imhof_cdf`` inverts the characteristic function numerically (Imhof, 1961)
with an adaptive Gauss-Kronrod (7/15) panel rule; ``mc_cdf`` is a plain
Monte Carlo estimate used as an independent check.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from scipy import special

from ._validation import DomainError, check_positive_int, check_seed

__all__ = ["ChiSqMix", "ImhofResult", "QuadratureError", "imhof_cdf", "mc_cdf", "chisq_mix_cdf"]

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# 15 Kronrod nodes on [-1, 1]; the Gauss nodes are every other one of them
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])

MAX_PANELS = 2_000_000


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@dataclasses.dataclass(frozen=True)
class ChiSqMix:
    """``sum_l weights[l] * V_l`` with independent ``V_l ~ ChiSq(dofs[l])``."""

    weights: tuple
    dofs: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        r = np.atleast_1d(np.asarray(self.dofs))
        if w.shape != r.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("weights and dofs must be non-empty 1-D sequences of equal length")
        if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
            raise DomainError("all weights must be positive and finite")
        if np.any(r < 1) or np.any(r != np.round(r)):
            raise DomainError("all degrees of freedom must be positive integers")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "dofs", tuple(int(v) for v in r))

    @property
    def w(self):
        return np.asarray(self.weights)

    @property
    def r(self):
        return np.asarray(self.dofs, dtype=float)

    @property
    def mean(self):
        return float(np.sum(self.w * self.r))

    @property
    def sd(self):
        return float(np.sqrt(2.0 * np.sum(self.w**2 * self.r)))

    def scaled(self, c):
        return ChiSqMix(tuple(self.w * c), self.dofs)


@dataclasses.dataclass(frozen=True)
class ImhofResult:
    value: float
    error_bound: float
    upper_limit: float
    n_panels: int
    fallback: bool = False


def _theta(u, w, r, x):
    return 0.5 * np.sum(r * np.arctan(np.multiply.outer(u, w)), axis=-1) - 0.5 * x * u


def _integrand(u, w, r, x):
    wu = np.multiply.outer(u, w)
    theta = 0.5 * np.sum(r * np.arctan(wu), axis=-1) - 0.5 * x * u
    log_rho = 0.25 * np.sum(r * np.log1p(wu * wu), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sin(theta) / (u * np.exp(log_rho))
    limit = 0.5 * (np.sum(r * w) - x)
    return np.where(u < 1e-12, limit, out)


def _upper_limit(w, r, x, budget):
    """Truncation point ``U`` whose tail contribution to the integral is below ``budget``.

    Uses the smaller of Imhof's absolute bound and an integration-by-parts
    bound ``2 g(U) / |theta'(U)|`` valid once ``theta'`` is negative there.
    """
    k = 0.5 * np.sum(r)
    log_prod = 0.5 * np.sum(r * np.log(w))
    u_imhof = np.exp(-(np.log(np.pi * k * budget) + log_prod) / k)
    if x <= 0:
        return u_imhof
    u = 1.0
    while u < u_imhof:
        dtheta = 0.5 * np.sum(r * w / (1.0 + (w * u) ** 2)) - 0.5 * x
        if dtheta < 0:
            g = np.exp(-np.log(u) - 0.25 * np.sum(r * np.log1p((w * u) ** 2)))
            if 2.0 * g / abs(dtheta) <= np.pi * budget:
                return u
        u *= 1.5
    return u_imhof


def _panel_edges(upper, x):
    half_period = 2.0 * np.pi / x if x > 0 else np.inf
    edges = [0.0]
    e = 0.0
    while e < upper:
        e = min(upper, e + min(half_period, max(0.25, 0.5 * e)))
        edges.append(e)
        if len(edges) > MAX_PANELS:
            raise QuadratureError("too many quadrature panels for the truncation range", achieved=np.inf)
    return np.asarray(edges)


def _gk_panels(a, b, w, r, x):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    u = mid[:, None] + half[:, None] * _NODES[None, :]
    f = _integrand(u, w, r, x)
    k = half * (f @ _KW)
    g = half * (f @ _GW)
    return k, np.abs(k - g)


def _imhof_quadrature(w, r, x, tol):
    budget = 0.5 * tol
    upper = _upper_limit(w, r, x, budget)
    edges = _panel_edges(upper, x)
    a, b = edges[:-1], edges[1:]
    total, total_err, n_panels = 0.0, 0.0, 0
    for _ in range(60):
        k, err = _gk_panels(a, b, w, r, x)
        allowed = np.maximum(budget * (b - a) / upper, 1e-15 * np.abs(k))
        ok = err <= allowed
        total += k[ok].sum()
        total_err += err[ok].sum()
        n_panels += int(ok.sum())
        if ok.all():
            return total, total_err, upper, n_panels
        a_bad, b_bad = a[~ok], b[~ok]
        mid = 0.5 * (a_bad + b_bad)
        a = np.concatenate([a_bad, mid])
        b = np.concatenate([mid, b_bad])
        if a.size > MAX_PANELS:
            break
    raise QuadratureError("Imhof quadrature did not reach the requested tolerance",
                          achieved=(total_err + err[~ok].sum()) / np.pi)


def imhof_cdf(mix, x, tol=1e-8, full_output=False, fallback_ratio=1e-8, fallback_M=100_000, fallback_seed=0):
    """``P(sum w_l V_l <= x)`` by numerical inversion of the characteristic function.

    For ``x`` below ``fallback_ratio * mean`` the quadrature is replaced by a
    Monte Carlo estimate and ``fallback`` is set in the full output.
    """
    if not isinstance(mix, ChiSqMix):
        mix = ChiSqMix(*mix)
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise DomainError(f"x must be a finite non-negative number, got {x}")
    if not 1e-10 <= tol <= 1e-4:
        raise DomainError(f"tol must lie in [1e-10, 1e-4], got {tol}")
    if x < fallback_ratio * mix.mean:
        value = mc_cdf(mix, x, fallback_M, fallback_seed)
        res = ImhofResult(value, np.sqrt(max(value * (1 - value), 1.0 / fallback_M) / fallback_M), 0.0, 0, True)
        return res if full_output else res.value
    c = float(np.max(mix.w))
    w, r, xs = mix.w / c, mix.r, x / c
    integral, err, upper, n_panels = _imhof_quadrature(w, r, xs, tol)
    value = float(np.clip(0.5 - integral / np.pi, 0.0, 1.0))
    res = ImhofResult(value, err / np.pi + 0.5 * tol, upper * c, n_panels, False)
    return res if full_output else res.value


def mc_cdf(mix, x, M, seed):
    """Empirical CDF of ``M`` simulated draws of the mixture, at ``x`` (scalar or array)."""
    if not isinstance(mix, ChiSqMix):
        mix = ChiSqMix(*mix)
    M = check_positive_int(M, "M", minimum=10_000)
    rng = np.random.default_rng(check_seed(seed))
    q = np.zeros(M)
    for w, r in zip(mix.w, mix.dofs):
        q += w * rng.chisquare(r, size=M)
    q.sort()
    out = np.searchsorted(q, np.asarray(x, dtype=float), side="right") / M
    return float(out) if np.ndim(out) == 0 else out


def chisq_mix_cdf(weights, dofs, x, tol=1e-8):
    """CDF of a chi-square mixture, exact when all weights coincide.

    ``x`` may be an array; a single distinct weight gives a scaled chi-square
    evaluated with the regularized incomplete gamma function.
    """
    w = np.asarray(weights, dtype=float)
    r = np.asarray(dofs, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.allclose(w, w[0], rtol=1e-12, atol=0.0):
        return special.gammainc(0.5 * r.sum(), np.maximum(x, 0.0) / (2.0 * w[0]))
    mix = ChiSqMix(tuple(w), tuple(int(v) for v in r))
    flat = np.array([imhof_cdf(mix, float(v), tol=tol) for v in np.ravel(x)])
    return flat.reshape(x.shape) if x.ndim else float(flat[0])
