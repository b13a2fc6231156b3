"""Distributions of canonical bridge extrema and the alpha moment functions.

The canonical bridge is ``Y(t) = W(t) - t W(1)`` on ``[0, 1]``. Its high ``H``,
low ``L`` and the time ``t_last`` of whichever extremum comes later have
explicit image-series densities. Radial moments of those densities, the
``alpha`` functions, give the optimal weights of the most efficient
homogeneous estimators and, through ratio integrals, their variances.

Two regions of the (theta, upsilon, t) domain are numerically floored:

* ``t < T_MIN``: both extrema must occur almost immediately and the bridge
  must then stay inside the band; the true alpha is far below 1e-8 while the
  algebraic series only resolves it to about that level.
* ``|upsilon| > UPSILON_MAX``: the high-low radius is tiny next to the close,
  where the high-low density is again exponentially small.

In those regions the alpha functions return 0 and bump a counter; estimators
clamp their sample coordinates into the resolved box instead.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, special

from . import _kernels, diagnostics
from .errors import ConfigurationError, DomainError, NumericalFailure

T_MIN = 0.02
UPSILON_MAX = 1.45
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class SeriesTruncation:
    """Image-series truncation ``|m| <= m_max``, ``|n| <= n_max``.

    ``tail`` adds a midpoint Euler-Maclaurin estimate of the discarded outer
    image terms. The radial integrals leave only algebraic decay in ``m``,
    so without it the truncated sums converge slowly where ``t`` is close to
    1. Set ``tail=False`` for the plain truncated sums.
    """

    m_max: int = 50
    n_max: int = 50
    tail: bool = True

    def __post_init__(self):
        if int(self.m_max) < 1 or int(self.n_max) < 1:
            raise ConfigurationError("m_max and n_max must be positive integers")

    def doubled(self):
        return SeriesTruncation(2 * self.m_max, 2 * self.n_max, self.tail)


DEFAULT_TRUNCATION = SeriesTruncation()


def _as_array(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    scalar = arrs[0].ndim == 0
    return scalar, [np.ascontiguousarray(a).ravel() for a in arrs], arrs[0].shape


def _shape_out(val, scalar, shape):
    if scalar:
        return float(val[0])
    return val.reshape(shape)


def _check_lambda(lam):
    if lam not in (2, 4):
        raise DomainError(f"moment order lambda must be 2 or 4, got {lam!r}")
    return 0 if lam == 2 else 1


def _check_open(name, x, lo, hi):
    if not np.all(np.isfinite(x)) or np.any(x <= lo) or np.any(x >= hi):
        raise DomainError(f"{name} must lie in the open interval ({lo:g}, {hi:g})")


# ---------------------------------------------------------------------------
# densities


def pdf_high(h):
    """Density ``4 h exp(-2 h^2)`` of the canonical bridge high (0 for h <= 0)."""
    h = np.asarray(h, dtype=float)
    out = np.where(h > 0, 4.0 * h * np.exp(-2.0 * h * h), 0.0)
    return float(out) if out.ndim == 0 else out


def pdf_high_joint(h, t):
    """Joint density of the high and the time at which it occurs."""
    scalar, (h, t), shape = _as_array(h, t)
    _check_open("t", t, 0.0, 1.0)
    q = t * (1.0 - t)
    hp = np.where(h > 0, h, 0.0)
    val = math.sqrt(2.0 / math.pi) * hp * hp / q**1.5 * np.exp(-hp * hp / (2.0 * q))
    return _shape_out(val, scalar, shape)


def _image_i(x):
    return 4.0 * (4.0 * x * x - 1.0) * np.exp(-2.0 * x * x)


def pdf_high_low(h, l, trunc=DEFAULT_TRUNCATION):
    """Joint density of the bridge high and low.

    The image series converges like ``exp(-2 (m d)^2)`` with ``d = h - l``.
    Below ``d = 6 / m_max`` the truncated sum is unreliable, and the true
    density is smaller than 1e-100; those points return 0 and are counted.
    """
    scalar, (h, l), shape = _as_array(h, l)
    if np.any(h <= 0) or np.any(l >= 0):
        raise DomainError("pdf_high_low requires h > 0 > l")
    m = np.arange(-trunc.m_max, trunc.m_max + 1, dtype=float)[:, None]
    d = h - l
    val = np.sum(m * (m * _image_i(m * d) + (1.0 - m) * _image_i(m * d + l)), axis=0)
    floor = d * trunc.m_max < 6.0
    neg = (val < 0) & ~floor
    diagnostics.bump("pdf_high_low.floor", floor.sum())
    diagnostics.bump("pdf_high_low.clamp", neg.sum())
    val = np.where(floor | neg, 0.0, val)
    return _shape_out(val, scalar, shape)


def _g_kernel(y, t, a, c):
    # Gaussian kernel of the last-extremum series in the variables u, v
    u = a + y
    v = c - y
    dexp = u * u / (2.0 * t) + v * v / (2.0 * (1.0 - t))
    poly = u**3 - u * (3.0 + u * (u - v)) * t + (3.0 * u - v) * t * t
    return -math.sqrt(2.0 / (math.pi * (1.0 - t) ** 3 * t**7)) * np.exp(-dexp) * poly


def pdf_last(h, l, t, trunc=DEFAULT_TRUNCATION):
    """Joint density of high, low and the time of the later extremum.

    Evaluated as the truncated double image series of Gaussian kernels.
    Negative values from round-off are clamped to 0 and counted.
    """
    scalar, (h, l, t), shape = _as_array(h, l, t)
    if np.any(h <= 0) or np.any(l >= 0):
        raise DomainError("pdf_last requires h > 0 > l")
    _check_open("t", t, 0.0, 1.0)
    m = np.arange(-trunc.m_max, trunc.m_max + 1, dtype=float)[:, None]
    n = np.arange(-trunc.n_max, trunc.n_max + 1, dtype=float)[None, :]
    out = np.empty(h.size)
    for k in range(h.size):
        hk, lk, tk = h[k], l[k], t[k]
        d = hk - lk
        a1 = 2.0 * d * m
        a2 = -2.0 * (hk + d * m)
        c1 = 2.0 * d * n
        c2 = 2.0 * (hk + d * n)
        s1 = (_g_kernel(hk, tk, a1, c1) - _g_kernel(lk, tk, a1, c1)
              - _g_kernel(hk, tk, a1, c2) + _g_kernel(lk, tk, a1, c2))
        s2 = (_g_kernel(hk, tk, a2, c1) - _g_kernel(lk, tk, a2, c1)
              - _g_kernel(hk, tk, a2, c2) + _g_kernel(lk, tk, a2, c2))
        out[k] = np.sum(m * m * s1 - m * (m + 1.0) * s2)
    neg = out < 0
    diagnostics.bump("pdf_last.clamp", neg.sum())
    out[neg] = 0.0
    return _shape_out(out, scalar, shape)


# ---------------------------------------------------------------------------
# alpha functions


def alpha_time_high(t, lam):
    """Radial moment of the high/time density: ``int h^lam phi_high(h, t) dh``."""
    scalar, (t,), shape = _as_array(t)
    _check_open("t", t, 0.0, 1.0)
    if not lam > -3:
        raise DomainError("lambda must exceed -3")
    val = 2.0 / math.sqrt(math.pi) * (2.0 * t * (1.0 - t)) ** (lam / 2.0) * math.gamma((3.0 + lam) / 2.0)
    return _shape_out(val, scalar, shape)


def beta_constant(lam):
    """Constant of the closed-form radial integral of one image term."""
    return (1.0 + lam) / math.sqrt(2.0**lam) * math.gamma((2.0 + lam) / 2.0)


def _polar_pairs(theta, trunc):
    return _kernels.alpha_polar_many(theta, trunc.m_max, trunc.tail, _kernels._GL_U, _kernels._GL_W)


def _sph_pairs(theta, upsilon, trunc):
    return _kernels.alpha_sph_many(theta, upsilon, trunc.m_max, trunc.tail,
                                   _kernels._GL_U, _kernels._GL_W)


def _last_pairs(theta, t, trunc):
    return _kernels.alpha_last_many(theta, t, trunc.m_max, trunc.n_max, trunc.tail,
                                    _kernels._GL_U, _kernels._GL_W)


def _sph_time_pairs(theta, upsilon, t, trunc):
    return _kernels.alpha_sph_time_many(theta, upsilon, t, trunc.m_max, trunc.n_max, trunc.tail,
                                        _kernels._GL_U, _kernels._GL_W)


def _finish(val, floor, name):
    if not np.all(np.isfinite(val[~floor])):
        k = int(np.flatnonzero(~np.isfinite(val) & ~floor)[0])
        raise NumericalFailure(f"{name}: non-finite series value", point=k)
    neg = (val <= 0) & ~floor
    diagnostics.bump(f"{name}.floor", floor.sum())
    diagnostics.bump(f"{name}.clamp", neg.sum())
    return np.where(floor | neg, 0.0, val)


def alpha_polar(theta, lam, trunc=DEFAULT_TRUNCATION):
    """``int_0^inf r^(lam+1) phi(r cos theta, r sin theta) dr`` for lam in {2, 4}."""
    col = _check_lambda(lam)
    scalar, (theta,), shape = _as_array(theta)
    _check_open("theta", theta, -HALF_PI, 0.0)
    val = _polar_pairs(theta, trunc)[:, col]
    return _shape_out(_finish(val, np.zeros(val.size, bool), "alpha_polar"), scalar, shape)


def _alpha_sph_quad(theta, upsilon, lam, gamma, trunc):
    # direct radial quadrature of phi(h, l) times the Gaussian close density
    cu, su = math.cos(upsilon), math.sin(upsilon)
    co, si = math.cos(theta) * cu, math.sin(theta) * cu

    def f(r):
        hl = pdf_high_low(r * co, r * si, trunc)
        return r ** (lam + 2) * hl * math.exp(-0.5 * (r * su - gamma) ** 2) / math.sqrt(2 * math.pi)

    val, err = integrate.quad(f, 0.0, np.inf, limit=200, epsabs=1e-13, epsrel=1e-10)
    return val


def alpha_sph(theta, upsilon, lam, gamma=0.0, trunc=DEFAULT_TRUNCATION):
    """Radial moment of the high-low-close density in spherical coordinates.

    At ``gamma = 0`` each image term is integrated in closed form. For
    nonzero drift the radial integral is done by adaptive quadrature.
    """
    col = _check_lambda(lam)
    scalar, (theta, upsilon), shape = _as_array(theta, upsilon)
    _check_open("theta", theta, -HALF_PI, 0.0)
    _check_open("upsilon", upsilon, -HALF_PI, HALF_PI)
    floor = np.abs(upsilon) > UPSILON_MAX
    if gamma == 0.0:
        val = _sph_pairs(theta, upsilon, trunc)[:, col]
    else:
        if not math.isfinite(gamma):
            raise DomainError("gamma must be finite")
        val = np.array([_alpha_sph_quad(a, b, lam, gamma, trunc) for a, b in zip(theta, upsilon)])
    return _shape_out(_finish(val, floor, "alpha_sph"), scalar, shape)


def alpha_last(theta, t, lam, trunc=DEFAULT_TRUNCATION):
    """``int_0^inf r^(lam+1) phi_last(r cos theta, r sin theta, t) dr``."""
    col = _check_lambda(lam)
    scalar, (theta, t), shape = _as_array(theta, t)
    _check_open("theta", theta, -HALF_PI, 0.0)
    _check_open("t", t, 0.0, 1.0)
    floor = t < T_MIN
    val = _last_pairs(theta, t, trunc)[:, col]
    return _shape_out(_finish(val, floor, "alpha_last"), scalar, shape)


def alpha_sph_time(theta, upsilon, t, lam, trunc=DEFAULT_TRUNCATION):
    """Radial moment of the high-low-close-time density at zero drift."""
    col = _check_lambda(lam)
    scalar, (theta, upsilon, t), shape = _as_array(theta, upsilon, t)
    _check_open("theta", theta, -HALF_PI, 0.0)
    _check_open("upsilon", upsilon, -HALF_PI, HALF_PI)
    _check_open("t", t, 0.0, 1.0)
    floor = (t < T_MIN) | (np.abs(upsilon) > UPSILON_MAX)
    val = _sph_time_pairs(theta, upsilon, t, trunc)[:, col]
    return _shape_out(_finish(val, floor, "alpha_sph_time"), scalar, shape)


def clamp_to_resolved(theta, upsilon=None, t=None, family=None, theta_margin=1e-6,
                      t_margin=1e-9):
    """Move sample coordinates into the box where the alpha series resolve.

    Returns the clamped arrays and a boolean mask of moved entries. ``None``
    arguments are passed through. Closer than ``theta_margin`` to an edge the
    alphas vanish linearly and the series lose their relative accuracy.

    For ``family`` "me-x" or "t-me-x" the angle is also reflected across
    ``-pi/4`` onto the side where that series stays accurate at large
    ``|upsilon|``. The laws are invariant under ``(H, L, C) -> (-L, -H, -C)``
    and even in ``C``, so the reflection leaves the weight unchanged; it is
    not counted as a move.
    """
    theta = np.asarray(theta, dtype=float)
    moved = np.zeros(theta.shape, bool)
    th = np.clip(theta, -HALF_PI + theta_margin, -theta_margin)
    moved |= th != theta
    if family == "me-x":
        th = np.maximum(th, -HALF_PI - th)
    elif family == "t-me-x":
        th = np.minimum(th, -HALF_PI - th)
    up = None
    if upsilon is not None:
        upsilon = np.asarray(upsilon, dtype=float)
        up = np.clip(upsilon, -UPSILON_MAX, UPSILON_MAX)
        moved |= up != upsilon
    tt = None
    if t is not None:
        t = np.asarray(t, dtype=float)
        tt = np.clip(t, T_MIN, 1.0 - t_margin)
        moved |= tt != t
    return th, up, tt, moved


def weight_ratio(family, theta, upsilon=None, t=None, trunc=DEFAULT_TRUNCATION):
    """Optimal weight ``alpha(.;2) / alpha(.;4)`` for a most efficient family.

    Coordinates are clamped into the resolved box first (counted under
    ``weight.clamp``). Where a clamped time-resolved pair is still not
    positive, which only happens in corners of negligible probability, the
    time-free ratio is used instead (counted under ``weight.fallback``).
    """
    th, up, tt, moved = clamp_to_resolved(theta, upsilon, t, family)
    diagnostics.bump("weight.clamp", int(np.sum(moved)))
    scalar, arrs, shape = _as_array(*[a for a in (th, up, tt) if a is not None])
    if family == "me":
        pairs = _polar_pairs(arrs[0], trunc)
    elif family == "me-x":
        pairs = _sph_pairs(arrs[0], arrs[1], trunc)
    elif family == "t-me":
        pairs = _last_pairs(arrs[0], arrs[1], trunc)
    elif family == "t-me-x":
        pairs = _sph_time_pairs(arrs[0], arrs[1], arrs[2], trunc)
    else:
        raise ConfigurationError(f"no optimal weight for family {family!r}")
    a2, a4 = pairs[:, 0], pairs[:, 1]
    bad = ~((a2 > 0) & (a4 > 0) & np.isfinite(a2) & np.isfinite(a4))
    ratio = np.where(bad, np.nan, a2 / np.where(bad, 1.0, a4))
    if bad.any():
        diagnostics.bump("weight.fallback", int(bad.sum()))
        idx = np.flatnonzero(bad)
        if family in ("t-me", "me"):
            alt = _polar_pairs(arrs[0][idx], trunc)
        else:
            alt = _sph_pairs(arrs[0][idx], arrs[1][idx], trunc)
        ratio[idx] = alt[:, 0] / alt[:, 1]
        if not np.all(np.isfinite(ratio[idx]) & (ratio[idx] > 0)):
            raise NumericalFailure(f"{family}: optimal weight unavailable", point=int(idx[0]))
    return _shape_out(ratio, scalar, shape)


# ---------------------------------------------------------------------------
# efficiency constants


@dataclass(frozen=True)
class EfficiencyConstant:
    """Ratio integral ``E`` of a most efficient family and ``Var = 1/E - 1``."""

    family: str
    E: float
    variance: float
    achieved_rtol: float
    nodes: int
    floored: int


_THETA_BREAKS = (-0.25 * math.pi, -0.15 * math.pi, -0.075 * math.pi, -0.1, -0.01, 0.0)
_T_BREAKS = (T_MIN, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99, 0.999, 0.9999, 1.0)
_U_BREAKS = (0.0, 0.5, 1.0, 1.25, 1.4, UPSILON_MAX)

# node counts per panel tried in turn, and the relative tolerance between
# successive refinements
_SCHEDULE = {
    "t-high": ((8, 16, 32), 1e-12),
    "me": ((16, 24, 32, 48), 1e-8),
    "bpark": ((16, 24, 32, 48), 1e-8),
    "t-me": ((8, 12, 16), 1e-5),
    "me-x": ((8, 12, 16), 1e-5),
    "t-me-x": ((4, 6, 8), 1e-5),
}

FAMILIES = tuple(_SCHEDULE)


def panel_rule(breaks, n):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    x, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        xs.append(a + 0.5 * (b - a) * (x + 1.0))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _ratio_sum(a2, a4, w):
    ok = (a2 > 0) & (a4 > 0)
    f = np.where(ok, a2 * a2 / np.where(ok, a4, 1.0), 0.0)
    return float(np.sum(f * w)), int(np.sum(~ok))


def _integral(family, n, trunc):
    # theta integrals use the reflection theta -> -pi/2 - theta (H <-> -L),
    # upsilon integrals use evenness in upsilon
    if family == "t-high":
        t, w = panel_rule((0.0, 0.5, 1.0), n)
        a2 = alpha_time_high(t, 2)
        a4 = alpha_time_high(t, 4)
        return float(np.sum(a2 * a2 / a4 * w)), 0, t.size
    th, wth = panel_rule(_THETA_BREAKS, n)
    if family in ("me", "bpark"):
        p = _polar_pairs(th, trunc)
        if family == "me":
            s, bad = _ratio_sum(p[:, 0], p[:, 1], wth)
            return 2.0 * s, bad, th.size
        k = 1.0 - np.sin(2.0 * th)
        num = 2.0 * np.sum(k * p[:, 0] * wth)
        den = 2.0 * np.sum(k * k * p[:, 1] * wth)
        return num * num / den, 0, th.size
    if family == "t-me":
        t, wt = panel_rule(_T_BREAKS, n)
        TH, T = np.meshgrid(th, t, indexing="ij")
        w = np.outer(wth, wt).ravel()
        p = _last_pairs(TH.ravel(), T.ravel(), trunc)
        s, bad = _ratio_sum(p[:, 0], p[:, 1], w)
        return 2.0 * s, bad, w.size
    u, wu = panel_rule(_U_BREAKS, n)
    wu = wu * np.cos(u)
    if family == "me-x":
        TH, U = np.meshgrid(th, u, indexing="ij")
        w = np.outer(wth, wu).ravel()
        p = _sph_pairs(TH.ravel(), U.ravel(), trunc)
        s, bad = _ratio_sum(p[:, 0], p[:, 1], w)
        return 4.0 * s, bad, w.size
    if family == "t-me-x":
        t, wt = panel_rule(_T_BREAKS, n)
        TH, U, T = np.meshgrid(th, u, t, indexing="ij")
        w = (wth[:, None, None] * wu[None, :, None] * wt[None, None, :]).ravel()
        p = _sph_time_pairs(TH.ravel(), U.ravel(), T.ravel(), trunc)
        s, bad = _ratio_sum(p[:, 0], p[:, 1], w)
        return 4.0 * s, bad, w.size
    raise ConfigurationError(f"unknown estimator family {family!r}")


@lru_cache(maxsize=None)
def efficiency_constant(family, trunc=DEFAULT_TRUNCATION, rtol=None):
    """Efficiency integral ``E`` and canonical variance ``1/E - 1``.

    Integrals use composite Gauss-Legendre rules on panels graded toward
    the endpoints, refined until two successive node counts agree to
    ``rtol`` (1e-8 for one-dimensional, 1e-5 for two and three dimensional
    integrals by default). For ``bpark`` the returned ``E`` is
    ``1 / (Var + 1)`` of the fixed-weight bridge Parkinson estimator.
    """
    if family not in _SCHEDULE:
        raise ConfigurationError(f"unknown estimator family {family!r}; choose from {FAMILIES}")
    schedule, default_tol = _SCHEDULE[family]
    tol = default_tol if rtol is None else rtol
    prev = None
    for n in schedule:
        E, bad, nodes = _integral(family, n, trunc)
        if prev is not None:
            err = abs(E - prev) / abs(E)
            if err <= tol:
                diagnostics.bump(f"efficiency.{family}.floored", bad)
                return EfficiencyConstant(family, E, 1.0 / E - 1.0, err, nodes, bad)
        prev = E
    raise NumericalFailure(f"{family}: quadrature did not reach rtol {tol:g}", achieved=err)


def bpark_constant():
    """Normalizing factor ``1 / E[(H - L)^2] = 6 / pi^2`` of bridge Parkinson."""
    return 6.0 / math.pi**2


def expected_range_squared(trunc=DEFAULT_TRUNCATION):
    """``E[(H - L)^2]`` from the polar moment ``int (1 - sin 2 theta) alpha(theta;2)``."""
    th, w = panel_rule(_THETA_BREAKS, 32)
    p = _polar_pairs(th, trunc)
    return float(2.0 * np.sum((1.0 - np.sin(2.0 * th)) * p[:, 0] * w))


def high_moment(k):
    """``E[H^k]`` of the canonical bridge high (closed form)."""
    return 2.0 ** (-k / 2.0) * special.gamma(1.0 + k / 2.0)
