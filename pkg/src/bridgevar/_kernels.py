"""Compiled series kernels for the bridge-extremum moment functions.

Every kernel evaluates a truncated image series in which the radial integral
has already been done in closed form. Kernels return both moment orders
(lambda = 2 and lambda = 4) at once because they share all intermediate
quantities. Index ranges are ``-m_max..m_max`` and ``-n_max..n_max``.

The one-dimensional series decay only algebraically (pairs of terms fall off
like ``|m|**-(2 + lambda)``), so their tails are added back with a midpoint
Euler-Maclaurin integral evaluated by Gauss-Legendre quadrature in the
variable ``u = (m_max + 1/2) / x``.
"""

import math

import numpy as np
from numba import njit

_GL_U, _GL_W = np.polynomial.legendre.leggauss(24)
# map nodes from (-1, 1) to (0, 1)
_GL_U = 0.5 * (_GL_U + 1.0)
_GL_W = 0.5 * _GL_W

GAMMA = {lam: math.gamma(lam) for lam in (1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)}


@njit(cache=True)
def _polar_term(m, co, si, sc, c2, c4):
    # m * [m * beta(m sc) + (1 - m) * beta(m sc + si)], beta(y) = C / |y|^(2 + lam)
    out2 = 0.0
    out4 = 0.0
    y1 = abs(m * sc)
    y2 = abs(m * sc + si)
    if y1 > 0.0:
        i1 = 1.0 / (y1 * y1)
        out2 += m * m * c2 * i1 * i1
        out4 += m * m * c4 * i1 * i1 * i1
    if y2 > 0.0:
        i2 = 1.0 / (y2 * y2)
        out2 += m * (1.0 - m) * c2 * i2 * i2
        out4 += m * (1.0 - m) * c4 * i2 * i2 * i2
    return out2, out4


@njit(cache=True)
def alpha_polar_pair(theta, m_max, tail, gl_u, gl_w):
    co = math.cos(theta)
    si = math.sin(theta)
    sc = co - si
    # C(lam) = (1 + lam) / 2^(lam/2) * Gamma((2 + lam)/2)
    c2 = 3.0 / 2.0 * 1.0
    c4 = 5.0 / 4.0 * 2.0
    s2 = 0.0
    s4 = 0.0
    for m in range(-m_max, m_max + 1):
        if m == 0:
            continue
        a, b = _polar_term(float(m), co, si, sc, c2, c4)
        s2 += a
        s4 += b
    if tail:
        x0 = m_max + 0.5
        for k in range(gl_u.shape[0]):
            x = x0 / gl_u[k]
            jac = gl_w[k] * x0 / (gl_u[k] * gl_u[k])
            a1, b1 = _polar_term(x, co, si, sc, c2, c4)
            a2, b2 = _polar_term(-x, co, si, sc, c2, c4)
            s2 += (a1 + a2) * jac
            s4 += (b1 + b2) * jac
    return s2, s4


@njit(cache=True)
def _sph_term(m, co, si, sc, x2h, g2, g4):
    # radial integral of r^(lam+2) I(r y) exp(-r^2 x^2 / 2) / sqrt(2 pi):
    # 2 Gamma((lam+3)/2) / sqrt(2 pi) * (2 (lam+2) y^2 - x^2/2) / D^((lam+5)/2)
    out2 = 0.0
    out4 = 0.0
    for j in range(2):
        if j == 0:
            y = m * sc
            w = m * m
        else:
            y = m * sc + si
            w = m * (1.0 - m)
        yy = y * y
        d = 2.0 * yy + x2h
        if d <= 0.0:
            continue
        inv = 1.0 / d
        root = math.sqrt(inv)
        p35 = inv * inv * inv * root
        p45 = p35 * inv
        out2 += w * g2 * (8.0 * yy - x2h) * p35
        out4 += w * g4 * (12.0 * yy - x2h) * p45
    return out2, out4


@njit(cache=True)
def alpha_sph_pair(theta, upsilon, m_max, tail, gl_u, gl_w):
    cu = math.cos(upsilon)
    co = math.cos(theta) * cu
    si = math.sin(theta) * cu
    sc = co - si
    x = math.sin(upsilon)
    x2h = 0.5 * x * x
    k = 2.0 / math.sqrt(2.0 * math.pi)
    g2 = k * 1.329340388179137  # Gamma(5/2)
    g4 = k * 3.323350970447843  # Gamma(7/2)
    s2 = 0.0
    s4 = 0.0
    for m in range(-m_max, m_max + 1):
        if m == 0:
            continue
        a, b = _sph_term(float(m), co, si, sc, x2h, g2, g4)
        s2 += a
        s4 += b
    if tail:
        x0 = m_max + 0.5
        for q in range(gl_u.shape[0]):
            xm = x0 / gl_u[q]
            jac = gl_w[q] * x0 / (gl_u[q] * gl_u[q])
            a1, b1 = _sph_term(xm, co, si, sc, x2h, g2, g4)
            a2, b2 = _sph_term(-xm, co, si, sc, x2h, g2, g4)
            s2 += (a1 + a2) * jac
            s4 += (b1 + b2) * jac
    return s2, s4


@njit(cache=True)
def _last_f(u, v, t, it2, it12, x2h, sph):
    # one kernel term in the variables u = a + y, v = c - y
    d = u * u * it2 + v * v * it12 + x2h
    a = u * u * (u * (1.0 - t) + v * t)
    b = d * t * (6.0 * u * (1.0 - t) + 2.0 * v * t)
    inv = 1.0 / d
    if sph:
        p2 = inv * inv * inv * inv
        p4 = p2 * inv
        return (6.0 * a - b) * p2, (8.0 * a - b) * p4
    root = math.sqrt(inv)
    p2 = inv * inv * inv * root
    p4 = p2 * inv
    return (5.0 * a - b) * p2, (7.0 * a - b) * p4


@njit(cache=True)
def _last_row(m, co, si, sc, t, it2, it12, x2h, sph, v1, v2, v3, v4):
    # n-sum for one (possibly non-integer) image index m, with |term| sum
    u1 = 2.0 * sc * m + co
    u2 = 2.0 * sc * m + si
    u3 = -co - 2.0 * sc * m
    u4 = -2.0 * (co + sc * m) + si
    w1 = m * m
    w2 = m * (m + 1.0)
    r2 = 0.0
    r4 = 0.0
    ab2 = 0.0
    ab4 = 0.0
    for j in range(v1.shape[0]):
        a1, b1 = _last_f(u1, v1[j], t, it2, it12, x2h, sph)
        a2, b2 = _last_f(u2, v2[j], t, it2, it12, x2h, sph)
        a3, b3 = _last_f(u1, v3[j], t, it2, it12, x2h, sph)
        a4, b4 = _last_f(u2, v4[j], t, it2, it12, x2h, sph)
        c1, d1 = _last_f(u3, v1[j], t, it2, it12, x2h, sph)
        c2, d2 = _last_f(u4, v2[j], t, it2, it12, x2h, sph)
        c3, d3 = _last_f(u3, v3[j], t, it2, it12, x2h, sph)
        c4, d4 = _last_f(u4, v4[j], t, it2, it12, x2h, sph)
        r2 += w1 * (a1 - a2 - a3 + a4) - w2 * (c1 - c2 - c3 + c4)
        r4 += w1 * (b1 - b2 - b3 + b4) - w2 * (d1 - d2 - d3 + d4)
        ab2 += abs(w1) * (abs(a1) + abs(a2) + abs(a3) + abs(a4))
        ab2 += abs(w2) * (abs(c1) + abs(c2) + abs(c3) + abs(c4))
        ab4 += abs(w1) * (abs(b1) + abs(b2) + abs(b3) + abs(b4))
        ab4 += abs(w2) * (abs(d1) + abs(d2) + abs(d3) + abs(d4))
    return r2, r4, ab2, ab4


@njit(cache=True)
def last_series_pair(co, si, t, x, m_max, n_max, sph, tail, gl_u, gl_w):
    """Double sum shared by the last-extremum moment functions.

    Returns the lambda = 2 and lambda = 4 sums (without prefactor) followed
    by the matching sums of absolute terms, used as cancellation yardsticks.
    """
    sc = co - si
    it2 = 0.5 / t
    it12 = 0.5 / (1.0 - t)
    x2h = 0.5 * x * x
    nn = 2 * n_max + 1
    v1 = np.empty(nn)
    v2 = np.empty(nn)
    v3 = np.empty(nn)
    v4 = np.empty(nn)
    for j in range(nn):
        n = float(j - n_max)
        v1[j] = 2.0 * sc * n - co
        v2[j] = 2.0 * sc * n - si
        v3[j] = co + 2.0 * sc * n
        v4[j] = 2.0 * (co + sc * n) - si
    s2 = 0.0
    s4 = 0.0
    e2 = 0.0
    e4 = 0.0
    for i in range(-m_max, m_max + 1):
        if i == 0:
            continue
        r2, r4, a2, a4 = _last_row(float(i), co, si, sc, t, it2, it12, x2h, sph,
                                   v1, v2, v3, v4)
        s2 += r2
        s4 += r4
        e2 += a2
        e4 += a4
    if tail:
        x0 = m_max + 0.5
        for q in range(gl_u.shape[0]):
            xm = x0 / gl_u[q]
            jac = gl_w[q] * x0 / (gl_u[q] * gl_u[q])
            r2, r4, a2, a4 = _last_row(xm, co, si, sc, t, it2, it12, x2h, sph,
                                       v1, v2, v3, v4)
            p2, p4, b2, b4 = _last_row(-xm, co, si, sc, t, it2, it12, x2h, sph,
                                       v1, v2, v3, v4)
            s2 += (r2 + p2) * jac
            s4 += (r4 + p4) * jac
            e2 += (a2 + b2) * jac
            e4 += (a4 + b4) * jac
    return s2, s4, e2, e4


@njit(cache=True)
def alpha_last_many(theta, t, m_max, n_max, tail, gl_u, gl_w):
    """Columns: alpha at lambda = 2 and 4, then their cancellation yardsticks."""
    n = theta.shape[0]
    out = np.empty((n, 4))
    for k in range(n):
        tk = t[k]
        s2, s4, e2, e4 = last_series_pair(math.cos(theta[k]), math.sin(theta[k]), tk, 0.0,
                                          m_max, n_max, False, tail, gl_u, gl_w)
        base = -1.0 / math.sqrt(8.0 * math.pi * (1.0 - tk) ** 3 * tk ** 7)
        # Gamma(5/2), Gamma(7/2)
        out[k, 0] = base * 1.329340388179137 * s2
        out[k, 1] = base * 3.323350970447843 * s4
        out[k, 2] = abs(base) * 1.329340388179137 * e2
        out[k, 3] = abs(base) * 3.323350970447843 * e4
    return out


@njit(cache=True)
def alpha_sph_time_many(theta, upsilon, t, m_max, n_max, tail, gl_u, gl_w):
    """Columns: alpha at lambda = 2 and 4, then their cancellation yardsticks."""
    n = theta.shape[0]
    out = np.empty((n, 4))
    for k in range(n):
        tk = t[k]
        cu = math.cos(upsilon[k])
        s2, s4, e2, e4 = last_series_pair(math.cos(theta[k]) * cu, math.sin(theta[k]) * cu,
                                          tk, math.sin(upsilon[k]), m_max, n_max, True,
                                          tail, gl_u, gl_w)
        base = -1.0 / (4.0 * math.pi * math.sqrt(tk ** 7 * (1.0 - tk) ** 3))
        # Gamma(3), Gamma(4)
        out[k, 0] = base * 2.0 * s2
        out[k, 1] = base * 6.0 * s4
        out[k, 2] = abs(base) * 2.0 * e2
        out[k, 3] = abs(base) * 6.0 * e4
    return out


@njit(cache=True)
def alpha_polar_many(theta, m_max, tail, gl_u, gl_w):
    n = theta.shape[0]
    out = np.empty((n, 2))
    for k in range(n):
        a, b = alpha_polar_pair(theta[k], m_max, tail, gl_u, gl_w)
        out[k, 0] = a
        out[k, 1] = b
    return out


@njit(cache=True)
def alpha_sph_many(theta, upsilon, m_max, tail, gl_u, gl_w):
    n = theta.shape[0]
    out = np.empty((n, 2))
    for k in range(n):
        a, b = alpha_sph_pair(theta[k], upsilon[k], m_max, tail, gl_u, gl_w)
        out[k, 0] = a
        out[k, 1] = b
    return out
