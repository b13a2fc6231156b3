"""Independent reference implementations used by the tests.

The bridge extreme densities are derived here from the image-method
probability that a standard Brownian bridge stays inside ``(l, h)``,

    P(l < Y < h) = sum_k exp(-2 k^2 d^2) - exp(-2 (h + k d)^2),   d = h - l,

by differentiating term by term, and the time-resolved density from the
free-space kernels of the two bridge pieces before and after the last
extreme. The alpha functions are then plain radial quadratures of these
densities. None of this code shares arithmetic with the package.
"""

import numpy as np
from scipy import integrate



def _images(d):
    # enough images for exp(-2 k^2 d^2) to underflow the sum
    k = int(np.ceil(7.0 / max(d, 1e-3))) + 2
    return np.arange(-k, k + 1, dtype=float)


def box_probability(h, l):
    d = h - l
    K = _images(d)
    return float(np.sum(np.exp(-2 * K**2 * d**2) - np.exp(-2 * (h + K * d) ** 2)))


def phi_hl(h, l):
    """Joint density of bridge high and low, ``-d^2 P / dh dl``."""
    d = h - l
    K = _images(d)
    a = np.exp(-2 * K**2 * d**2)
    u = h + K * d
    b = np.exp(-2 * u**2)
    return float(np.sum((16 * K**4 * d**2 - 4 * K**2) * a - K * (1 + K) * (16 * u**2 - 4) * b))


def _p(z, s):
    return np.exp(-z * z / (2 * s)) / np.sqrt(2 * np.pi * s)


def _dp(z, s):
    return -z / s * _p(z, s)


def _first_piece(h, d, t):
    K = _images(d)
    return -0.5 * np.sum(_dp(h + 2 * K * d, t) - _dp(2 * K * d - h, t))


def _second_piece(h, d, s):
    K = _images(d)
    return 2 * np.sum(_dp(2 * K * d - h, s))


def _high_last(h, l, t, e=1e-5):
    d = h - l
    df = (_first_piece(h, d + e, t) - _first_piece(h, d - e, t)) / (2 * e)
    return df * _second_piece(h, d, 1 - t) * np.sqrt(2 * np.pi)


def phi_last(h, l, t):
    """Density of (high, low, time of the later extreme)."""
    return float(_high_last(h, l, t) + _high_last(-l, -h, t))


def normal_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


def _radial(f, lam, power):
    val, _ = integrate.quad(lambda r: r ** (lam + power) * f(r), 0, np.inf, limit=400,
                            epsabs=0, epsrel=1e-10)
    return val


def alpha_polar(theta, lam):
    c, s = np.cos(theta), np.sin(theta)
    return _radial(lambda r: phi_hl(r * c, r * s), lam, 1)


def alpha_sph(theta, upsilon, lam):
    # radial moment of the high-low-close density; the cos(upsilon) of the
    # volume element is left to the angular integrals, as in the package
    c, s, cu, su = np.cos(theta), np.sin(theta), np.cos(upsilon), np.sin(upsilon)
    return _radial(lambda r: phi_hl(r * cu * c, r * cu * s) * normal_pdf(r * su), lam, 2)


def alpha_last(theta, t, lam):
    c, s = np.cos(theta), np.sin(theta)
    return _radial(lambda r: phi_last(r * c, r * s, t), lam, 1)


def alpha_sph_time(theta, upsilon, t, lam):
    c, s, cu, su = np.cos(theta), np.sin(theta), np.cos(upsilon), np.sin(upsilon)
    return _radial(lambda r: phi_last(r * cu * c, r * cu * s, t) * normal_pdf(r * su), lam, 2)


def high_time_density(h, t):
    """Density of the bridge high and its time.

    For Brownian motion the triple (max, argmax, endpoint) has density
    ``2 f(m, t) f(m - x, 1 - t)`` with the first-passage density ``f``;
    conditioning on a zero endpoint divides by the N(0, 1) density at 0.
    """
    def fp(a, s):
        return a / np.sqrt(2 * np.pi * s**3) * np.exp(-a * a / (2 * s))
    return float(2 * fp(h, t) * fp(h, 1 - t) * np.sqrt(2 * np.pi))
