"""Monte Carlo moments, comparative efficiencies and drift sweeps.

Canonical paths are simulated one per seed, with seeds derived from a
master seed and the path index, so a report depends only on
``(seed, paths, steps, gammas)`` and not on batching or worker count. Sums
use ``math.fsum`` and are therefore independent of the summation order.
Drift sweeps reuse the same Gaussian increments for every drift (common
random numbers), which makes the fitted curves much smoother than
independent draws would.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import io
import math
import warnings

import numpy as np

from . import path_engine as pe
from .errors import ConfigurationError, DataError, NumericalFailure
from .estimators import DRIFT_FREE, parse_estimator, spot_values

CSV_HEADER = ("estimator", "gamma", "samples", "mean", "mean_se", "variance", "variance_se", "R")
DEGENERATE_WARN = 0.01


# ---------------------------------------------------------------------------
# closed forms


def comparative_efficiency(variance, kappa):
    """``R = sqrt(2 / (kappa Var))``, efficiency relative to realized variance."""
    if not variance > 0:
        raise ConfigurationError(f"variance must be positive, got {variance}")
    if kappa < 1:
        raise ConfigurationError(f"kappa must be at least 1, got {kappa}")
    return math.sqrt(2.0 / (kappa * variance))


def coefficient_of_variation(sigma2, variance):
    """CoV of an integrated estimate over intervals with spot variances ``sigma2``.

    With per-interval canonical variance ``Var`` this is
    ``sqrt(Var * sum sigma_i^4) / sum sigma_i^2``.
    """
    s = np.asarray(sigma2, dtype=float).ravel()
    if s.size == 0:
        raise DataError("empty variance profile")
    if np.any(~(s > 0)):
        raise DataError("every interval variance must be positive")
    if variance < 0:
        raise ConfigurationError("estimator variance must be nonnegative")
    return math.sqrt(variance * math.fsum(s * s)) / math.fsum(s)


@dataclass(frozen=True)
class LowerBound:
    value: float
    bound: float
    gap: float
    equal: bool


def lower_bound_check(s, rtol=1e-12):
    """``f(s) = |s|_2 / |s|_1`` against its infimum ``1 / sqrt(n)``."""
    s = np.asarray(s, dtype=float).ravel()
    if s.size == 0:
        raise DataError("empty vector")
    if np.any(~(s > 0)):
        raise DataError("all entries must be positive")
    f = math.sqrt(math.fsum(s * s)) / math.fsum(s)
    bound = 1.0 / math.sqrt(s.size)
    equal = bool(np.all(np.abs(s - s[0]) <= rtol * np.abs(s[0])))
    return LowerBound(f, bound, f - bound, equal)


def moving_average(series, r):
    """Trailing means over ``r`` consecutive samples (length ``n - r + 1``)."""
    x = np.asarray(series, dtype=float).ravel()
    if not isinstance(r, (int, np.integer)) or r < 1 or r > x.size:
        raise ConfigurationError(f"window must be an integer in [1, {x.size}], got {r!r}")
    if r == 1:
        return x.copy()
    c = np.concatenate([[0.0], np.cumsum(x)])
    return (c[r:] - c[:-r]) / r


# ---------------------------------------------------------------------------
# sample statistics


@dataclass(frozen=True)
class Moments:
    n: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float


def sample_moments(x):
    """Mean and unbiased variance with their standard errors.

    The variance SE uses the fourth central moment,
    ``Var[s^2] ~ (m4 - (n - 3) / (n - 1) s^4) / n``, since the estimator laws
    are far from Gaussian.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise DataError("need at least two samples")
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("non-finite sample value")
    mean = math.fsum(x) / n
    d = x - mean
    m2 = math.fsum(d * d) / n
    m4 = math.fsum(d**4) / n
    var = m2 * n / (n - 1)
    var_var = max(m4 - (n - 3) / (n - 1) * var * var, 0.0) / n
    return Moments(n, mean, math.sqrt(var / n), var, math.sqrt(var_var))


# ---------------------------------------------------------------------------
# reports


@dataclass
class EfficiencyReport:
    """Moments of one canonical estimator at one drift."""

    estimator: str
    gamma: float
    samples: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    kappa: int
    R: float
    degenerate_rate: float = 0.0
    warnings: list = field(default_factory=list)

    def row(self):
        return (self.estimator, self.gamma, self.samples, self.mean, self.mean_se,
                self.variance, self.variance_se, self.R)


def _report(est, gamma, values, degenerate_rate):
    m = sample_moments(values)
    notes = []
    if degenerate_rate > DEGENERATE_WARN:
        notes.append(f"{100 * degenerate_rate:.2f}% of records are degenerate (flat bridge)")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=3)
    R = comparative_efficiency(m.variance, est.kappa) if m.variance > 0 else float("inf")
    return EfficiencyReport(est.label, float(gamma), m.n, m.mean, m.mean_se, m.variance,
                            m.variance_se, est.kappa, R, degenerate_rate, notes)


def path_seeds(seed, paths):
    return np.array([pe.derive_seed(seed, i) for i in range(paths)], dtype=np.uint64)


def _chunk(args):
    seeds, steps, gammas, eta = args
    return pe.canonical_sample(seeds, steps, gammas, eta)


def simulate(paths, steps, seed, gammas=(0.0,), eta=0.5, workers=1):
    """Canonical single-interval samples of ``paths`` paths at every drift."""
    if not isinstance(paths, (int, np.integer)) or paths < 2:
        raise ConfigurationError(f"paths must be an integer >= 2, got {paths!r}")
    seeds = path_seeds(seed, paths)
    if workers <= 1:
        return pe.canonical_sample(seeds, steps, gammas, eta)
    parts = np.array_split(seeds, workers * 4)
    with ProcessPoolExecutor(workers) as pool:
        chunks = list(pool.map(_chunk, [(p, steps, gammas, eta) for p in parts if p.size]))
    b = [c.bridge for c in chunks]
    cat = np.concatenate
    bridge = pe.BridgeBlock(cat([x.high for x in b]), cat([x.low for x in b]),
                            cat([x.t_high for x in b]), cat([x.t_low for x in b]),
                            cat([x.at_eta for x in b]))
    return pe.CanonicalSample(chunks[0].gammas, seeds, int(steps), eta, bridge,
                              cat([c.close for c in chunks], axis=1),
                              cat([c.raw_high for c in chunks], axis=1),
                              cat([c.raw_low for c in chunks], axis=1))


def reports_from_sample(sample, estimators, weights=None, gk_reading="close"):
    """One report per (estimator, drift) of an already simulated sample.

    ``gk_reading="drift-free"`` uses ``C - gamma`` in the Garman-Klass cross
    term instead of the full close.
    """
    if gk_reading not in ("close", "drift-free"):
        raise ConfigurationError(f"gk reading must be 'close' or 'drift-free', got {gk_reading!r}")
    ests = [parse_estimator(e) for e in estimators]
    if not ests:
        raise ConfigurationError("estimator list is empty")
    deg = float(np.mean(sample.degenerate))
    out = []
    for est in ests:
        vals = None
        for g, gamma in enumerate(sample.gammas):
            drift = float(gamma) if (est.name == "gk" and gk_reading == "drift-free") else None
            # bridge-only families give the same values at every drift
            if vals is None or est.name not in DRIFT_FREE:
                vals = spot_values(est, sample.columns(g), weights, gk_drift=drift)
            out.append(_report(est, gamma, vals, deg))
    return out


def mc_moments(est, gamma=0.0, paths=10_000, steps=100_000, seed=0, weights=None,
               gk_reading="close", workers=1):
    """Mean and variance of a canonical estimator over simulated paths."""
    if paths < 100:
        raise ConfigurationError(f"mc_moments needs at least 100 paths, got {paths}")
    est = parse_estimator(est)
    eta = est.eta if est.name == "simple" else 0.5
    sample = simulate(paths, steps, seed, (gamma,), eta, workers)
    return reports_from_sample(sample, [est], weights, gk_reading)[0]


# ---------------------------------------------------------------------------
# drift sweeps


@dataclass(frozen=True)
class QuadraticFit:
    """Least squares ``mean = a g^2 + b`` and ``variance = c g^2 + d``."""

    estimator: str
    a: float
    b: float
    c: float
    d: float
    residual_mean: float
    residual_variance: float

    def text(self):
        return (f"# fit estimator={self.estimator} a={self.a:.6g} b={self.b:.6g} "
                f"c={self.c:.6g} d={self.d:.6g} residual_mean={self.residual_mean:.3g} "
                f"residual_variance={self.residual_variance:.3g}")


def fit_quadratic(gammas, means, variances, estimator=""):
    """Unweighted least squares of the two quadratic drift laws."""
    g = np.asarray(gammas, dtype=float)
    X = np.column_stack([g * g, np.ones_like(g)])
    if np.linalg.matrix_rank(X) < 2:
        raise NumericalFailure("quadratic fit needs at least two distinct |gamma| values")
    (a, b), res_m, _, _ = np.linalg.lstsq(X, np.asarray(means, float), rcond=None)
    (c, d), res_v, _, _ = np.linalg.lstsq(X, np.asarray(variances, float), rcond=None)
    rm = math.sqrt(res_m[0]) if res_m.size else 0.0
    rv = math.sqrt(res_v[0]) if res_v.size else 0.0
    return QuadraticFit(estimator, float(a), float(b), float(c), float(d), rm, rv)


@dataclass
class Sweep:
    reports: list
    fits: dict

    def to_csv(self, config=None):
        buf = io.StringIO()
        write_reports_csv(self.reports, buf, config)
        for fit in self.fits.values():
            buf.write(fit.text() + "\n")
        return buf.getvalue()


def gamma_sweep(estimators, gammas, paths, steps, seed=0, weights=None, gk_reading="close",
                workers=1):
    """Reports on a drift grid with common random numbers, plus quadratic fits."""
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if gammas.size == 0:
        raise ConfigurationError("gamma grid is empty")
    ests = [parse_estimator(e) for e in estimators]
    sample = simulate(paths, steps, seed, gammas, 0.5, workers)
    reports = reports_from_sample(sample, ests, weights, gk_reading)
    fits = {}
    if np.unique(gammas * gammas).size >= 2:
        for est in ests:
            rows = [r for r in reports if r.estimator == est.label]
            fits[est.label] = fit_quadratic([r.gamma for r in rows], [r.mean for r in rows],
                                            [r.variance for r in rows], est.label)
    return Sweep(reports, fits)


# ---------------------------------------------------------------------------
# CSV


def write_reports_csv(reports, fh, config=None):
    """Reports as CSV; ``config`` entries go first as ``# key=value`` lines."""
    for k, v in (config or {}).items():
        fh.write(f"# {k}={v}\n")
    fh.write(",".join(CSV_HEADER) + "\n")
    for r in reports:
        fh.write(f"{r.estimator},{r.gamma!r},{r.samples},{r.mean!r},{r.mean_se!r},"
                 f"{r.variance!r},{r.variance_se!r},{r.R!r}\n")


def read_reports_csv(text):
    """Parse report rows back (comment lines skipped)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise DataError("report CSV header mismatch")
    out = []
    for ln in lines[1:]:
        p = ln.split(",")
        out.append({"estimator": p[0], "gamma": float(p[1]), "samples": int(p[2]),
                    "mean": float(p[3]), "mean_se": float(p[4]), "variance": float(p[5]),
                    "variance_se": float(p[6]), "R": float(p[7])})
    return out


__all__ = [
    "CSV_HEADER", "comparative_efficiency", "coefficient_of_variation", "LowerBound",
    "lower_bound_check", "moving_average", "Moments", "sample_moments", "EfficiencyReport",
    "simulate", "reports_from_sample", "mc_moments", "QuadraticFit", "fit_quadratic",
    "Sweep", "gamma_sweep", "write_reports_csv", "read_reports_csv", "path_seeds",
]
