"""Spot-variance estimators built from interval bridge records.

Every estimator here is homogeneous of degree 2 in the level fields of a
record, so the same formula serves canonical (unit scale) samples and raw
log-price records: scaling all levels by ``delta`` scales the spot value by
``delta**2``. Each family is normalized to unit mean under the zero-drift
canonical bridge law.

Families::

    real      (C - O)^2
    simple    Y(eta)^2 / (eta (1 - eta))
    high      2 H^2
    t-high    H^2 s(t_high) / E,  s(t) = 1 / (5 t (1 - t)),  E = 3/5
    park      (Hx - Lx)^2 / (4 ln 2)          raw path range
    bpark     (6 / pi^2) (H - L)^2
    gk        k1 (Hx - Lx)^2 - k2 (C (Hx + Lx) - 2 Hx Lx) - k3 C^2
    me        R^2 s(theta) / E                    R^2 = H^2 + L^2
    t-me      R^2 s(theta, t_last) / E
    me-x      R^2 s(theta, upsilon) / E           R^2 = H^2 + L^2 + C^2
    t-me-x    R^2 s(theta, upsilon, t_last) / E

with ``s = alpha(.;2) / alpha(.;4)`` for the weighted families. Capital H, L
are bridge extremes, Hx, Lx extremes of the path itself relative to the
open, and C the close return.
"""

from dataclasses import dataclass, field, asdict
import json
import math
import re

import numpy as np

from . import bridge_laws as laws
from . import diagnostics
from .alpha_table import AlphaTable, default_table_path
from .errors import ConfigurationError, DataError, MissingFieldError, TableError

FAMILIES = ("real", "simple", "high", "t-high", "park", "bpark", "gk",
            "me", "t-me", "me-x", "t-me-x")
WEIGHTED = ("me", "t-me", "me-x", "t-me-x")
GK_K = (0.511, 0.019, 0.383)

_KAPPA = {"real": 1, "simple": 2, "high": 2, "t-high": 2}
_REQUIRES = {
    "real": ("open", "close"),
    "simple": ("bridge_eta", "eta"),
    "high": ("bridge_high",),
    "t-high": ("bridge_high", "t_high"),
    "park": ("raw_high", "raw_low"),
    "bpark": ("bridge_high", "bridge_low"),
    "gk": ("open", "close", "raw_high", "raw_low"),
    "me": ("bridge_high", "bridge_low"),
    "t-me": ("bridge_high", "bridge_low", "t_last"),
    "me-x": ("open", "close", "bridge_high", "bridge_low"),
    "t-me-x": ("open", "close", "bridge_high", "bridge_low", "t_last"),
}
# estimators touching only bridge fields are blind to the drift
DRIFT_FREE = ("simple", "high", "t-high", "bpark", "me", "t-me")


@dataclass(frozen=True)
class EstimatorId:
    """A family name plus the sampling fraction ``eta`` of ``simple``."""

    name: str
    eta: float = 0.5

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ConfigurationError(f"unknown estimator {self.name!r}; choose from {', '.join(FAMILIES)}")
        if not 0.0 < self.eta < 1.0:
            raise ConfigurationError(f"eta must lie in (0, 1), got {self.eta}")

    @property
    def kappa(self):
        return _KAPPA.get(self.name, 3)

    @property
    def requires(self):
        return _REQUIRES[self.name]

    @property
    def weighted(self):
        return self.name in WEIGHTED

    @property
    def label(self):
        if self.name == "simple" and self.eta != 0.5:
            return f"simple({self.eta:g})"
        return self.name


def parse_estimator(text):
    """``"t-me-x"`` or ``"simple(0.25)"`` to an :class:`EstimatorId`."""
    if isinstance(text, EstimatorId):
        return text
    m = re.fullmatch(r"\s*([a-z-]+)\s*(?:\(\s*([^)]*)\s*\))?\s*", str(text))
    if not m:
        raise ConfigurationError(f"cannot parse estimator {text!r}")
    name, arg = m.groups()
    if arg is not None:
        if name != "simple":
            raise ConfigurationError(f"estimator {name!r} takes no parameter")
        try:
            return EstimatorId(name, float(arg))
        except ValueError as exc:
            raise ConfigurationError(f"bad eta in {text!r}") from exc
    return EstimatorId(name)


def parse_estimator_list(text):
    ids = [parse_estimator(p) for p in re.split(r",(?![^(]*\))", text) if p.strip()]
    if not ids:
        raise ConfigurationError("estimator list is empty")
    return ids


# ---------------------------------------------------------------------------
# weights and constants


class WeightSource:
    """Where the optimal weights ``s = alpha(.;2)/alpha(.;4)`` come from.

    ``mode="table"`` (default) answers t-me-x from an :class:`AlphaTable`;
    the other weighted families always use their series, which are cheap
    enough per sample. ``mode="series"`` evaluates every weight from the
    series directly. A table given as a path is loaded lazily.
    """

    def __init__(self, mode="table", table=None, trunc=laws.DEFAULT_TRUNCATION):
        if mode not in ("table", "series"):
            raise ConfigurationError(f"weight mode must be 'table' or 'series', got {mode!r}")
        self.mode = mode
        self.trunc = trunc
        self._table = table

    @property
    def table(self):
        if self.mode != "table":
            return None
        if not isinstance(self._table, AlphaTable):
            path = self._table if self._table is not None else default_table_path()
            try:
                self._table = AlphaTable.load(path)
            except TableError as exc:
                raise TableError(f"{exc}; the t-me-x estimator needs an alpha table, "
                                 "create one with `bridgevar alpha-table build`") from exc
        return self._table

    def weights(self, family, theta, upsilon=None, t=None):
        if family == "t-me-x" and self.mode == "table":
            th, up, tt, moved = laws.clamp_to_resolved(theta, upsilon, t, family)
            diagnostics.bump("weight.clamp", int(np.sum(moved)))
            return self.table.weight(th, up, tt)
        return laws.weight_ratio(family, theta, upsilon, t, self.trunc)

    def efficiency(self, family):
        if family == "t-me-x" and self.mode == "table":
            table = self.table
            if math.isfinite(table.E) and table.truncation == self.trunc:
                return table.E
        return laws.efficiency_constant(family, self.trunc).E


def normalization_constant(est, weights=None):
    """Factor giving the family unit mean under the canonical bridge law.

    For the weighted families this is ``1 / E``; ``park`` keeps the classic
    ``1 / (4 ln 2)`` and ``gk`` has its coefficients built in (factor 1).
    """
    est = parse_estimator(est)
    name = est.name
    if name == "real" or name == "gk":
        return 1.0
    if name == "simple":
        return 1.0 / (est.eta * (1.0 - est.eta))
    if name == "high":
        return 2.0
    if name == "t-high":
        return 1.0 / laws.efficiency_constant("t-high").E
    if name == "park":
        return 1.0 / (4.0 * math.log(2.0))
    if name == "bpark":
        return laws.bpark_constant()
    source = weights if weights is not None else WeightSource()
    return 1.0 / source.efficiency(name)


# ---------------------------------------------------------------------------
# evaluation


def _column(records, name, est):
    vals = [getattr(r, name) for r in records]
    missing = [k for k, v in enumerate(vals) if v is None]
    if missing:
        raise MissingFieldError(f"estimator {est.label} needs field {name!r}, "
                                f"missing from record {missing[0]}")
    return np.asarray(vals, dtype=float)


def _fields(records, est):
    if isinstance(records, dict):
        missing = [c for c in est.requires if c not in records]
        if missing:
            raise MissingFieldError(f"estimator {est.label} needs field {missing[0]!r}")
        cols = {c: np.asarray(records[c], dtype=float) for c in est.requires}
    else:
        cols = {name: _column(records, name, est) for name in est.requires}
    if est.name == "simple":
        eta = cols["eta"]
        if not np.allclose(eta, est.eta, rtol=0, atol=1e-12):
            raise DataError(f"records store the bridge at eta={eta[0]:g}, estimator wants {est.eta:g}")
    return cols


def _angles(h, l, c=None):
    deg = (h == 0.0) & (l == 0.0)
    if deg.any():
        diagnostics.bump("estimator.degenerate", int(deg.sum()))
    theta = np.where(deg, -0.25 * math.pi, np.arctan2(l, h))
    if c is None:
        return theta, None
    return theta, np.arctan2(c, np.hypot(h, l))


def spot_values(est, records, weights=None, gk_drift=None):
    """Vector of spot estimates, one per record.

    ``records`` is a sequence of :class:`IntervalRecord` or a mapping from
    record field names to equal-length arrays.

    ``gk_drift`` selects the alternative reading of the Garman-Klass cross
    term: when given, ``C - gk_drift`` replaces ``C`` there (the drift per
    interval in the units of the records). By default the full close is used
    in both places.
    """
    est = parse_estimator(est)
    f = _fields(records, est)
    if next(iter(f.values())).size == 0:
        raise DataError("no records to estimate from")
    name = est.name
    A = normalization_constant(est, weights) if name not in WEIGHTED else None
    if name == "real":
        return (f["close"] - f["open"]) ** 2
    if name == "simple":
        return A * f["bridge_eta"] ** 2
    if name == "high":
        return A * f["bridge_high"] ** 2
    if name == "t-high":
        t = f["t_high"]
        if np.any((t <= 0) | (t >= 1)):
            bad = int(np.flatnonzero((t <= 0) | (t >= 1))[0])
            # t = 1 only when the high is the closing 0, so H = 0 as well
            if f["bridge_high"][bad] != 0.0:
                raise DataError(f"t_high outside (0, 1) in record {bad}")
        tt = np.clip(t, 1e-12, 1 - 1e-12)
        return A * f["bridge_high"] ** 2 / (5.0 * tt * (1.0 - tt))
    if name == "park":
        return A * (f["raw_high"] - f["raw_low"]) ** 2
    if name == "bpark":
        return A * (f["bridge_high"] - f["bridge_low"]) ** 2
    if name == "gk":
        k1, k2, k3 = GK_K
        hx, lx = f["raw_high"], f["raw_low"]
        c = f["close"] - f["open"]
        cx = c if gk_drift is None else c - gk_drift
        # classical cross term C (Hx + Lx); with Hx - Lx there the mean is ~1.019
        return k1 * (hx - lx) ** 2 - k2 * (cx * (hx + lx) - 2.0 * hx * lx) - k3 * c * c
    source = weights if weights is not None else WeightSource()
    h, l = f["bridge_high"], f["bridge_low"]
    if name in ("me", "t-me"):
        theta, _ = _angles(h, l)
        r2 = h * h + l * l
        if name == "me":
            s = source.weights("me", theta)
        else:
            s = source.weights("t-me", theta, None, f["t_last"])
    else:
        c = f["close"] - f["open"]
        theta, ups = _angles(h, l, c)
        r2 = h * h + l * l + c * c
        if name == "me-x":
            s = source.weights("me-x", theta, ups)
        else:
            s = source.weights("t-me-x", theta, ups, f["t_last"])
    return r2 * np.asarray(s, dtype=float) / source.efficiency(name)


def canonical_spot(est, record, weights=None, gk_drift=None):
    """Spot estimate of a single record."""
    return float(spot_values(est, [record], weights, gk_drift)[0])


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class IntegratedVarianceEstimate:
    """Sum of spot estimates over an interval sequence."""

    estimator: str
    kappa: int
    n: int
    value: float
    per_interval: list
    duration: float = None
    config: dict = field(default_factory=dict)

    @property
    def rate(self):
        """Average variance per unit time, when the duration is known."""
        return None if not self.duration else self.value / self.duration

    def to_dict(self):
        out = asdict(self)
        out["rate"] = self.rate
        return out

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d.pop("rate", None)
        return cls(**d)


def integrated_variance(records, est, delta=None, weights=None, gk_drift=None, config=None):
    """Integrated-variance estimate ``sum_i d(record_i)``.

    ``delta`` is the interval duration; when given the report carries the
    total duration ``n * delta`` and the implied variance rate.
    """
    est = parse_estimator(est)
    if not records:
        raise DataError("integrated variance needs at least one record")
    if delta is not None and not delta > 0:
        raise ConfigurationError("interval duration must be positive")
    spots = spot_values(est, records, weights, gk_drift)
    if not np.all(np.isfinite(spots)):
        raise DataError(f"non-finite spot estimate in record {int(np.flatnonzero(~np.isfinite(spots))[0])}")
    value = math.fsum(spots.tolist())
    duration = None if delta is None else delta * len(records)
    return IntegratedVarianceEstimate(est.label, est.kappa, len(records), value,
                                      [float(x) for x in spots], duration, dict(config or {}))


__all__ = [
    "FAMILIES", "WEIGHTED", "DRIFT_FREE", "GK_K", "EstimatorId", "parse_estimator",
    "parse_estimator_list", "WeightSource", "normalization_constant", "spot_values",
    "canonical_spot", "IntegratedVarianceEstimate", "integrated_variance",
]
