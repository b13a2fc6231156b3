"""Canonical Wiener paths, discrete bridges and per-interval bridge records.

A canonical path is ``X(t) = gamma t + W(t)`` on ``[0, 1]`` sampled on the
uniform grid ``t_k = k / steps``. Each interval of a path (or of a tick
series) is reduced to an :class:`IntervalRecord`: the open and close levels,
the high and low of the interval bridge (the path minus the chord joining
its endpoints) and the normalized times at which those extremes occur.

Intervals are semi-closed, ``(start, end]``: the opening grid point belongs
to the previous interval, so extremum times lie in ``(0, 1]``. The bridge is
exactly 0 at the closing point, hence ``bridge_high >= 0 >= bridge_low``.
"""

from dataclasses import dataclass, fields
import csv
import datetime as _dt
import io
import math

import numpy as np

from .errors import ConfigurationError, DataError

RECORD_COLUMNS = ("interval", "open", "close", "bridge_high", "bridge_low",
                  "t_high", "t_low", "t_last")
EXTRA_COLUMNS = ("raw_high", "raw_low", "bridge_eta", "eta")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class PathSpec:
    """Drift ratio, grid size and seed of one simulated canonical path."""

    gamma: float = 0.0
    steps: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 2:
            raise ConfigurationError(f"steps must be an integer >= 2, got {self.steps!r}")
        if not math.isfinite(self.gamma):
            raise ConfigurationError("gamma must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SamplePath:
    """Levels ``values[k] + drift * k / steps`` on the uniform grid of [0, 1].

    The trend-free part and the linear drift are kept apart so that bridge
    fields, which ignore any linear trend, are computed from ``values``
    alone and stay bit-identical when a trend is added.
    """

    values: np.ndarray
    drift: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DataError("a sample path needs at least two levels")
        if not math.isfinite(self.drift):
            raise DataError("path drift must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "drift", float(self.drift))

    @property
    def steps(self):
        return self.values.size - 1

    @property
    def times(self):
        return np.arange(self.values.size) / self.steps

    @property
    def levels(self):
        if self.drift == 0.0:
            return self.values.copy()
        return self.values + self.drift * self.times

    def with_trend(self, slope):
        """The same path with ``slope * t`` added to every level."""
        return SamplePath(self.values, self.drift + slope)


@dataclass(frozen=True)
class IntervalRecord:
    """Bridge OHLC of one interval plus extremum occurrence times.

    ``raw_high``/``raw_low`` are the extremes of the path itself relative to
    the open (used by the Parkinson and Garman-Klass estimators);
    ``bridge_eta`` is the bridge level at fractional time ``eta`` (used by
    the simple estimator). Both are optional.
    """

    open: float
    close: float
    bridge_high: float
    bridge_low: float
    t_high: float
    t_low: float
    t_last: float
    raw_high: float = None
    raw_low: float = None
    bridge_eta: float = None
    eta: float = None

    @property
    def ret(self):
        return self.close - self.open

    @property
    def degenerate(self):
        return self.bridge_high == 0.0 and self.bridge_low == 0.0

    def scaled(self, delta):
        """Copy with every level field multiplied by ``delta`` (times kept)."""
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in ("open", "close", "bridge_high", "bridge_low", "raw_high", "raw_low", "bridge_eta"):
            if kw[name] is not None:
                kw[name] = kw[name] * delta
        return IntervalRecord(**kw)


@dataclass(frozen=True)
class PolarSample:
    """Polar (``upsilon = 0``) or spherical coordinates of a record."""

    r: float
    theta: float
    upsilon: float
    t_last: float
    degenerate: bool = False

    def cartesian(self):
        """Inverse map to ``(H, L, C)``."""
        cu = math.cos(self.upsilon)
        return (self.r * cu * math.cos(self.theta), self.r * cu * math.sin(self.theta),
                self.r * math.sin(self.upsilon))


# ---------------------------------------------------------------------------
# simulation


def derive_seed(master, index):
    """64-bit per-path seed mixed from ``(master, index)`` by SeedSequence.

    numpy's SeedSequence hashes its entropy with a fixed, documented
    algorithm, so the mapping is stable across platforms and releases.
    """
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def path_rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def gaussian_increments(spec):
    """The ``steps`` standard normal draws behind a path, in order."""
    return path_rng(spec.seed).standard_normal(spec.steps)


def simulate_canonical_path(spec, increments=None):
    """``gamma k/steps + (g_1 + ... + g_k)/sqrt(steps)`` for k = 0..steps.

    ``increments`` may carry pre-drawn normals (common random numbers across
    drift values); by default they come from the spec's seed.
    """
    if not isinstance(spec, PathSpec):
        raise ConfigurationError("simulate_canonical_path expects a PathSpec")
    g = gaussian_increments(spec) if increments is None else np.asarray(increments, dtype=float)
    if g.shape != (spec.steps,):
        raise ConfigurationError("increments must have one entry per step")
    return SamplePath(_wiener_levels(g), spec.gamma)


def _wiener_levels(g):
    # cumulative sums of the scaled increments, prefixed with the start 0
    out = np.zeros(g.shape[:-1] + (g.shape[-1] + 1,))
    np.cumsum(g, axis=-1, out=out[..., 1:])
    out[..., 1:] /= math.sqrt(g.shape[-1])
    return out


def canonical_bridge(path):
    """``X(t_k) - t_k X(1)``; both endpoints are exactly 0 and the drift drops out."""
    v = path.values - path.values[0]
    out = v - path.times * v[-1]
    out[0] = 0.0
    out[-1] = 0.0
    return SamplePath(out)


# ---------------------------------------------------------------------------
# interval reduction


def _eta_index(per, eta):
    # last grid index k (1..per) with k / per <= eta, 0 when eta < 1 / per
    return int(np.searchsorted(np.arange(1, per + 1) / per, eta, side="right"))


@dataclass(frozen=True)
class BridgeBlock:
    """Bridge fields of many equal-length intervals, one row per interval."""

    high: np.ndarray
    low: np.ndarray
    t_high: np.ndarray
    t_low: np.ndarray
    at_eta: np.ndarray

    @property
    def t_last(self):
        return np.maximum(self.t_high, self.t_low)


def bridge_block(x, eta=None):
    """Bridge extremes of rows of trend-free levels relative to their open.

    ``x[:, k - 1]`` is the level at grid point ``k = 1..per`` of each
    interval (the open itself, at k = 0, is 0 and excluded). Ties go to the
    first index; times are ``k / per``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    per = x.shape[1]
    tau = np.arange(1, per + 1) / per
    y = x - tau * x[:, -1:]
    y[:, -1] = 0.0
    kh = np.argmax(y, axis=1)
    kl = np.argmin(y, axis=1)
    rows = np.arange(y.shape[0])
    high = np.maximum(y[rows, kh], 0.0)
    low = np.minimum(y[rows, kl], 0.0)
    if eta is None:
        at_eta = np.full(y.shape[0], np.nan)
    else:
        k = _eta_index(per, eta)
        at_eta = np.zeros(y.shape[0]) if k == 0 else y[:, k - 1].copy()
    return BridgeBlock(high, low, tau[kh], tau[kl], at_eta)


def raw_extremes(x, slope):
    """Max and min (including the open 0) of ``x + slope * k / per`` per row."""
    x = np.atleast_2d(x)
    lv = x if slope == 0.0 else x + slope * (np.arange(1, x.shape[1] + 1) / x.shape[1])
    return np.maximum(lv.max(axis=1), 0.0), np.minimum(lv.min(axis=1), 0.0)


def interval_records(path, n, eta=0.5):
    """Split a path into ``n`` equal intervals and reduce each to a record.

    Ties in the extremes go to the first attaining grid index. ``eta`` sets
    the fractional time of the stored bridge level used by the simple
    estimator (``None`` to skip it).
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigurationError(f"interval count must be a positive integer, got {n!r}")
    steps = path.steps
    if steps % n:
        raise ConfigurationError(f"{steps} steps are not divisible into {n} intervals")
    per = steps // n
    if per < 2:
        raise ConfigurationError("each interval needs at least two grid steps")
    if eta is not None and not 0.0 < eta < 1.0:
        raise ConfigurationError("eta must lie in (0, 1)")
    v = path.values
    x = v[1:].reshape(n, per) - v[:-1:per][:, None]
    b = bridge_block(x, eta)
    slope = path.drift / n
    rh, rl = raw_extremes(x, slope)
    lv = path.levels
    out = []
    for i in range(n):
        out.append(IntervalRecord(float(lv[i * per]), float(lv[(i + 1) * per]),
                                  float(b.high[i]), float(b.low[i]), float(b.t_high[i]),
                                  float(b.t_low[i]), float(max(b.t_high[i], b.t_low[i])),
                                  float(rh[i]), float(rl[i]),
                                  None if eta is None else float(b.at_eta[i]), eta))
    return out


@dataclass(frozen=True)
class CanonicalSample:
    """Single-interval records of many canonical paths at several drifts.

    Bridge fields have shape ``(paths,)``; ``close``, ``raw_high`` and
    ``raw_low`` have shape ``(len(gammas), paths)``. ``close`` is the close
    return ``gamma + W(1)``.
    """

    gammas: np.ndarray
    seeds: np.ndarray
    steps: int
    eta: float
    bridge: BridgeBlock
    close: np.ndarray
    raw_high: np.ndarray
    raw_low: np.ndarray

    def columns(self, g=0):
        """Record fields at drift index ``g`` as a mapping of arrays."""
        b = self.bridge
        n = self.seeds.size
        return {"open": np.zeros(n), "close": self.close[g], "bridge_high": b.high,
                "bridge_low": b.low, "t_high": b.t_high, "t_low": b.t_low, "t_last": b.t_last,
                "raw_high": self.raw_high[g], "raw_low": self.raw_low[g],
                "bridge_eta": b.at_eta, "eta": np.full(n, self.eta if self.eta is not None else np.nan)}

    @property
    def degenerate(self):
        """Paths whose bridge never leaves 0."""
        return (self.bridge.high == 0.0) & (self.bridge.low == 0.0)

    def records(self, g=0):
        """The records at drift index ``g`` as :class:`IntervalRecord` objects."""
        b = self.bridge
        return [IntervalRecord(0.0, float(self.close[g, i]), float(b.high[i]), float(b.low[i]),
                               float(b.t_high[i]), float(b.t_low[i]),
                               float(max(b.t_high[i], b.t_low[i])), float(self.raw_high[g, i]),
                               float(self.raw_low[g, i]), float(b.at_eta[i]), self.eta)
                for i in range(self.seeds.size)]


def canonical_sample(seeds, steps, gammas=(0.0,), eta=0.5, batch=64):
    """Reduce one canonical path per seed to its single-interval record.

    Equivalent to ``interval_records(simulate_canonical_path(PathSpec(g,
    steps, seed)), 1, eta)`` for each seed and drift, with common random
    numbers across the drifts, but vectorized over batches of paths.
    """
    seeds = np.asarray(seeds, dtype=np.uint64).ravel()
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    PathSpec(float(gammas[0]), int(steps), int(seeds[0]) if seeds.size else 0)
    n = seeds.size
    hi, lo, th, tl, ye = (np.empty(n) for _ in range(5))
    close, rh, rl = (np.empty((gammas.size, n)) for _ in range(3))
    for a in range(0, n, batch):
        idx = range(a, min(n, a + batch))
        g = np.stack([path_rng(int(seeds[i])).standard_normal(steps) for i in idx])
        x = _wiener_levels(g)[:, 1:]
        b = bridge_block(x, eta)
        sl = slice(a, a + len(idx))
        hi[sl], lo[sl], th[sl], tl[sl], ye[sl] = b.high, b.low, b.t_high, b.t_low, b.at_eta
        for j, gam in enumerate(gammas):
            rh[j, sl], rl[j, sl] = raw_extremes(x, float(gam))
            close[j, sl] = x[:, -1] + gam
    return CanonicalSample(gammas, seeds, int(steps), eta, BridgeBlock(hi, lo, th, tl, ye),
                           close, rh, rl)


def to_polar(record, with_close=False):
    """Polar ``(r, theta)`` of ``(H, L)``, or spherical with the close return.

    Flat records (``H = L = 0``) are returned with ``degenerate=True``.
    """
    h, l = record.bridge_high, record.bridge_low
    c = record.ret if with_close else 0.0
    degenerate = h == 0.0 and l == 0.0
    r = math.hypot(h, l, c)
    theta = math.atan2(l, h) if not degenerate else float("nan")
    upsilon = math.atan2(c, math.hypot(h, l)) if (with_close and r > 0) else 0.0
    return PolarSample(r, theta, upsilon, record.t_last, degenerate)


def polar_arrays(records, with_close=False):
    """Vectorized :func:`to_polar`: arrays ``r, theta, upsilon, t_last, degenerate``."""
    h = np.array([rec.bridge_high for rec in records], dtype=float)
    l = np.array([rec.bridge_low for rec in records], dtype=float)
    c = np.array([rec.ret for rec in records], dtype=float) if with_close else np.zeros_like(h)
    t = np.array([rec.t_last for rec in records], dtype=float)
    deg = (h == 0.0) & (l == 0.0)
    rho = np.hypot(h, l)
    r = np.hypot(rho, c)
    theta = np.where(deg, np.nan, np.arctan2(l, h))
    ups = np.arctan2(c, rho)        # 0 when everything is flat
    return r, theta, ups, t, deg


# ---------------------------------------------------------------------------
# tick ingestion


def _reduce(tau, x, eta):
    # one irregular interval: tau are normalized tick times in (0, 1], x the
    # log-prices relative to the open; a missing tick at tau = 1 carries the
    # last price forward
    if tau[-1] != 1.0:
        tau = np.append(tau, 1.0)
        x = np.append(x, x[-1])
    y = x - tau * x[-1]
    y[-1] = 0.0
    kh = int(np.argmax(y))
    kl = int(np.argmin(y))
    bridge_eta = None
    if eta is not None:
        k = int(np.searchsorted(tau, eta, side="right")) - 1
        bridge_eta = 0.0 if k < 0 else float(y[k])
    return (max(float(y[kh]), 0.0), min(float(y[kl]), 0.0), float(tau[kh]), float(tau[kl]),
            max(float(x.max()), 0.0), min(float(x.min()), 0.0), bridge_eta)


def ingest_price_series(ticks, n, eta=0.5):
    """Reduce time-sorted ``(time, price)`` ticks to ``n`` equal-duration records.

    The session runs from the first to the last tick time. Interval ``i``
    covers ``(start_i, end_i]``; its open is the last log-price at or before
    ``start_i`` and its close the last log-price at or before ``end_i``.
    Extremum times are the tick times themselves, normalized to ``(0, 1]``.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigurationError(f"interval count must be a positive integer, got {n!r}")
    arr = np.asarray(ticks, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise DataError("need at least two (time, price) ticks")
    times, prices = arr[:, 0], arr[:, 1]
    bad = np.flatnonzero(~(prices > 0) | ~np.isfinite(prices))
    if bad.size:
        raise DataError(f"non-positive or invalid price at tick index {int(bad[0])}")
    if not np.all(np.isfinite(times)) or np.any(np.diff(times) < 0):
        k = int(np.flatnonzero(~(np.diff(times) >= 0))[0]) + 1 if np.all(np.isfinite(times)) else 0
        raise DataError(f"tick times must be finite and sorted (problem at index {k})")
    t0, t1 = times[0], times[-1]
    if t1 <= t0:
        raise DataError("tick times span zero duration")
    logp = np.log(prices)
    dur = (t1 - t0) / n
    bounds = t0 + dur * np.arange(n + 1)
    bounds[-1] = t1
    out = []
    for i in range(n):
        start, end = bounds[i], bounds[i + 1]
        lo_idx = int(np.searchsorted(times, start, side="right"))
        hi_idx = int(np.searchsorted(times, end, side="right"))
        if hi_idx - lo_idx < 2:
            raise DataError(f"interval {i} ({start:g}, {end:g}] holds {hi_idx - lo_idx} ticks; need 2")
        x_open = logp[lo_idx - 1]
        tau = (times[lo_idx:hi_idx] - start) / (end - start)
        tau = np.minimum(tau, 1.0)
        x = logp[lo_idx:hi_idx] - x_open
        hi, lo, th, tl, rh, rl, be = _reduce(tau, x.copy(), eta)
        out.append(IntervalRecord(float(x_open), float(logp[hi_idx - 1]), hi, lo, th, tl,
                                  max(th, tl), rh, rl, be, eta))
    return out


def parse_time(text):
    """Seconds as a float, or an ISO-8601 timestamp converted to epoch seconds."""
    try:
        return float(text)
    except ValueError:
        pass
    try:
        stamp = _dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"unreadable time value {text!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return stamp.timestamp()


def read_ticks_csv(path_or_buf):
    """Read a ``time,price`` CSV; ``#`` lines are comments."""
    fh = open(path_or_buf, newline="") if isinstance(path_or_buf, str) else path_or_buf
    try:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    finally:
        if isinstance(path_or_buf, str):
            fh.close()
    if not rows or [c.strip() for c in rows[0]] != ["time", "price"]:
        raise DataError("tick CSV must start with the header 'time,price'")
    out = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise DataError(f"tick CSV line {i + 1}: expected 2 fields")
        try:
            price = float(row[1])
        except ValueError as exc:
            raise DataError(f"tick CSV line {i + 1}: bad price {row[1]!r}") from exc
        out.append((parse_time(row[0]), price))
    return out


# ---------------------------------------------------------------------------
# record CSV


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_records_csv(records, fh, extra=False, comments=(), start=0):
    """Write records with the standard header (``extra`` appends optional fields)."""
    for line in comments:
        fh.write(f"# {line}\n")
    cols = RECORD_COLUMNS + (EXTRA_COLUMNS if extra else ())
    fh.write(",".join(cols) + "\n")
    for k, rec in enumerate(records):
        vals = [str(start + k)] + [_fmt(getattr(rec, c)) for c in cols[1:]]
        fh.write(",".join(vals) + "\n")


def records_to_csv_text(records, extra=False, comments=()):
    buf = io.StringIO()
    write_records_csv(records, buf, extra, comments)
    return buf.getvalue()


def read_records_csv(path_or_buf):
    """Read a record CSV; the optional extra columns are honoured when present."""
    fh = open(path_or_buf, newline="") if isinstance(path_or_buf, str) else path_or_buf
    try:
        lines = [line for line in fh if not line.startswith("#") and line.strip()]
    finally:
        if isinstance(path_or_buf, str):
            fh.close()
    if not lines:
        raise DataError("record CSV is empty")
    reader = csv.DictReader(lines)
    missing = [c for c in RECORD_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise DataError(f"record CSV lacks columns: {', '.join(missing)}")
    out = []
    for i, row in enumerate(reader, start=2):
        try:
            kw = {c: float(row[c]) for c in RECORD_COLUMNS[1:]}
            for c in EXTRA_COLUMNS:
                if row.get(c) not in (None, ""):
                    kw[c] = float(row[c])
        except ValueError as exc:
            raise DataError(f"record CSV line {i}: {exc}") from exc
        out.append(IntervalRecord(**kw))
    return out


__all__ = [
    "PathSpec", "SamplePath", "IntervalRecord", "PolarSample", "derive_seed", "path_rng",
    "simulate_canonical_path", "canonical_bridge", "interval_records", "to_polar",
    "polar_arrays", "ingest_price_series", "BridgeBlock", "bridge_block", "raw_extremes",
    "CanonicalSample", "canonical_sample", "read_ticks_csv", "write_records_csv",
    "read_records_csv", "RECORD_COLUMNS", "EXTRA_COLUMNS",
]
