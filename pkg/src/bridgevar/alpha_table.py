"""Precomputed grid of the high-low-close-time alpha functions.

The table stores ``alpha(theta, upsilon, t; lam)`` for lam = 2 and 4 at zero
drift on a tensor grid strictly inside the resolved box of the series (see
``bridge_laws.T_MIN`` and ``bridge_laws.UPSILON_MAX``). Lookups interpolate
``log alpha`` with local Lagrange stencils in the coordinates

* ``-log tan(-theta)``  (power-law behaviour at both theta edges),
* ``tan(upsilon)``      (Gaussian close factor),
* ``logit(t)``,

which keeps the relative interpolation error near 1e-4 over most of a
64 x 64 x 96 grid. ``order=2`` gives plain multilinear interpolation in the
same coordinates.

Two masks guard the interpolant. Nodes where the series value is not
positive (regions of vanishing density near t = 1) are marked invalid. At
build time every cell is also checked against the series at its centre and
at the centres of its six faces; a cell whose error at any of these points
exceeds ``trust_tol`` is marked untrusted. A lookup
in an untrusted cell, or whose stencil touches an invalid node, is answered
by direct series evaluation and counted under ``table.fallback``. In
practice this happens in the corners where t is close to 1 and one of the
bridge extremes is close to 0.

Binary layout (all little-endian)::

    offset  size        field
    0       4           magic b"BVAT"
    4       4   u32     format version (2)
    8       12  3*u32   n_theta, n_upsilon, n_t
    20      12  3*u32   m_max, n_max, tail flag
    32      8   f64     t_max used to place the t nodes
    40      8   f64     efficiency integral E of t-me-x (NaN if absent)
    48      8   f64     trust tolerance of the cell check
    56      ... f64     theta nodes, upsilon nodes, t nodes
    ...     ... f64     values[2, n_theta, n_upsilon, n_t], row-major, lam = 2 first
    ...     ... u8      valid mask [n_theta, n_upsilon, n_t]
    ...     ... u8      trusted mask [n_theta - 1, n_upsilon - 1, n_t - 1]
    ...     4*k u32     CRC-32 of each 64 KiB chunk of the bytes above
    ...     32          SHA-256 of all preceding bytes

The CRC table lets ``load`` report the offset of the first corrupted chunk.
"""

from dataclasses import dataclass, field
import hashlib
import os
import struct
import zlib

import numpy as np

from . import bridge_laws as laws
from . import diagnostics
from .errors import ConfigurationError, DomainError, TableError

MAGIC = b"BVAT"
VERSION = 2
CHUNK = 65536
_HEAD = struct.Struct("<4sI3I3Iddd")
TRUST_TOL = 1e-4


def chebyshev_nodes(a, b, n):
    """``n`` Chebyshev points of the first kind on the open interval (a, b)."""
    k = np.arange(n)
    x = np.cos((2 * k + 1) * np.pi / (2 * n))[::-1]
    return a + (b - a) * 0.5 * (x + 1.0)


def _logit(t):
    return np.log(t / (1.0 - t))


def _coords(theta, upsilon, t):
    return -np.log(np.tan(-theta)), np.tan(upsilon), _logit(t)


@dataclass(frozen=True)
class GridSpec:
    """Node counts and the upper time node of an alpha table."""

    n_theta: int = 64
    n_upsilon: int = 64
    n_t: int = 96
    t_max: float = 1.0 - 1e-5

    def __post_init__(self):
        if min(self.n_theta, self.n_upsilon, self.n_t) < 4:
            raise ConfigurationError("each table axis needs at least 4 nodes")
        if self.n_upsilon % 2:
            raise ConfigurationError("n_upsilon must be even (the grid mirrors upsilon)")
        if not laws.T_MIN < self.t_max < 1.0:
            raise ConfigurationError("t_max must lie in (T_MIN, 1)")

    def axes(self):
        theta = chebyshev_nodes(-laws.HALF_PI, 0.0, self.n_theta)
        upsilon = chebyshev_nodes(-laws.UPSILON_MAX, laws.UPSILON_MAX, self.n_upsilon)
        # symmetric Chebyshev points; force exact mirror images
        half = self.n_upsilon // 2
        upsilon[:half] = -upsilon[half:][::-1]
        z = np.linspace(_logit(laws.T_MIN), _logit(self.t_max), self.n_t)
        t = 1.0 / (1.0 + np.exp(-z))
        return theta, upsilon, t


def _rel_err(a, b):
    # identical values (including fallback zeros) count as exact
    return np.where(a == b, 0.0, np.abs(a / b - 1.0))


def _lagrange(nodes, x, order):
    # stencil start index and weights of a local Lagrange interpolant
    n = nodes.size
    i0 = np.clip(np.searchsorted(nodes, x) - order // 2, 0, n - order)
    idx = i0[:, None] + np.arange(order)[None, :]
    xs = nodes[idx]
    w = np.ones((x.size, order))
    for a in range(order):
        for b in range(order):
            if a != b:
                w[:, a] *= (x - xs[:, b]) / (xs[:, a] - xs[:, b])
    return idx, w


@dataclass
class AlphaTable:
    theta: np.ndarray
    upsilon: np.ndarray
    t: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    truncation: laws.SeriesTruncation
    t_max: float
    E: float = float("nan")
    trusted: np.ndarray = None
    trust_tol: float = TRUST_TOL
    order: int = 4
    checksum: str = ""
    _logv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype="<f8")
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        if self.trusted is None:
            self.trusted = np.ones(tuple(n - 1 for n in self.valid.shape), bool)
        self.trusted = np.ascontiguousarray(self.trusted, dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            self._logv = np.where(self.valid[None], np.log(self.values), 0.0)
        self._axes = _coords(self.theta, self.upsilon, self.t)
        if not self.checksum:
            self.checksum = hashlib.sha256(self._payload()).hexdigest()

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, grid=GridSpec(), trunc=laws.DEFAULT_TRUNCATION, with_efficiency=True,
              progress=None):
        """Evaluate the series on every node (upsilon >= 0 half, mirrored)."""
        theta, upsilon, t = grid.axes()
        half = grid.n_upsilon // 2
        up_pos = upsilon[half:]
        vals = np.empty((2, theta.size, grid.n_upsilon, t.size))
        for i, th in enumerate(theta):
            U, T = np.meshgrid(up_pos, t, indexing="ij")
            p = laws._sph_time_pairs(np.full(U.size, th), U.ravel(), T.ravel(), trunc)
            for c in (0, 1):
                block = p[:, c].reshape(U.shape)
                vals[c, i, half:, :] = block
                vals[c, i, :half, :] = block[::-1]
            if progress is not None:
                progress(i + 1, theta.size)
        if not np.all(np.isfinite(vals)):
            raise TableError("non-finite series value while building the table")
        valid = (vals[0] > 0) & (vals[1] > 0)
        vals[:, ~valid] = 0.0
        E = float("nan")
        if with_efficiency:
            E = laws.efficiency_constant("t-me-x", trunc).E
        table = cls(theta, upsilon, t, vals, valid, trunc, grid.t_max, E)
        table.trusted = table._check_cells(progress)
        table.checksum = hashlib.sha256(table._payload()).hexdigest()
        return table

    def _grid_errors(self, th, up, tt, progress=None):
        # worst relative error of the interpolant on the tensor grid th x up x tt;
        # inf where the stencil is unusable or the series is not positive
        err = np.empty((th.size, up.size, tt.size))
        U, T = np.meshgrid(up, tt, indexing="ij")
        for i, x in enumerate(th):
            pt = (np.full(U.size, x), U.ravel(), T.ravel())
            direct = laws._sph_time_pairs(*pt, self.truncation)
            (l2, l4), ok = self._interp_log(*pt, (0, 1))
            with np.errstate(divide="ignore", invalid="ignore"):
                d2, d4 = np.log(direct[:, 0]), np.log(direct[:, 1])
                e = np.maximum.reduce([np.abs(np.expm1(l2 - d2)), np.abs(np.expm1(l4 - d4)),
                                       np.abs(np.expm1(l2 - l4 - d2 + d4))])
            bad = ~ok | ~(direct[:, 0] > 0) | ~(direct[:, 1] > 0) | ~np.isfinite(e)
            err[i] = np.where(bad, np.inf, e).reshape(U.shape)
            if progress is not None:
                progress()
        return err

    def _check_cells(self, progress=None):
        # a cell is trusted when the interpolant matches the series at its centre
        # and at the centres of its six faces; shared faces are evaluated once and
        # only the upsilon >= 0 half is computed (the table is mirror symmetric)
        mids = [0.5 * (a[1:] + a[:-1]) for a in self._axes]
        m_th = -np.arctan(np.exp(-mids[0]))
        m_up = np.arctan(mids[1])
        m_t = 1.0 / (1.0 + np.exp(-mids[2]))
        half = (self.upsilon.size - 1) // 2     # middle cell, centred on upsilon = 0
        n_up = self.upsilon.size // 2           # first positive upsilon node
        steps = 3 * m_th.size + self.theta.size
        done = [0]

        def tick():
            done[0] += 1
            if progress is not None:
                progress(done[0], steps)

        tol = self.trust_tol
        centre = self._grid_errors(m_th, m_up[half:], m_t, tick) <= tol
        f_t = self._grid_errors(m_th, m_up[half:], self.t, tick) <= tol
        f_th = self._grid_errors(self.theta, m_up[half:], m_t, tick) <= tol
        # upsilon faces: node n_up + j is the upper face of half-cell j; the lower
        # face of the middle cell is the mirror image of its upper face
        f_up = self._grid_errors(m_th, self.upsilon[n_up:], m_t, tick) <= tol
        lower = np.concatenate([f_up[:, :1], f_up[:, :-1]], axis=1)
        good = (centre & f_t[:, :, :-1] & f_t[:, :, 1:] & f_th[:-1] & f_th[1:]
                & lower & f_up)
        trusted = np.zeros((m_th.size, m_up.size, m_t.size), bool)
        trusted[:, half:] = good
        trusted[:, :half] = good[:, 1:][:, ::-1]
        return trusted

    # -- persistence ---------------------------------------------------------

    def _header(self):
        tr = self.truncation
        return _HEAD.pack(MAGIC, VERSION, self.theta.size, self.upsilon.size, self.t.size,
                          tr.m_max, tr.n_max, int(tr.tail), self.t_max, self.E, self.trust_tol)

    def _payload(self):
        parts = [self._header()]
        for a in (self.theta, self.upsilon, self.t, self.values):
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
        parts.append(self.valid.astype(np.uint8).tobytes())
        parts.append(self.trusted.astype(np.uint8).tobytes())
        return b"".join(parts)

    def to_bytes(self):
        body = self._payload()
        crcs = [zlib.crc32(body[k:k + CHUNK]) for k in range(0, len(body), CHUNK)]
        body += struct.pack(f"<{len(crcs)}I", *crcs)
        return body + hashlib.sha256(body).digest()

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return len(data)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEAD.size:
            raise TableError(f"file truncated: {len(data)} bytes, header needs {_HEAD.size}",
                             offset=len(data))
        magic, ver, nth, nup, nt, mm, nm, tail, t_max, E, tol = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise TableError("not an alpha table (bad magic)", offset=0)
        if ver != VERSION:
            raise TableError(f"unsupported table version {ver}", offset=4)
        n_nodes = nth * nup * nt
        n_cells = max(nth - 1, 0) * max(nup - 1, 0) * max(nt - 1, 0)
        body_len = _HEAD.size + 8 * (nth + nup + nt + 2 * n_nodes) + n_nodes + n_cells
        n_chunks = -(-body_len // CHUNK)
        total = body_len + 4 * n_chunks + 32
        if len(data) != total:
            raise TableError(f"file size {len(data)} does not match layout size {total}",
                             offset=min(len(data), total))
        body = data[:body_len]
        crcs = struct.unpack_from(f"<{n_chunks}I", data, body_len)
        for k, crc in enumerate(crcs):
            if zlib.crc32(body[k * CHUNK:(k + 1) * CHUNK]) != crc:
                raise TableError(f"checksum mismatch in chunk starting at byte {k * CHUNK}",
                                 offset=k * CHUNK)
        digest = data[total - 32:]
        if hashlib.sha256(data[:total - 32]).digest() != digest:
            raise TableError("checksum mismatch in CRC block or digest", offset=body_len)
        pos = _HEAD.size

        def take(count):
            nonlocal pos
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).copy()
            pos += 8 * count
            return arr

        theta, upsilon, t = take(nth), take(nup), take(nt)
        values = take(2 * n_nodes).reshape(2, nth, nup, nt)
        valid = np.frombuffer(data, dtype=np.uint8, count=n_nodes, offset=pos).reshape(nth, nup, nt)
        pos += n_nodes
        trusted = np.frombuffer(data, dtype=np.uint8, count=n_cells, offset=pos)
        trusted = trusted.reshape(nth - 1, nup - 1, nt - 1)
        trunc = laws.SeriesTruncation(mm, nm, bool(tail))
        table = cls(theta, upsilon, t, values, valid.astype(bool), trunc, t_max, E,
                    trusted.astype(bool), tol)
        if table.checksum != hashlib.sha256(body).hexdigest():
            raise TableError("table content does not reproduce its checksum", offset=0)
        return table

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise TableError(f"cannot read alpha table {path}: {exc.strerror}") from exc
        return cls.from_bytes(data)

    def to_csv(self, path):
        """Plain-text export: one row per node."""
        TH, U, T = np.meshgrid(self.theta, self.upsilon, self.t, indexing="ij")
        cols = np.column_stack([TH.ravel(), U.ravel(), T.ravel(), self.values[0].ravel(),
                                self.values[1].ravel(), self.valid.ravel().astype(int)])
        header = (f"# checksum={self.checksum} m_max={self.truncation.m_max} "
                  f"n_max={self.truncation.n_max} tail={int(self.truncation.tail)}\n"
                  "theta,upsilon,t,alpha2,alpha4,valid")
        np.savetxt(path, cols, delimiter=",", header=header, comments="",
                   fmt=["%.17g"] * 5 + ["%d"])

    # -- lookup --------------------------------------------------------------

    def _clamp(self, theta, upsilon, t):
        th = np.clip(theta, self.theta[0], self.theta[-1])
        up = np.clip(upsilon, self.upsilon[0], self.upsilon[-1])
        tt = np.clip(t, self.t[0], self.t[-1])
        moved = (th != theta) | (up != upsilon) | (tt != t)
        diagnostics.bump("table.clamp", int(moved.sum()))
        return th, up, tt

    def _interp_log(self, theta, upsilon, t, cols):
        x0, x1, x2 = _coords(theta, upsilon, t)
        (i0, w0), (i1, w1), (i2, w2) = (
            _lagrange(ax, x, self.order) for ax, x in zip(self._axes, (x0, x1, x2)))
        I0, I1, I2 = i0[:, :, None, None], i1[:, None, :, None], i2[:, None, None, :]
        ok = self.valid[I0, I1, I2].all(axis=(1, 2, 3))
        cell = [np.clip(np.searchsorted(ax, x) - 1, 0, ax.size - 2)
                for ax, x in zip(self._axes, (x0, x1, x2))]
        ok &= self.trusted[cell[0], cell[1], cell[2]]
        out = [np.einsum("nabc,na,nb,nc->n", self._logv[c][I0, I1, I2], w0, w1, w2) for c in cols]
        return out, ok

    def _prepare(self, theta, upsilon, t):
        theta, upsilon, t = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (theta, upsilon, t))
        theta, upsilon, t = np.broadcast_arrays(theta, upsilon, t)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(upsilon)) and np.all(np.isfinite(t))):
            raise DomainError("table lookup needs finite coordinates")
        return self._clamp(theta.ravel(), upsilon.ravel(), t.ravel())

    def lookup(self, theta, upsilon, t, lam):
        """Interpolated ``alpha(theta, upsilon, t; lam)``."""
        col = laws._check_lambda(lam)
        scalar = np.ndim(theta) == 0 and np.ndim(upsilon) == 0 and np.ndim(t) == 0
        th, up, tt = self._prepare(theta, upsilon, t)
        (lv,), ok = self._interp_log(th, up, tt, (col,))
        out = np.exp(lv)
        if not ok.all():
            bad = ~ok
            diagnostics.bump("table.fallback", int(bad.sum()))
            out[bad] = laws._sph_time_pairs(th[bad], up[bad], tt[bad], self.truncation)[:, col]
        return float(out[0]) if scalar else out

    def weight(self, theta, upsilon, t):
        """Interpolated optimal weight ``alpha(.;2) / alpha(.;4)``."""
        scalar = np.ndim(theta) == 0 and np.ndim(upsilon) == 0 and np.ndim(t) == 0
        th, up, tt = self._prepare(theta, upsilon, t)
        (l2, l4), ok = self._interp_log(th, up, tt, (0, 1))
        out = np.exp(l2 - l4)
        if not ok.all():
            bad = np.flatnonzero(~ok)
            diagnostics.bump("table.fallback", bad.size)
            out[bad] = laws.weight_ratio("t-me-x", th[bad], up[bad], tt[bad], self.truncation)
        return float(out[0]) if scalar else out

    @property
    def coverage(self):
        """Fraction of cells answered by interpolation rather than the series."""
        return float(self.trusted.mean())

    def node_value(self, i, j, k, lam):
        return float(self.values[laws._check_lambda(lam), i, j, k])

    def sample_points(self, n, seed, interpolated_only=False):
        """Random off-grid points, uniform in the grid hull (logit scale in t).

        With ``interpolated_only`` the points are restricted to the cells the
        table answers by interpolation, skipping the series fallback.
        """
        rng = np.random.default_rng(seed)
        pts, have = [], 0
        for _ in range(50):
            m = 4 * n if interpolated_only else n
            th = rng.uniform(self.theta[0], self.theta[-1], m)
            up = rng.uniform(self.upsilon[0], self.upsilon[-1], m)
            z = rng.uniform(_logit(self.t[0]), _logit(self.t[-1]), m)
            p = np.column_stack([th, up, 1.0 / (1.0 + np.exp(-z))])
            if interpolated_only:
                _, ok = self._interp_log(p[:, 0], p[:, 1], p[:, 2], (0,))
                p = p[ok]
            pts.append(p)
            have += len(p)
            if have >= n:
                return np.concatenate(pts)[:n]
        raise TableError(f"found only {have} of {n} points in interpolated cells")

    def verify(self, n=100, seed=0, points=None, interpolated_only=False):
        """Compare table lookups with direct series values.

        Returns the maximum relative errors of alpha(.;2), alpha(.;4) and of
        their ratio over ``n`` random points (or the given ``points``), and
        how many of the points were answered by interpolation.
        """
        if points is None:
            points = self.sample_points(n, seed, interpolated_only)
        th, up, tt = (np.ascontiguousarray(points[:, k]) for k in range(3))
        _, ok = self._interp_log(th, up, tt, (0,))
        direct = laws._sph_time_pairs(th, up, tt, self.truncation)
        a2 = self.lookup(th, up, tt, 2)
        a4 = self.lookup(th, up, tt, 4)
        with np.errstate(divide="ignore", invalid="ignore"):
            e2 = _rel_err(a2, direct[:, 0])
            e4 = _rel_err(a4, direct[:, 1])
            es = _rel_err(a2 / a4, direct[:, 0] / direct[:, 1])
        return {"alpha2": float(e2.max()), "alpha4": float(e4.max()),
                "weight": float(es.max()), "points": int(len(th)),
                "interpolated": int(ok.sum())}


def default_table_path(env=None):
    """Table location from ``BRIDGEVAR_TABLE_DIR`` (default: current directory)."""
    env = os.environ if env is None else env
    base = env.get("BRIDGEVAR_TABLE_DIR", ".")
    return os.path.join(base, "alpha_table.bvat")


