"""Command line front end: ``bridgevar simulate|estimate|efficiency|alpha-table``.

Every artifact written here carries the effective configuration (CSV files
as leading ``# key=value`` lines, JSON reports under ``"config"``), so a run
can be repeated exactly. Failures print one line to stderr of the form
``error[<category>]: <message>`` and exit with a category-specific status.
"""

import argparse
import io
import json
import os
import secrets
import sys
import time

import numpy as np

from . import bridge_laws as laws
from . import diagnostics
from . import efficiency_lab as lab
from . import estimators as est
from . import path_engine as pe
from .alpha_table import AlphaTable, GridSpec, default_table_path
from .errors import BridgeVarError, ConfigurationError, DataError, TableError

EXIT = {"config": 2, "data": 3, "missing-field": 3, "domain": 4, "numerical": 5,
        "table": 6, "io": 7}


# ---------------------------------------------------------------------------
# helpers


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def parse_grid(text):
    """``"0:0.1:1.6"`` (start:step:stop, inclusive) or ``"0,0.5,1"``."""
    text = text.strip()
    try:
        if ":" in text:
            a, h, b = (float(x) for x in text.split(":"))
            if h <= 0 or b < a:
                raise ConfigurationError(f"bad gamma grid {text!r}")
            n = int(round((b - a) / h))
            grid = a + h * np.arange(n + 1)
            return [round(float(g), 12) for g in grid if g <= b + 1e-9 * max(1.0, abs(b))]
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad gamma grid {text!r}") from exc
    if not vals:
        raise ConfigurationError("gamma grid is empty")
    return vals


def _resolve_seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _config(args, **extra):
    keys = [k for k in vars(args) if k not in ("func", "output")]
    cfg = {k: getattr(args, k) for k in sorted(keys)}
    cfg.update(extra)
    return {k: (v if isinstance(v, (int, float, str, bool, type(None))) else str(v))
            for k, v in cfg.items()}


def _truncation(args):
    return laws.SeriesTruncation(args.m_max, args.n_max)


def _weights(args):
    table = args.table or default_table_path()
    return est.WeightSource(args.weights, table, _truncation(args))


def _add_truncation(p):
    p.add_argument("--m-max", type=_positive_int, default=50, help="series truncation |m| <= M")
    p.add_argument("--n-max", type=_positive_int, default=50, help="series truncation |n| <= N")


def _add_weights(p):
    p.add_argument("--weights", choices=("table", "series"), default="table",
                   help="t-me-x weights from the alpha table (default) or the series")
    p.add_argument("--table", default=None,
                   help="alpha table file (default $BRIDGEVAR_TABLE_DIR/alpha_table.bvat)")
    p.add_argument("--gk-reading", choices=("close", "drift-free"), default="close",
                   help="close value used in the Garman-Klass cross term")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    if args.steps < 2:
        raise ConfigurationError(f"--steps must be at least 2, got {args.steps}")
    if not 0.0 < args.eta < 1.0:
        raise ConfigurationError(f"--eta must lie in (0, 1), got {args.eta}")
    if args.steps % args.intervals or args.steps // args.intervals < 2:
        raise ConfigurationError(f"--steps {args.steps} must split into --intervals "
                                 f"{args.intervals} runs of at least two steps")
    seed = _resolve_seed(args)
    cfg = _config(args)
    fh, close = _open_out(args.output)
    try:
        for line in (f"{k}={v}" for k, v in cfg.items()):
            fh.write(f"# {line}\n")
        cols = pe.RECORD_COLUMNS + (pe.EXTRA_COLUMNS if args.extra else ())
        fh.write(",".join(cols) + "\n")
        k = 0
        for p in range(args.paths):
            spec = pe.PathSpec(args.gamma, args.steps, pe.derive_seed(seed, p))
            recs = pe.interval_records(pe.simulate_canonical_path(spec), args.intervals, args.eta)
            buf = pe.records_to_csv_text(recs, args.extra).splitlines()[1:]
            for line in buf:
                idx, rest = line.split(",", 1)
                fh.write(f"{k},{rest}\n")
                k += 1
    finally:
        if close:
            fh.close()
    return 0


def _load_records(args):
    path = args.input
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    header = next((ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    cols = [c.strip() for c in header.split(",")]
    if cols == ["time", "price"]:
        if args.intervals is None:
            raise ConfigurationError("tick input needs --intervals")
        ticks = pe.read_ticks_csv(io.StringIO(text))
        recs = pe.ingest_price_series(ticks, args.intervals, args.eta)
        span = ticks[-1][0] - ticks[0][0]
        return recs, span / args.intervals, "ticks"
    if cols[:1] == ["interval"]:
        return pe.read_records_csv(io.StringIO(text)), args.delta, "records"
    raise DataError(f"{path}: unrecognized header {header!r}; expected 'time,price' or record columns")


def cmd_estimate(args):
    ids = est.parse_estimator_list(args.estimators)
    recs, delta, kind = _load_records(args)
    weights = _weights(args)
    cfg = _config(args, input_kind=kind, delta=delta)
    before = diagnostics.snapshot()
    results = []
    for e in ids:
        drift = None
        if e.name == "gk" and args.gk_reading == "drift-free":
            raise ConfigurationError("the drift-free Garman-Klass reading needs a known drift; "
                                     "it is available in the efficiency command only")
        results.append(est.integrated_variance(recs, e, delta, weights, drift, cfg))
    counters = diagnostics.delta(before)
    out = args.output
    fh, close = _open_out(out)
    try:
        if out and out.endswith(".csv"):
            for k, v in cfg.items():
                fh.write(f"# {k}={v}\n")
            fh.write("interval," + ",".join(r.estimator for r in results) + "\n")
            for i in range(len(recs)):
                fh.write(f"{i}," + ",".join(repr(r.per_interval[i]) for r in results) + "\n")
            fh.write("total," + ",".join(repr(r.value) for r in results) + "\n")
        else:
            doc = {"config": cfg, "diagnostics": counters,
                   "estimates": [{k: v for k, v in r.to_dict().items() if k != "config"}
                                 for r in results]}
            fh.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_efficiency(args):
    ids = est.parse_estimator_list(args.estimators)
    gammas = parse_grid(args.gamma_grid) if args.gamma_grid else [args.gamma]
    if args.paths < 100:
        raise ConfigurationError(f"--paths must be at least 100, got {args.paths}")
    if args.steps < 2:
        raise ConfigurationError(f"--steps must be at least 2, got {args.steps}")
    seed = _resolve_seed(args)
    weights = _weights(args)
    cfg = _config(args, gammas=",".join(repr(g) for g in gammas))
    sweep = lab.gamma_sweep(ids, gammas, args.paths, args.steps, seed, weights, args.gk_reading,
                            args.workers)
    out = args.output
    fh, close = _open_out(out)
    try:
        if out and out.endswith(".json"):
            doc = {"config": cfg,
                   "reports": [dict(zip(lab.CSV_HEADER, r.row()), kappa=r.kappa,
                                    warnings=r.warnings) for r in sweep.reports],
                   "fits": {k: vars(f) for k, f in sweep.fits.items()}}
            fh.write(json.dumps(doc, indent=2) + "\n")
        else:
            fh.write(sweep.to_csv(cfg))
    finally:
        if close:
            fh.close()
    return 0


def cmd_table_build(args):
    path = args.output or default_table_path()
    grid = GridSpec(args.n_theta, args.n_upsilon, args.n_t)
    d = os.path.dirname(os.path.abspath(path))
    if not os.access(d, os.W_OK):
        raise OSError(f"cannot write {path}: directory not writable")
    t0 = time.time()

    def progress(i, n):
        if not args.quiet:
            print(f"\rbuilding {i}/{n}", end="", file=sys.stderr, flush=True)

    table = AlphaTable.build(grid, _truncation(args), not args.no_efficiency, progress)
    if not args.quiet:
        print("", file=sys.stderr)
    size = table.save(path)
    if args.csv:
        table.to_csv(args.csv)
    print(f"wrote {path} ({size} bytes) in {time.time() - t0:.0f}s "
          f"checksum={table.checksum} coverage={table.coverage:.3f}")
    return 0


def cmd_table_verify(args):
    path = args.table or default_table_path()
    table = AlphaTable.load(path)
    rng = np.random.default_rng(args.seed)
    idx = np.flatnonzero(table.valid.ravel())
    pick = rng.choice(idx, size=min(args.nodes, idx.size), replace=False)
    i, j, k = np.unravel_index(pick, table.valid.shape)
    direct = laws._sph_time_pairs(table.theta[i], table.upsilon[j], table.t[k], table.truncation)
    stored = np.stack([table.values[0][i, j, k], table.values[1][i, j, k]], axis=1)
    node_err = float(np.max(np.abs(stored / direct[:, :2] - 1.0)))
    interp = table.verify(args.points, args.seed)
    worst = max(interp["alpha2"], interp["alpha4"], interp["weight"])
    print(f"table {path} checksum={table.checksum}")
    print(f"nodes rechecked={pick.size} max_rel_error={node_err:.3e}")
    print(f"off-grid points={interp['points']} interpolated={interp['interpolated']} "
          f"max_rel_error={worst:.3e}")
    if node_err > 1e-10:
        raise TableError(f"stored node values disagree with the series (max rel. error {node_err:.3e})")
    if worst > args.tolerance:
        raise TableError(f"interpolation error {worst:.3e} exceeds {args.tolerance:g}")
    print("ok")
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    # usage errors become one-line configuration errors like every other failure
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="bridgevar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate canonical paths and write interval records")
    s.add_argument("--paths", type=_positive_int, default=1)
    s.add_argument("--steps", type=int, default=100_000)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--seed", type=_seed, default=None)
    s.add_argument("--intervals", type=_positive_int, default=1, help="intervals per path")
    s.add_argument("--eta", type=float, default=0.5, help="bridge sampling time for 'simple'")
    s.add_argument("--extra", action="store_true", help="append raw extremes and bridge(eta)")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="integrated variance from ticks or records")
    e.add_argument("input", help="tick CSV (time,price) or record CSV")
    e.add_argument("--estimators", default="real")
    e.add_argument("--intervals", type=_positive_int, default=None, help="intervals for tick input")
    e.add_argument("--delta", type=float, default=None, help="interval duration for record input")
    e.add_argument("--eta", type=float, default=0.5)
    _add_weights(e)
    _add_truncation(e)
    e.add_argument("-o", "--output", default="-", help=".json (default) or .csv")
    e.set_defaults(func=cmd_estimate)

    f = sub.add_parser("efficiency", help="Monte Carlo moments and drift sweeps")
    f.add_argument("--estimators", default="real,gk,t-me-x")
    f.add_argument("--gamma", type=float, default=0.0)
    f.add_argument("--gamma-grid", default=None, help="start:step:stop or a comma list")
    f.add_argument("--paths", type=int, default=10_000)
    f.add_argument("--steps", type=int, default=100_000)
    f.add_argument("--seed", type=_seed, default=None)
    f.add_argument("--workers", type=_positive_int, default=1)
    _add_weights(f)
    _add_truncation(f)
    f.add_argument("-o", "--output", default="-", help=".csv (default) or .json")
    f.set_defaults(func=cmd_efficiency)

    t = sub.add_parser("alpha-table", help="build or verify the alpha interpolation table")
    tsub = t.add_subparsers(dest="action", required=True)
    b = tsub.add_parser("build")
    b.add_argument("-o", "--output", default=None)
    b.add_argument("--n-theta", type=_positive_int, default=GridSpec.n_theta)
    b.add_argument("--n-upsilon", type=_positive_int, default=GridSpec.n_upsilon)
    b.add_argument("--n-t", type=_positive_int, default=GridSpec.n_t)
    b.add_argument("--no-efficiency", action="store_true", help="skip storing E of t-me-x")
    b.add_argument("--csv", default=None, help="also export the nodes as CSV")
    b.add_argument("--quiet", action="store_true")
    _add_truncation(b)
    b.set_defaults(func=cmd_table_build)
    v = tsub.add_parser("verify")
    v.add_argument("--table", default=None)
    v.add_argument("--nodes", type=_positive_int, default=100)
    v.add_argument("--points", type=_positive_int, default=100)
    v.add_argument("--tolerance", type=float, default=1e-3)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_table_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except BridgeVarError as exc:
        cat = getattr(exc, "category", "error")
        msg = str(exc)
        off = getattr(exc, "offset", None)
        if off is not None and "offset" not in msg:
            msg += f" (offset {off})"
        print(f"error[{cat}]: {msg}", file=sys.stderr)
        return EXIT.get(cat, 1)
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT["io"]


if __name__ == "__main__":
    sys.exit(main())
