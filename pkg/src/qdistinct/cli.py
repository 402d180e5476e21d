"""Command-line entry point: ``qdistinct <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 capacity solver did not converge.
Machine formats (csv, json) carry nats only; the human table adds bits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from qdistinct import __version__
from qdistinct.asymptotics import i_sup_ndim, i_sup_qubit, is_valid_regime, omega_max, w_qubit
from qdistinct.capacity import SolverConfig, blahut_arimoto, interval_probes, kkt_verify, predicted_information
from qdistinct.geometry import (HALF_PI, AngleInterval, SphericalDomain, uniform_angle_grid,
                                uniform_domain_grid)
from qdistinct.information import (MeasurementChannel, OutcomeSpaceError, asymptotic_marginal_row, central_band,
                                   output_marginal)
from qdistinct.prob_kernel import binomial_log_rows, normalized_gaussian_binomial, total_variation
from qdistinct.simulator import (SimulationConfig, build_codebook, error_vs_load_sweep, predicted_states,
                                 run_experiment)
from qdistinct._streams import derive_seed

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "QDISTINCT_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 2, 3
LN2 = math.log(2.0)


class UsageError(Exception):
    pass


def _interval_arg(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return lo, hi


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdistinct",
        description="Information and distinguishability of n identical copies of a quantum state.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: all cores); never changes numeric output")
    parser.add_argument("--manifest", type=Path, default=None,
                        help="re-run the command recorded in a manifest or JSON output file")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("table", "csv", "json"), default="table")
    common.add_argument("--output", type=Path, default=None, help="write to a file instead of stdout")
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS)

    angles = argparse.ArgumentParser(add_help=False)
    angles.add_argument("--degrees", action="store_true", help="read --interval in degrees")

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("asymptotics", parents=[common, angles],
                       help="closed-form information and distinguishable-state counts")
    p.add_argument("--n", type=_positive_int, action="append", help="copies measured (repeatable)")
    p.add_argument("--dim", type=int, default=2, help="Hilbert-space dimension N")
    geo = p.add_mutually_exclusive_group(required=True)
    geo.add_argument("--interval", type=_interval_arg, help="angle interval lo,hi (qubit only)")
    geo.add_argument("--omega", type=_positive_float, help="domain area on the unit sphere")
    geo.add_argument("--orthant", action="store_true", help="the whole non-negative orthant")

    p = sub.add_parser("capacity", parents=[common, angles],
                       help="Blahut-Arimoto capacity of the discretized channel")
    p.add_argument("--n", type=_positive_int, action="append")
    p.add_argument("--dim", type=int, default=2)
    geo = p.add_mutually_exclusive_group()
    geo.add_argument("--interval", type=_interval_arg)
    geo.add_argument("--orthant", action="store_true")
    p.add_argument("--grid", type=_positive_int, default=256,
                   help="grid points (qubit) or cells per angular axis (N > 2)")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=100_000)
    p.add_argument("--kkt", action="store_true", help="also check the optimality conditions")
    p.add_argument("--kkt-tol", type=_positive_float, default=0.05)

    p = sub.add_parser("simulate", parents=[common, angles],
                       help="Monte Carlo ML identification error for equally spaced codebooks")
    p.add_argument("--n", type=_positive_int, action="append")
    p.add_argument("--interval", type=_interval_arg)
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--codebook", type=int, help="codebook size M")
    size.add_argument("--load", type=float, action="append", help="M = floor(load * W(n)) (repeatable)")
    p.add_argument("--trials", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=_nonneg_int, default=0)

    p = sub.add_parser("approx-check", parents=[common, angles],
                       help="quality of the Gaussian and large-n marginal approximations")
    p.add_argument("--n", type=_positive_int, action="append")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--p", type=float, action="append", help="success probability (repeatable)")
    src.add_argument("--interval", type=_interval_arg)
    p.add_argument("--grid", type=_positive_int, default=256, help="uniform-angle ensemble size")
    return parser


def _interval(args, default_full: bool = False) -> AngleInterval | None:
    if getattr(args, "interval", None) is None:
        return AngleInterval.full() if default_full else None
    lo, hi = args.interval
    if getattr(args, "degrees", False):
        lo, hi = math.radians(lo), math.radians(hi)
    try:
        return AngleInterval(lo, hi)
    except ValueError as exc:
        raise UsageError(str(exc))


def _require_n(args) -> list[int]:
    if not args.n:
        raise UsageError("at least one --n is required")
    return list(args.n)


# Each command returns (columns, rows, extra, exit_code).

def cmd_asymptotics(args, threads):
    ns = _require_n(args)
    N = args.dim
    if N < 2:
        raise UsageError("--dim must be at least 2")
    interval = _interval(args)
    if interval is not None:
        if N != 2:
            raise UsageError("--interval describes qubit states; use --omega or --orthant with --dim > 2")
        omega, geometry = interval.length, interval.describe()
    elif args.orthant:
        omega, geometry = (HALF_PI if N == 2 else omega_max(N)), f"orthant[N={N}]"
    else:
        omega, geometry = args.omega, f"omega={args.omega:.10g}"
        if omega > omega_max(N) * (1 + 1e-12):
            raise UsageError(f"--omega exceeds the orthant area {omega_max(N):.10g} for N={N}")
    rows = []
    for n in ns:
        if N == 2:
            i_sup, w = i_sup_qubit(n, omega), w_qubit(n, omega)
        else:
            i_sup = i_sup_ndim(N, n, omega)
            w = math.exp(i_sup)  # w_ndim without its warning; validity is its own column
        rows.append({"n": n, "N": N, "geometry": geometry, "omega": omega,
                     "i_sup_nats": i_sup, "W": w, "valid_regime": is_valid_regime(N, n)})
    columns = ["n", "N", "geometry", "omega", "i_sup_nats", "W", "valid_regime"]
    return columns, rows, {}, EXIT_OK


def cmd_capacity(args, threads):
    ns = _require_n(args)
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    config = SolverConfig(tolerance=args.tol, max_iterations=args.max_iter)
    interval = _interval(args)
    if args.dim != 2 and interval is not None:
        raise UsageError("--interval is only valid with --dim 2")
    if args.dim < 2:
        raise UsageError("--dim must be at least 2")
    if args.dim == 2:
        geometry = interval or AngleInterval.full()
        grid = uniform_angle_grid(geometry, args.grid)
    else:
        geometry = SphericalDomain.orthant(args.dim)
        grid = uniform_domain_grid(geometry, args.grid)
    rows, status = [], EXIT_OK
    for n in ns:
        channel = MeasurementChannel(grid.N, n)
        try:
            res = blahut_arimoto(grid, channel, config, threads=threads)
        except OutcomeSpaceError as exc:
            raise UsageError(str(exc))
        pred = predicted_information(geometry, n)
        row = {"n": n, "N": grid.N, "geometry": geometry.describe(), "grid": len(grid),
               "capacity_nats": res.capacity, "exp_capacity": math.exp(res.capacity),
               "prediction_nats": pred, "prediction_gap": abs(res.capacity - pred),
               "duality_gap": res.kkt_gap, "iterations": res.iterations,
               "converged": res.converged}
        if args.kkt:
            probe = interval_probes(geometry, args.grid) if grid.N == 2 else grid.probs
            rep = kkt_verify(res.optimal_weights, grid, channel, probe, args.kkt_tol,
                             support_threshold=config.support_threshold, threads=threads)
            row.update(support_flatness=rep.support_flatness, kkt_verdict=rep.verdict)
        if not res.converged:
            status = EXIT_NONCONVERGED
        rows.append(row)
    columns = list(rows[0].keys())
    return columns, rows, {}, status


def cmd_simulate(args, threads):
    ns = _require_n(args)
    interval = _interval(args, default_full=True)
    extra = {}
    if args.load is not None and (len(args.load) > 1 or len(ns) > 1):
        rows = error_vs_load_sweep(interval, ns, args.load, args.trials, args.seed, threads=threads)
        if not rows:
            raise UsageError("every codebook size floors to 0")
    elif args.codebook is not None and len(ns) > 1:
        if args.codebook < 1:
            raise UsageError("--codebook must be at least 1")
        codebook = build_codebook(interval, args.codebook)
        rows = []
        for i, n in enumerate(ns):
            rep = run_experiment(SimulationConfig(codebook, n, args.trials, derive_seed(args.seed, i)),
                                 threads=threads)
            rows.append(rep.summary())
    else:
        n = ns[0]
        if args.codebook is not None:
            M = args.codebook
        else:
            M = math.floor(args.load[0] * predicted_states(interval, n))
        if M < 1:
            raise UsageError(f"codebook size M={M} < 1")
        rep = run_experiment(SimulationConfig(build_codebook(interval, M), n, args.trials, args.seed),
                             threads=threads)
        rows = [rep.summary()]
        extra["report"] = rep.to_dict()
    for row in rows:
        row["geometry"] = interval.describe()
    columns = ["geometry", "n", "M", "trials", "seed", "errors", "error_rate", "ci_lo", "ci_hi",
               "w_predicted", "load_factor"]
    if rows and "load" in rows[0]:
        columns.insert(3, "load")
    return columns, rows, extra, EXIT_OK


def cmd_approx_check(args, threads):
    ns = _require_n(args)
    extra = {}
    if args.p is not None:
        for p in args.p:
            if not 0.0 < p < 1.0:
                raise UsageError(f"--p {p}: the Gaussian approximation needs 0 < p < 1")
        rows = []
        for n in ns:
            for p in args.p:
                exact = np.exp(binomial_log_rows(n, p))
                tv = total_variation(exact, normalized_gaussian_binomial(n, p))
                rows.append({"n": n, "p": p, "total_variation": tv})
        return ["n", "p", "total_variation"], rows, extra, EXIT_OK

    interval = _interval(args)
    grid = uniform_angle_grid(interval, args.grid)
    rows, summary = [], []
    for n in ns:
        try:
            exact = output_marginal(grid, MeasurementChannel(2, n), threads=threads).probs
        except OutcomeSpaceError as exc:
            raise UsageError(str(exc))
        approx = asymptotic_marginal_row(n, interval)
        ks = central_band(n, interval)
        rel = np.abs(exact[ks] / approx[ks] - 1.0)
        for k, e, a, r in zip(ks, exact[ks], approx[ks], rel):
            rows.append({"n": n, "k": int(k), "exact": float(e), "asymptotic": float(a),
                         "relative_error": float(r)})
        summary.append({"n": n, "grid": args.grid, "band_points": int(ks.size),
                        "max_relative_error": float(rel.max()) if ks.size else None})
    extra["summary"] = summary
    return ["n", "k", "exact", "asymptotic", "relative_error"], rows, extra, EXIT_OK


COMMANDS = {
    "asymptotics": cmd_asymptotics,
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
    "approx-check": cmd_approx_check,
}


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _table_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return _cell(value)


def render_table(columns, rows, extra) -> str:
    cols = []
    for c in columns:
        cols.append(c)
        if c.endswith("_nats"):
            cols.append(c[:-5] + "_bits")
    cells = []
    for row in rows:
        line = []
        for c in cols:
            if c.endswith("_bits"):
                v = row.get(c[:-5] + "_nats")
                line.append(_table_value(None if v is None else v / LN2))
            else:
                line.append(_table_value(row.get(c)))
        cells.append(line)
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(cols)]
    out = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    out += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    for s in extra.get("summary", []):
        out.append("summary: " + ", ".join(f"{k}={_table_value(v)}" for k, v in s.items()))
    return "\n".join(out) + "\n"


def _replay_argv(argv: list[str]) -> list[str]:
    """argv with output-location options removed (they do not affect results)."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--output", "--manifest"):
            skip = True
            continue
        if tok.startswith(("--output=", "--manifest=")):
            continue
        out.append(tok)
    return out


def _resolve_output(path: Path | None) -> Path | None:
    if path is None:
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        return Path(base) / path
    return path


def _load_manifest(path: Path) -> dict:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return doc.get("manifest", doc)


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest is not None:
        try:
            manifest = _load_manifest(args.manifest)
            replay = list(manifest["argv"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            parser.error(f"cannot read manifest {args.manifest}: {exc}")
        if "--manifest" in replay:
            parser.error("a manifest cannot replay another manifest")
        return run(replay)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    threads = args.threads or os.cpu_count() or 1
    started = datetime.now(timezone.utc).isoformat()
    try:
        columns, rows, extra, status = COMMANDS[args.command](args, threads)
    except UsageError as exc:
        print(f"qdistinct {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("manifest", "output", "threads")}
    manifest = {
        "tool": "qdistinct",
        "version": __version__,
        "subcommand": args.command,
        "argv": _replay_argv(argv),
        "parameters": _jsonable(params),
        "seed": getattr(args, "seed", None),
        "threads": threads,
        "format": args.format,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    if args.format == "json":
        doc = {"schema": SCHEMA_VERSION, "manifest": manifest, "units": "nats",
               "columns": columns, "rows": _jsonable(rows)}
        doc.update(_jsonable(extra))
        text = json.dumps(doc, indent=2) + "\n"
    elif args.format == "csv":
        text = render_csv(columns, rows)
    else:
        text = render_table(columns, rows, extra)
    out = _resolve_output(args.output)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        if args.format != "json":
            sidecar = out.with_name(out.name + ".manifest.json")
            sidecar.write_text(json.dumps({"schema": SCHEMA_VERSION, "manifest": manifest}, indent=2) + "\n",
                               encoding="utf-8")
    return status


def main(argv: list[str] | None = None) -> int:
    return run(list(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    sys.exit(main())
