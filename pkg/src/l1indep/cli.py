"""Command line entry point: ``l1indep {test,nulltable,ldcurve,slope,simulate,rerun}``.

Reports are JSON documents that embed the resolved configuration; ``rerun``
replays that configuration and reproduces the report byte for byte.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .calibration import NullTable, mc_null_table, permutation_test
from .errors import InvalidInput
from .ldlab import (DEFAULT_CELLS, DEFAULT_LAMBDAS, DEFAULT_N, DEFAULT_NS, SCHEMA_VERSION,
                    efficiency_ratio, empirical_slope, rate_curve)
from .partition import CubicPartition, PairedSample
from .statistics import STATISTICS, resolve_ids
from .synthgen import AlternativeSpec, GeneratorSpec, sample

log = logging.getLogger("l1indep")

TABLE_SUFFIX = ".l1nt"


# ---------------------------------------------------------------------------
# file formats


def read_sample_csv(path, dx=1, dy=None):
    """Read the CSV sample format: header row, then one numeric row per pair.

    The first ``dx`` columns are X, the next ``dy`` (default: the rest) are Y.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if len(rows) < 2:
        raise InvalidInput("no data rows")
    header = [h.strip() for h in rows[0]]
    ncol = len(header)
    if dx < 1:
        raise InvalidInput("--dx must be at least 1")
    if dy is None:
        dy = ncol - dx
    if dy < 1 or dx + dy != ncol:
        raise InvalidInput(f"header has {ncol} columns but d + d' = {dx} + {dy}")
    data = np.empty((len(rows) - 1, ncol))
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != ncol:
            raise InvalidInput(f"line {line}: expected {ncol} fields, found {len(row)}")
        try:
            data[i] = [float(c) for c in row]
        except ValueError:
            raise InvalidInput(f"line {line}: non-numeric field in {row!r}") from None
        if not np.all(np.isfinite(data[i])):
            raise InvalidInput(f"line {line}: non-finite value")
    return PairedSample(data[:, :dx], data[:, dx:])


def write_sample_csv(smp, fh):
    header = [f"x{i + 1}" for i in range(smp.d)] + [f"y{i + 1}" for i in range(smp.d_prime)]
    fh.write(",".join(header) + "\n")
    for row in np.hstack([smp.x, smp.y]):
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def dump_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text, output):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidInput(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidInput(f"expected a comma-separated list of integers, got {text!r}") from None


def table_path(directory, stat_id, n):
    return os.path.join(directory, f"{stat_id}_n{n}{TABLE_SUFFIX}")


# ---------------------------------------------------------------------------
# configs: each command resolves its arguments into a plain dict first


def _partition_config(args):
    return {
        "width_x": args.width_x,
        "width_y": args.width_y,
        "origin_x": _floats(args.origin_x) if args.origin_x else None,
        "origin_y": _floats(args.origin_y) if args.origin_y else None,
        "fixed_grid": args.fixed_grid,
    }


def _resolve_partition(pcfg, d, d_prime, smp=None):
    if pcfg.get("fixed_grid"):
        return CubicPartition.unit_grid(pcfg["fixed_grid"], d, d_prime), []
    if smp is not None:
        return CubicPartition.from_sample(smp, pcfg.get("width_x"), pcfg.get("width_y"),
                                          pcfg.get("origin_x"), pcfg.get("origin_y"))
    if pcfg.get("width_x") and pcfg.get("width_y"):
        return CubicPartition(d, d_prime, pcfg["width_x"], pcfg["width_y"],
                              pcfg.get("origin_x"), pcfg.get("origin_y")), []
    return None, []


def config_test(args):
    return {
        "command": "test",
        "input": os.path.abspath(args.input),
        "input_sha256": _sha256(args.input) if os.path.exists(args.input) else None,
        "dx": args.dx,
        "dy": args.dy,
        "stat": args.stat,
        "B": args.B,
        "seed": args.seed,
        "partition": _partition_config(args),
    }


def run_test(cfg, threads=1):
    if not os.path.exists(cfg["input"]):
        raise InvalidInput(f"input file {cfg['input']} does not exist")
    smp = read_sample_csv(cfg["input"], cfg["dx"], cfg["dy"])
    ids = resolve_ids(cfg["stat"], smp)
    if not ids:
        raise InvalidInput("no statistic applies to this sample")
    part, warnings = _resolve_partition(cfg["partition"], smp.d, smp.d_prime, smp)
    reports = permutation_test(smp, ids, cfg["B"], cfg["seed"], part, threads)
    for r in reports:
        if r.partition is not None:
            r.warnings = list(warnings)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "test",
        "version": __version__,
        "config": cfg,
        "n": smp.n,
        "d": smp.d,
        "d_prime": smp.d_prime,
        "reports": [r.to_dict() for r in reports],
    }


def config_nulltable(args):
    return {
        "command": "nulltable",
        "stat": args.stat,
        "n": _ints(args.n),
        "N": args.N,
        "seed": args.seed,
        "generator": args.generator,
        "dx": args.dx,
        "dy": args.dy or 1,
        "cells": args.cells,
        "output_dir": os.path.abspath(args.output_dir),
    }


def run_nulltable(cfg, threads=1):
    alt = AlternativeSpec.parse(cfg["generator"], cfg["dx"], cfg["dy"])
    gen = GeneratorSpec(alt)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    written = []
    for stat_id in resolve_ids(cfg["stat"]):
        part = None
        if STATISTICS[stat_id].histogram:
            part = CubicPartition.unit_grid(cfg["cells"], alt.d, alt.d_prime)
        for n in cfg["n"]:
            table = mc_null_table(stat_id, n, cfg["N"], gen, cfg["seed"], part, threads)
            path = table_path(cfg["output_dir"], stat_id, n)
            table.write(path)
            written.append({"path": path, **table.header()})
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "nulltable",
        "version": __version__,
        "config": cfg,
        "tables": written,
    }


def config_ldcurve(args):
    return {
        "command": "ldcurve",
        "stat": args.stat,
        "lambdas": _floats(args.lambdas),
        "ns": _ints(args.ns),
        "N": args.N,
        "seed": args.seed,
        "cells": args.cells,
        "min_points": args.min_points,
    }


def run_ldcurve(cfg, threads=1):
    part = CubicPartition.unit_grid(cfg["cells"]) if STATISTICS[cfg["stat"]].histogram else None
    curve = rate_curve(cfg["stat"], cfg["lambdas"], cfg["ns"], cfg["N"], cfg["seed"],
                       partition=part, threads=threads, min_points=cfg["min_points"])
    if not any(curve.usable):
        raise InvalidInput(
            "every lambda in the grid has fewer than "
            f"{cfg['min_points']} uncensored tail estimates (N={cfg['N']}); "
            "lower the thresholds, use smaller n, or raise N"
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "ldcurve",
        "version": __version__,
        "config": cfg,
        "curve": curve.to_dict(),
        "warnings": [f"lambda={lam:g} unusable: fewer than {cfg['min_points']} uncensored points"
                     for lam, ok in zip(curve.lambda_grid, curve.usable) if not ok],
    }
    return doc, curve


def config_slope(args):
    stats = [s.strip() for s in (args.pair or args.stat).split(",") if s.strip()]
    if args.pair and len(stats) != 2:
        raise InvalidInput("--pair takes exactly two statistic ids, e.g. vn,tau")
    ns = [_ints(args.ns)]
    if len(stats) == 2:
        ns.append(_ints(args.ns_b) if args.ns_b else ns[0])
    return {
        "command": "slope",
        "alternative": args.alternative,
        "stats": stats,
        "ns": ns,
        "reps": args.reps,
        "seed": args.seed,
        "tables": os.path.abspath(args.tables),
    }


def _load_tables(directory, stat_id, ns):
    tables = {}
    for n in ns:
        path = table_path(directory, stat_id, n)
        if not os.path.exists(path):
            raise InvalidInput(
                f"missing null table {path}; create it with: "
                f"l1indep nulltable --stat {stat_id} --n {','.join(str(v) for v in ns)} "
                f"--N {DEFAULT_N} --output-dir {directory}"
            )
        tables[n] = NullTable.read(path)
    return tables


def run_slope(cfg, threads=1):
    alt = AlternativeSpec.parse(cfg["alternative"])
    reports = []
    for stat_id, ns in zip(cfg["stats"], cfg["ns"]):
        if stat_id not in STATISTICS:
            raise InvalidInput(f"unknown statistic {stat_id!r}")
        tables = _load_tables(cfg["tables"], stat_id, ns)
        reports.append(empirical_slope(stat_id, alt, ns, cfg["reps"], tables, cfg["seed"], threads=threads))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "slope",
        "version": __version__,
        "config": cfg,
        "reports": [r.to_dict() for r in reports],
    }
    if len(reports) == 2:
        ratio, se = efficiency_ratio(reports[0], reports[1])
        doc["efficiency_ratio"] = {"numerator": reports[0].statistic_id,
                                   "denominator": reports[1].statistic_id,
                                   "value": ratio, "se": se}
    return doc


RUNNERS = {
    "test": run_test,
    "nulltable": run_nulltable,
    "ldcurve": lambda cfg, threads=1: run_ldcurve(cfg, threads)[0],
    "slope": run_slope,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="l1indep", description="Histogram L1 independence testing and Bahadur-efficiency lab.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")

    p = sub.add_parser("test", help="permutation test on a CSV sample")
    p.add_argument("input")
    p.add_argument("--dx", type=int, default=1, help="number of X columns (first columns)")
    p.add_argument("--dy", type=int, default=None, help="number of Y columns (default: the rest)")
    p.add_argument("--stat", default="vn", help=f"comma list of {', '.join(STATISTICS)}, or all")
    p.add_argument("-B", "--B", type=int, default=999, dest="B")
    p.add_argument("--width-x", type=float)
    p.add_argument("--width-y", type=float)
    p.add_argument("--origin-x")
    p.add_argument("--origin-y")
    p.add_argument("--fixed-grid", type=int, metavar="K", help="use the K-cells-per-unit grid on [0,1]")
    p.add_argument("-o", "--output")
    common(p)

    p = sub.add_parser("nulltable", help="Monte Carlo null tables in the portable binary format")
    p.add_argument("--stat", default="vn")
    p.add_argument("--n", required=True, help="sample size(s), comma separated")
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--generator", default="independent_uniform")
    p.add_argument("--dx", type=int, default=1)
    p.add_argument("--dy", type=int, default=1)
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--csv", action="store_true", help="also write each table as CSV next to it")
    p.add_argument("-o", "--output", help="summary JSON path (default stdout)")
    common(p)

    p = sub.add_parser("inspect", help="print the header of a null table file")
    p.add_argument("table")

    p = sub.add_parser("ldcurve", help="tail-probability decay rates under independence")
    p.add_argument("--stat", default="vn")
    p.add_argument("--lambdas", default=",".join(str(v) for v in DEFAULT_LAMBDAS))
    p.add_argument("--ns", default=",".join(str(v) for v in DEFAULT_NS))
    p.add_argument("--N", type=int, default=DEFAULT_N)
    p.add_argument("--cells", type=int, default=DEFAULT_CELLS)
    p.add_argument("--min-points", type=int, default=3)
    p.add_argument("-o", "--output")
    p.add_argument("--csv", help="plot-ready CSV path")
    common(p)

    p = sub.add_parser("slope", help="empirical and theoretical Bahadur slopes")
    p.add_argument("--alternative", default="fgm(0.5)")
    p.add_argument("--stat", default="vn")
    p.add_argument("--pair", help="two statistics, e.g. vn,tau; adds their efficiency ratio")
    p.add_argument("--ns", default="100,200,400,800")
    p.add_argument("--ns-b", help="n grid for the second statistic of --pair")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--tables", default=".", help="directory holding <stat>_n<n>.l1nt files")
    p.add_argument("-o", "--output")
    common(p)

    p = sub.add_parser("simulate", help="export a sample from a built-in family as CSV")
    p.add_argument("--alternative", default="independent_uniform")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dx", type=int, default=1)
    p.add_argument("--dy", type=int, default=1)
    p.add_argument("--marginal", default="uniform", choices=["uniform", "normal"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")

    p = sub.add_parser("rerun", help="replay the configuration embedded in a report")
    p.add_argument("report")
    p.add_argument("-o", "--output")
    p.add_argument("--threads", type=int, default=1)
    return parser


def _dispatch(args):
    cmd = args.command
    if cmd == "simulate":
        alt = AlternativeSpec.parse(args.alternative, args.dx, args.dy)
        smp = sample(GeneratorSpec(alt, args.marginal), args.n, args.seed)
        if args.output:
            with open(args.output, "w") as fh:
                write_sample_csv(smp, fh)
        else:
            write_sample_csv(smp, sys.stdout)
        return
    if cmd == "inspect":
        _emit(dump_json(NullTable.read(args.table).header()), None)
        return
    if cmd == "rerun":
        with open(args.report) as fh:
            try:
                cfg = json.load(fh)["config"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise InvalidInput(f"{args.report} is not a report with an embedded config") from None
        if cfg.get("command") not in RUNNERS:
            raise InvalidInput(f"cannot rerun command {cfg.get('command')!r}")
        _emit(dump_json(RUNNERS[cfg["command"]](cfg, args.threads)), args.output)
        return
    if cmd == "test":
        doc = run_test(config_test(args), args.threads)
    elif cmd == "nulltable":
        cfg = config_nulltable(args)
        doc = run_nulltable(cfg, args.threads)
        if args.csv:
            for entry in doc["tables"]:
                NullTable.read(entry["path"]).to_csv(entry["path"][: -len(TABLE_SUFFIX)] + ".csv")
    elif cmd == "ldcurve":
        doc, curve = run_ldcurve(config_ldcurve(args), args.threads)
        if args.csv:
            with open(args.csv, "w") as fh:
                curve.to_csv(fh)
    else:
        doc = run_slope(config_slope(args), args.threads)
    _emit(dump_json(doc), args.output)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be at least 1")
    try:
        _dispatch(args)
    except InvalidInput as exc:
        print(f"l1indep: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"l1indep: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
