"""Command-line front end.

Each subcommand writes a CSV (units in the header) to ``--out`` or stdout.
Unless ``--no-metadata`` is given, ``#`` comment lines with the run time and
scenario digest precede the header; the data rows never depend on the time
or on ``--threads``.

Exit codes: 0 success, 1 usage, 2 configuration or validation, 3 runtime.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, Scenario, apply_overrides, emit_scenario, parse_float_list,
                     parse_study)
from .finitekey import threshold_sweep
from .mission import (AnnualConfig, SweepSpec, annual_skl, key_cutoff_distance, loss_profile,
                      max_viewable_distance, run_sweep, simulate_pass)

log = logging.getLogger("satqkd")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SKL_COLUMNS = [
    ("ell", "ell_bits"), ("m", "m_bits"), ("delta", "delta"), ("beta", "beta"),
    ("nu", "nu"), ("xi", "xi"), ("k", "k_bits"), ("n", "n_bits"),
    ("eps_pe", "eps_pe"), ("eps_pa", "eps_pa"),
]
AXIS_COLUMNS = {
    "altitude_m": "altitude_m", "ogs_separation_m": "ogs_separation_m", "phi_deg": "phi_deg",
    "xi_deg": "xi_deg", "delta_m": "delta_m", "background_scale": "background_scale",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(header: list[str], rows, metadata: list[str] | None) -> str:
    buf = io.StringIO()
    for line in metadata or []:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _skl_values(r) -> list:
    if r is None:
        return [""] * len(SKL_COLUMNS)
    d = r.row()
    return [d[k] for k, _ in SKL_COLUMNS]


# --- subcommands -------------------------------------------------------------


def cmd_loss_profile(args, sc: Scenario, study: dict):
    prof, loss = loss_profile(sc)
    keep = np.ones(len(prof), bool) if args.all_bins else prof.visible
    header = ["time_s", "range_a_m", "range_b_m", "elevation_a_deg", "elevation_b_deg",
              "visible", "loss_a_db", "loss_b_db", "loss_total_db"]
    db_a, db_b, db = loss.db_a, loss.db_b, loss.db
    rows = [
        (prof.times[i], prof.range_a[i], prof.range_b[i], prof.elev_a[i], prof.elev_b[i],
         bool(prof.visible[i]), db_a[i], db_b[i], db[i])
        for i in np.flatnonzero(keep)
    ]
    vis = db[prof.visible]
    summary = {"visible_s": prof.visible_duration,
               "min_loss_db": float(vis.min()) if vis.size else None}
    return header, rows, summary


def cmd_pass(args, sc: Scenario, study: dict):
    out = simulate_pass(sc, args.threads)
    header = ["visible_s"] + [c for _, c in SKL_COLUMNS]
    rows = [[out.profile.visible_duration] + _skl_values(out.skl)]
    return header, rows, {"ell_bits": out.skl.ell, "visible_s": out.profile.visible_duration}


def cmd_block_sweep(args, sc: Scenario, study: dict):
    scales = args.background_scale or (sc.detector.background_scale,)
    header = ["background_scale", "threshold", "block_qber"] + [c for _, c in SKL_COLUMNS]
    rows, best = [], {}
    for f in scales:
        out = simulate_pass(sc.with_values(background_scale=f), args.threads)
        best[fmt(f)] = out.skl.ell
        if out.curve is None:
            continue
        for thr, blk, res in zip(out.curve.thresholds, out.curve.blocks, out.curve.results):
            vals = _skl_values(res)
            vals[1] = blk.m
            rows.append([f, thr, blk.qber] + vals)
    return header, rows, {"best_ell_bits": best}


def _sweep_spec(args, sc: Scenario, study: dict) -> SweepSpec:
    axes = dict(study.get("sweep", {}))
    for name in AXIS_COLUMNS:
        cli_val = getattr(args, name, None)
        if cli_val:
            axes[name] = cli_val
    try:
        return SweepSpec(sc, **axes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_sweep(args, sc: Scenario, study: dict):
    spec = _sweep_spec(args, sc, study)
    rows_out = run_sweep(spec, args.threads)
    axes = spec.axes
    header = ["cell"] + [AXIS_COLUMNS[a] for a in axes] + [c for _, c in SKL_COLUMNS] + ["error"]
    rows = [[r.index] + [r.cell[a] for a in axes] + _skl_values(r.result) + [r.error]
            for r in rows_out]
    failed = sum(1 for r in rows_out if r.error)
    return header, rows, {"cells": len(rows_out), "failed": failed}


def cmd_cutoff(args, sc: Scenario, study: dict):
    alts = args.altitude_m or (sc.geometry.h,)
    header = ["altitude_m", "cutoff_separation_m", "max_viewable_m", "ratio"]
    rows = []
    for h in alts:
        s = sc.with_values(altitude_m=h)
        cut = key_cutoff_distance(s, tol=args.tolerance)
        view = max_viewable_distance(h, s.geometry.earth_radius)
        rows.append([h, cut, view, cut / view])
    return header, rows, {}


def cmd_annual(args, sc: Scenario, study: dict):
    ann = dict(study.get("annual", {}))
    if args.n_gamma is not None:
        ann["n_gamma"] = args.n_gamma
    if args.symmetric:
        ann["symmetric"] = True
    try:
        cfg = AnnualConfig(**ann)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = annual_skl(cfg, sc, threads=args.threads)
    header = ["gamma_deg", "ell_bits"]
    rows = list(zip(res.gamma_deg, res.ell))
    print(f"annual key: {res.bits:.6g} bits ({res.orbits_per_year:.6g} orbits/year)",
          file=sys.stderr)
    return header, rows, {"annual_bits": res.bits, "orbits_per_year": res.orbits_per_year}


def cmd_show_config(args, sc: Scenario, study: dict):
    return None, emit_scenario(sc), {}


# --- parser ------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    try:
        return parse_float_list(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="scenario file (default: reference)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario key; repeatable")
    common.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    common.add_argument("--json", type=Path, help="also write a JSON run summary here")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker cap")
    common.add_argument("--no-metadata", action="store_true",
                        help="omit '#' metadata lines (timestamp, digest)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="satqkd", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("loss-profile", parents=[common], help="per-bin ranges, elevations, loss")
    s.add_argument("--all-bins", action="store_true", help="include bins outside visibility")
    s.set_defaults(func=cmd_loss_profile)

    s = sub.add_parser("pass", parents=[common], help="optimised key for one pass")
    s.set_defaults(func=cmd_pass)

    s = sub.add_parser("block-sweep", parents=[common],
                       help="key length versus block size per background scale")
    s.add_argument("--background-scale", type=_floats, help="comma-separated scale factors")
    s.set_defaults(func=cmd_block_sweep)

    s = sub.add_parser("sweep", parents=[common], help="grid of single-pass keys")
    for name in AXIS_COLUMNS:
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=_floats,
                       help="comma-separated axis values")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("cutoff", parents=[common],
                       help="separation where the key vanishes, per altitude")
    s.add_argument("--altitude-m", dest="altitude_m", type=_floats)
    s.add_argument("--tolerance", type=float, default=5e3, help="bisection tolerance, m")
    s.set_defaults(func=cmd_cutoff)

    s = sub.add_parser("annual", parents=[common], help="yearly key over overpass geometries")
    s.add_argument("--n-gamma", type=_positive_int)
    s.add_argument("--symmetric", action="store_true", help="sample [0, 90] deg and mirror")
    s.set_defaults(func=cmd_annual)

    s = sub.add_parser("show-config", parents=[common], help="print the resolved scenario")
    s.set_defaults(func=cmd_show_config)
    return p


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        path.write_text(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc, study = parse_study(args.config)
        base = args.config.parent if args.config else None
        sc = apply_overrides(sc, args.set, base)
    except (ConfigError, ValueError) as exc:
        print(f"satqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    started = time.time()
    try:
        header, rows, summary = args.func(args, sc, study)
        if header is None:
            text = rows
        else:
            meta = None if args.no_metadata else [
                f"satqkd {__version__} {args.command}",
                f"created {datetime.now(timezone.utc).isoformat(timespec='seconds')}",
                f"scenario {sc.digest()}",
            ]
            text = render_csv(header, rows, meta)
        _write(args.out, text)
        if args.json:
            summary = dict(summary, command=args.command, scenario_digest=sc.digest(),
                           grid_n=sc.security.grid_n, runtime_s=round(time.time() - started, 3))
            args.json.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except ConfigError as exc:
        print(f"satqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported with exit code 3
        print(f"satqkd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
