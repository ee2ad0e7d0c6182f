"""Command-line front end: invariant calculator, field dumps, verification.

Exit codes: 0 success / all formulas pass, 1 verification failure or baseline
mismatch, 2 usage or configuration errors.  The environment variable
FOLIA_WORKERS overrides the worker count used for suite-level parallelism;
it never affects the computed numbers, so it is not part of the resolved
configuration echoed into the output artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from configparser import ConfigParser
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import invariants
from .charts import ChartError, ExpressionError, PRESETS, chart_from_preset, chart_from_spec
from .curvature import trace_qr
from .fields import FieldSet
from .verifier import (
    DEFAULT_SUITE,
    FORMULAS,
    HypothesisError,
    reports_json,
    verify_suite,
    write_reports,
)

CONFIG_KEYS = {"chart", "formulas", "k", "grid", "tolerance", "out", "suite", "mode"}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    suite: str | None = None
    chart: str | None = None
    formulas: list = field(default_factory=list)
    ks: list = field(default_factory=lambda: [None])
    grid: tuple = (24, 48)
    grid_explicit: bool = False
    tolerance: float | None = None
    out: str | None = None
    mode: str = "float"

    def echo(self) -> dict:
        # only result-affecting settings: output paths and worker counts are
        # I/O and scheduling details, excluded so reports stay byte-identical
        return {
            "suite": self.suite,
            "chart": self.chart,
            "formulas": list(self.formulas),
            "k": [k for k in self.ks],
            "grid": list(self.grid),
            "tolerance": self.tolerance,
            "mode": self.mode,
        }


def parse_k_range(text: str) -> list:
    text = text.strip()
    if not text:
        return [None]
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part]


def parse_grid(text: str) -> tuple:
    parts = [int(p) for p in str(text).split(",") if p.strip()]
    if len(parts) == 1:
        if parts[0] % 2:
            raise UsageError(f"grid resolution must be even, got {parts[0]}")
        return (parts[0] // 2, parts[0])
    if len(parts) == 2:
        coarse, fine = sorted(parts)
        if fine != 2 * coarse:
            raise UsageError(f"grid must be a (n, 2n) pair, got {parts}")
        return (coarse, fine)
    raise UsageError(f"grid expects 'n' or 'n,2n', got {text!r}")


def load_config_file(path: str) -> dict:
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, "r", encoding="utf-8") as handle:
        parser.read_string(handle.read())
    if parser.sections() != ["verify"]:
        raise UsageError(f"config file must contain exactly one [verify] section, "
                         f"found {parser.sections()}")
    out = dict(parser.items("verify"))
    unknown = set(out) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return out


def resolve_run_config(args) -> RunConfig:
    cfg = RunConfig()
    file_values = load_config_file(args.config) if args.config else {}
    if "suite" in file_values:
        cfg.suite = file_values["suite"]
    if "chart" in file_values:
        cfg.chart = file_values["chart"]
    if "formulas" in file_values:
        cfg.formulas = [f.strip() for f in file_values["formulas"].split(",") if f.strip()]
    if "k" in file_values:
        cfg.ks = parse_k_range(file_values["k"])
    if "grid" in file_values:
        cfg.grid = parse_grid(file_values["grid"])
        cfg.grid_explicit = True
    if "tolerance" in file_values:
        cfg.tolerance = float(file_values["tolerance"])
    if "out" in file_values:
        cfg.out = file_values["out"]
    if "mode" in file_values:
        cfg.mode = file_values["mode"]

    if args.suite:
        cfg.suite = args.suite
    if args.chart:
        cfg.chart = args.chart
    if args.formula:
        cfg.formulas = list(args.formula)
    if args.k is not None:
        cfg.ks = parse_k_range(args.k)
    if args.grid is not None:
        cfg.grid = parse_grid(args.grid)
        cfg.grid_explicit = True
    if args.tolerance is not None:
        cfg.tolerance = args.tolerance
    if args.out is not None:
        cfg.out = args.out
    return cfg


def worker_count(args) -> int:
    if args.workers is not None:
        return max(1, int(args.workers))
    env = os.environ.get("FOLIA_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"FOLIA_WORKERS must be an integer, got {env!r}") from exc
    return 1


# ---------------------------------------------------------------------------
# invariants subcommand

def _parse_matrix(text_or_rows, mode: str):
    rows = json.loads(text_or_rows) if isinstance(text_or_rows, str) else text_or_rows
    if mode == "exact":
        return invariants.exact_matrix([[Fraction(str(entry)) for entry in row]
                                        for row in rows])
    return np.asarray(rows, dtype=float)


def _format_scalar(value) -> str:
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}" if value.denominator != 1 \
            else str(value.numerator)
    return repr(float(value))


def _format_matrix(mat) -> str:
    return "\n".join("  ".join(_format_scalar(entry) for entry in row) for row in mat)


def cmd_invariants(args) -> int:
    mode = args.mode
    mats = []
    if args.matrix:
        mats = [_parse_matrix(args.matrix, mode)]
    elif args.matrices:
        with open(args.matrices, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
        if not isinstance(payload, dict) or "matrices" not in payload:
            raise UsageError("matrix file must be a JSON object with a 'matrices' key")
        mats = [_parse_matrix(rows, mode) for rows in payload["matrices"]]
    if not mats:
        raise UsageError("invariants needs --matrix or --matrices")

    did_something = False
    if args.lam is not None:
        lam = tuple(int(p) for p in args.lam.split(","))
        value = invariants.sigma(tuple(mats), lam)
        print(_format_scalar(value))
        did_something = True
    if args.newton is not None:
        print(_format_matrix(invariants.newton_transform(mats[0], args.newton)))
        did_something = True
    if args.det_series is not None:
        coeffs = invariants.det_series_coefficients(mats, args.det_series)
        print("  ".join(_format_scalar(c) for c in coeffs))
        did_something = True
    if not did_something:
        table = [invariants.sigma_k(mats[0], k) for k in range(mats[0].shape[0] + 1)]
        print("  ".join(_format_scalar(c) for c in table))
    return 0


# ---------------------------------------------------------------------------
# fields subcommand

FIELD_GETTERS = {
    "c": lambda fs, chart: fs.c,
    "N": lambda fs, chart: fs.N,
    "n": lambda fs, chart: fs.n,
    "nu": lambda fs, chart: fs.nu,
    "barA": lambda fs, chart: fs.barA,
    "Zbar": lambda fs, chart: fs.Zbar,
    "Ag": lambda fs, chart: fs.Ag,
    "Csharp": lambda fs, chart: fs.Csharp_nu,
    "A": lambda fs, chart: fs.A,
    "Z": lambda fs, chart: fs.Z,
    "trQR": lambda fs, chart: trace_qr(chart, fs.pts),
    "dens_a": lambda fs, chart: fs.dens_a,
    "dens_g": lambda fs, chart: fs.dens_g,
    "dens_F": lambda fs, chart: fs.dens_F,
}


def cmd_fields(args) -> int:
    chart = chart_from_spec(args.chart)
    chart.validate(n=4 if chart.dim >= 5 else 8)
    if args.field not in FIELD_GETTERS:
        raise UsageError(f"unknown field {args.field!r}; known: "
                         f"{', '.join(sorted(FIELD_GETTERS))}")
    n = args.grid if args.grid else chart.resolution
    pts = chart.grid(n)
    fs = FieldSet(chart, pts)
    values = FIELD_GETTERS[args.field](fs, chart)
    values = np.asarray(values)
    flat = values.reshape(values.shape[0], -1)

    header = [f"x{i + 1}" for i in range(chart.dim)]
    if flat.shape[1] == 1:
        header.append(args.field)
    else:
        header.extend(f"{args.field}_{j}" for j in range(flat.shape[1]))
    lines = ["# chart = " + chart.name,
             "# chart_hash = " + chart.content_hash(),
             ",".join(header)]
    for row_pt, row_val in zip(pts, flat):
        lines.append(",".join([repr(float(v)) for v in row_pt]
                              + [repr(float(v)) for v in row_val]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# verify subcommand

def cmd_verify(args) -> int:
    cfg = resolve_run_config(args)
    workers = worker_count(args)

    if cfg.suite:
        if cfg.suite != "default":
            raise UsageError(f"unknown suite {cfg.suite!r}; available: default")
        entries = list(DEFAULT_SUITE)
        charts = {name: chart_from_preset(name) for name in PRESETS}
        grid_override = cfg.grid if cfg.grid_explicit else None
    else:
        if not cfg.chart or not cfg.formulas:
            raise UsageError("verify needs --suite default or both --chart and --formula")
        chart = chart_from_spec(cfg.chart)
        chart.validate(n=4 if chart.dim >= 5 else 8)
        charts = {chart.name: chart}
        entries = []
        for fid in cfg.formulas:
            if fid not in FORMULAS:
                raise UsageError(f"unknown formula {fid!r}; known: {', '.join(sorted(FORMULAS))}")
            spec = FORMULAS[fid]
            ks = cfg.ks if spec.k_range != "none" else [None]
            for k in ks:
                entries.append((fid, chart.name, k, cfg.grid[1]))
        grid_override = cfg.grid if cfg.grid_explicit else None

    reports = verify_suite(entries, charts, tolerance=cfg.tolerance,
                           workers=workers, grid_override=grid_override)

    json_path = csv_path = None
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        json_path = os.path.join(cfg.out, "report.json")
        csv_path = os.path.join(cfg.out, "report.csv")
    write_reports(reports, cfg.echo(), json_path, csv_path)

    for r in reports:
        print(f"{r.verdict.upper():4s} {r.formula} on {r.chart}"
              + (f" (k={r.k})" if r.k is not None else "")
              + f": residual {r.residual:.3e} (tol est {r.error_estimate:.1e})")
    failures = [r for r in reports if r.verdict != "pass"]

    if args.baseline:
        with open(args.baseline, "r", encoding="utf-8") as handle:
            baseline = handle.read()
        current = reports_json(reports, cfg.echo())
        if baseline != current:
            print("baseline mismatch: current reports differ from "
                  f"{args.baseline}", file=sys.stderr)
            return 1
        print(f"baseline match: {args.baseline}")

    if failures:
        print(f"{len(failures)} formula(s) failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="folia",
        description="verification engine for codimension-one foliated Randers spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    p_inv = sub.add_parser("invariants", help="matrix invariant calculator")
    p_inv.add_argument("--matrix", help="inline JSON matrix")
    p_inv.add_argument("--matrices", help="JSON file with a 'matrices' list")
    p_inv.add_argument("--lambda", dest="lam", help="multi-index, e.g. '1,1'")
    p_inv.add_argument("--newton", type=int, help="Newton transformation order")
    p_inv.add_argument("--det-series", dest="det_series", type=int,
                       help="determinant power-series order")
    p_inv.add_argument("--mode", choices=("exact", "float"), default="exact")
    p_inv.set_defaults(func=cmd_invariants)

    p_fields = sub.add_parser("fields", help="dump geometric fields on a grid")
    p_fields.add_argument("--chart", required=True, help="preset name or chart file")
    p_fields.add_argument("--field", required=True)
    p_fields.add_argument("--grid", type=int)
    p_fields.add_argument("--format", choices=("csv",), default="csv")
    p_fields.add_argument("--out")
    p_fields.set_defaults(func=cmd_fields)

    p_verify = sub.add_parser("verify", help="run integral-formula verifications")
    p_verify.add_argument("--chart")
    p_verify.add_argument("--formula", action="append")
    p_verify.add_argument("--k")
    p_verify.add_argument("--grid")
    p_verify.add_argument("--suite")
    p_verify.add_argument("--tolerance", type=float)
    p_verify.add_argument("--out")
    p_verify.add_argument("--baseline")
    p_verify.add_argument("--workers", type=int)
    p_verify.add_argument("--config")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ChartError, ExpressionError, HypothesisError,
            invariants.DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
