"""Command-line front end: ``gfbm simulate | table | verify | analyze``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or parse
error, 3 numerical failure (factorization or embedding).
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import warnings
import zlib
from typing import Callable, Sequence, TextIO

import numpy as np

from . import estimators as est
from .errors import GfbmError, NumericalError
from .kernel import (
    GfbmParams,
    covariance,
    increment_bounds,
    increment_second_moment,
    r_z,
    variance,
)
from .samplers import Method, PathEnsemble, SampleSpec, TimeGrid, sample

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

HEADER_PATTERN = re.compile(
    r"^# gfbm a=(?P<a>\S+) b=(?P<b>\S+) H=(?P<H>\S+) seed=(?P<seed>\d+) method=(?P<method>\w+)$"
)


class ParseError(GfbmError, ValueError):
    def __init__(self, source: str, line: int, column: int, message: str):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.line = line
        self.column = column


class UsageError(GfbmError):
    pass


def _fmt(x: float) -> str:
    # shortest repr that round-trips; at most 17 significant digits
    return repr(float(x))


# ---------------------------------------------------------------------------
# CSV path files
# ---------------------------------------------------------------------------

def write_ensemble(ensemble: PathEnsemble, out: TextIO) -> None:
    p, spec = ensemble.params, ensemble.spec
    out.write(
        f"# gfbm a={_fmt(p.a)} b={_fmt(p.b)} H={_fmt(p.hurst)} seed={spec.seed} method={spec.method.value}\n"
    )
    out.write(",".join(["t"] + [f"path_{k}" for k in range(ensemble.n_paths)]) + "\n")
    table = np.column_stack([ensemble.grid.points, ensemble.values.T])
    for row in table.tolist():
        out.write(",".join(map(repr, row)) + "\n")


def read_ensemble(text: str, source: str = "<input>") -> PathEnsemble:
    """Parse a path file written by :func:`write_ensemble`."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(source, 1, 1, "empty file")
    m = HEADER_PATTERN.match(lines[0].rstrip("\r"))
    if m is None:
        raise ParseError(source, 1, 1, "expected '# gfbm a=<a> b=<b> H=<H> seed=<seed> method=<m>'")
    try:
        params = GfbmParams(float(m["a"]), float(m["b"]), float(m["H"]))
        method = Method(m["method"])
    except ValueError as exc:
        raise ParseError(source, 1, 1, f"bad header value: {exc}") from exc
    if len(lines) < 2:
        raise ParseError(source, 2, 1, "missing column header")
    names = lines[1].rstrip("\r").split(",")
    if names[0] != "t" or len(names) < 2:
        raise ParseError(source, 2, 1, "column header must be 't,path_0,...'")
    for col, name in enumerate(names[1:], start=2):
        if name != f"path_{col - 2}":
            raise ParseError(source, 2, col, f"expected column 'path_{col - 2}', got {name!r}")
    width = len(names)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        fields = line.rstrip("\r").split(",")
        if len(fields) != width:
            raise ParseError(source, lineno, min(len(fields), width) + 1, f"expected {width} fields, got {len(fields)}")
        row = []
        for col, field in enumerate(fields, start=1):
            try:
                value = float(field)
            except ValueError:
                raise ParseError(source, lineno, col, f"not a number: {field!r}") from None
            if not math.isfinite(value):
                raise ParseError(source, lineno, col, f"not a finite number: {field!r}")
            row.append(value)
        rows.append(row)
    if not rows:
        raise ParseError(source, 3, 1, "no data rows")
    data = np.array(rows)
    try:
        grid = TimeGrid.from_points(data[:, 0])
    except GfbmError as exc:
        raise ParseError(source, 3, 1, f"bad time column: {exc}") from exc
    spec = SampleSpec(width - 1, int(m["seed"]), method)
    return PathEnsemble(grid, np.ascontiguousarray(data[:, 1:].T), params, spec, {"source": source})


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _params(args: argparse.Namespace) -> GfbmParams:
    return GfbmParams(args.a, args.b, args.hurst)


def cmd_simulate(args: argparse.Namespace) -> int:
    params = _params(args)
    grid = TimeGrid.regular(args.t_max, args.points)
    spec = SampleSpec(args.paths, args.seed, Method(args.method))
    ensemble = sample(params, grid, spec, n_workers=args.workers)
    if args.output in (None, "-"):
        write_ensemble(ensemble, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_ensemble(ensemble, fh)
    meta = ", ".join(f"{k}={v}" for k, v in ensemble.provenance.items() if k != "rng")
    print(f"simulated {spec.n_paths} paths on {len(grid)} points: {meta}", file=sys.stderr)
    return EXIT_OK


def _table_rows(args: argparse.Namespace) -> tuple[list[str], list[list]]:
    params = _params(args)
    ts = args.t or [1.0]
    ss = args.s or [1.0]
    if args.what == "cov":
        return ["t", "s", "covariance"], [[t, s, covariance(params, t, s)] for t in ts for s in ss]
    if args.what == "var":
        return ["t", "variance"], [[t, variance(params, t)] for t in ts]
    if args.what == "incr":
        ss = args.s or [0.0]
        return ["s", "t", "second_moment"], [
            [s, t, increment_second_moment(params, s, t)] for s in ss for t in ts
        ]
    if args.what == "bounds":
        bounds = increment_bounds(params)
        return ["regime", "gamma", "nu"], [[bounds.regime.value, bounds.gamma, bounds.nu]]
    # rz
    ns = range(1, args.n_max + 1)
    return ["p", "n", "r_z"], [[args.p, n, r_z(params, args.p, n)] for n in ns]


def cmd_table(args: argparse.Namespace) -> int:
    names, rows = _table_rows(args)
    out = sys.stdout
    out.write(",".join(names) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return EXIT_OK


def check_seed(seed: int, name: str) -> int:
    """Seed of one verification check, derived from the run seed and the check name."""
    state = np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1, np.uint64)
    return int(state[0])


def _mismatched(params: GfbmParams) -> GfbmParams:
    # moves H by a quarter, staying inside (0, 1)
    H = params.hurst
    return params.with_hurst(H - 0.25 if H > 0.5 else H + 0.25)


def _check_covariance(params, seed, mismatch):
    ens = sample(params, TimeGrid.regular(1.0, 15), SampleSpec(20000, seed, Method.CIRCULANT))
    target = _mismatched(params) if mismatch else params
    return est.covariance_discrepancy_scan(ens, target, allow_mismatch=mismatch)


def _check_cross_method(params, seed, mismatch):
    grid = TimeGrid.regular(1.0, 15)
    chol = sample(params, grid, SampleSpec(20000, seed, Method.CHOLESKY))
    other = _mismatched(params) if mismatch else params
    circ = sample(other, grid, SampleSpec(20000, check_seed(seed, "circulant"), Method.CIRCULANT))
    return est.cross_method_scan(chol, circ)


def _check_bounds(params, seed, mismatch):
    return est.verify_increment_bounds(params, 10**4, seed)


def _check_markov(params, seed, mismatch):
    return est.markov_scan(params, 1000, seed)


def _check_rz(params, seed, mismatch):
    return est.rz_asymptotic_check(params)


def _check_lrd(params, seed, mismatch):
    claimed = None
    if mismatch:
        # flips the predicted class
        claimed = GfbmParams(1.0, 0.0, 0.75) if params.hurst <= 0.5 or params.a == params.b else GfbmParams(1.0, 1.0, 0.75)
    return est.lrd_check(params, 1, 10**6, claimed=claimed)


def _check_hurst(params, seed, mismatch):
    ens = sample(params, TimeGrid.regular(1.0, 2**12), SampleSpec(50, seed))
    report = est.hurst_check(ens)
    if mismatch:
        ens = PathEnsemble(ens.grid, ens.values, _mismatched(params), ens.spec, ens.provenance)
        report = est.hurst_check(ens)
    return report


def _check_self_similarity(params, seed, mismatch):
    grid = TimeGrid.regular(1.0, 8)
    first = sample(params, grid, SampleSpec(20000, seed))
    second = sample(params, grid.dilate(4.0), SampleSpec(20000, check_seed(seed, "dilated")))
    exponent = _mismatched(params).hurst if mismatch else None
    return est.self_similarity_check(params, 4.0, first, second, exponent=exponent)


def _check_local_time(params, seed, mismatch):
    ens = sample(params, TimeGrid.regular(1.0, 2**12), SampleSpec(100, seed))
    return est.local_time_l2_stability(ens)


def _check_density_integral(params, seed, mismatch):
    coarse = est.density_double_integral_extrapolated(params, 1.0, 512)
    fine = est.density_double_integral_extrapolated(params, 1.0, 1024)
    change = abs(fine["extrapolated"] / coarse["extrapolated"] - 1)
    details = {"n_quad": [512, 1024], "coarse": coarse, "fine": fine}
    return est.VerificationReport("density_integral", change, 0.02, change < 0.02, details)


CHECKS: dict[str, Callable[[GfbmParams, int, bool], est.VerificationReport]] = {
    "covariance": _check_covariance,
    "cross_method": _check_cross_method,
    "increment_bounds": _check_bounds,
    "markov": _check_markov,
    "rz_asymptotics": _check_rz,
    "lrd": _check_lrd,
    "hurst": _check_hurst,
    "self_similarity": _check_self_similarity,
    "local_time": _check_local_time,
    "density_integral": _check_density_integral,
}


def run_checks(
    params: GfbmParams, seed: int, names: Sequence[str], inject_mismatch: bool = False
) -> tuple[list[dict], bool]:
    """Run the named checks; returns the report dicts and whether a numerical error occurred."""
    reports, numerical = [], False
    for name in names:
        sub_seed = check_seed(seed, name)
        try:
            report = CHECKS[name](params, sub_seed, inject_mismatch)
            report.name = name
        except GfbmError as exc:
            numerical = numerical or isinstance(exc, NumericalError)
            report = est.VerificationReport(name, float("nan"), float("nan"), False, {"error": str(exc)})
        report.details = {**report.details, "check_seed": sub_seed, "run_seed": seed}
        if inject_mismatch:
            report.details["inject_mismatch"] = True
        reports.append(report.to_dict())
    return reports, numerical


def cmd_verify(args: argparse.Namespace) -> int:
    params = _params(args)
    if args.checks is None:
        names = list(CHECKS)
    else:
        names = [n for item in args.checks for n in item.split(",") if n]
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise UsageError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    if not names:
        print("warning: no checks selected, writing an empty report", file=sys.stderr)
    reports, numerical = run_checks(params, args.seed, names, args.inject_mismatch)
    text = json.dumps(reports, indent=2, allow_nan=False) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    for r in reports:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}", file=sys.stderr)
    if numerical:
        return EXIT_NUMERICAL
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_FAILED


def analyze_ensemble(ensemble: PathEnsemble, n_bins: int = 128, t0: float | None = None) -> dict:
    grid = ensemble.grid
    summary: dict = {
        "params": ensemble.params.as_dict(),
        "seed": ensemble.spec.seed,
        "method": ensemble.spec.method.value,
        "n_paths": ensemble.n_paths,
        "grid_points": len(grid),
    }
    try:
        h_hat, spread = est.hurst_estimate(ensemble)
        first = float(np.nanmean(est.hurst_per_path(ensemble.values, order=1))) if np.isfinite(h_hat) else None
        summary["hurst"] = {"estimate": h_hat, "dispersion": spread, "first_order": first}
    except GfbmError as exc:
        summary["hurst"] = {"estimate": None, "dispersion": None, "note": str(exc)}

    if grid.uniform and len(grid) >= 2:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            estimates = [est.occupation_local_time(row, grid, n_bins) for row in ensemble.values]
        lt = estimates[0]
        summary["local_time"] = {
            "path": 0,
            "bin_edges": lt.bin_edges,
            "density": lt.density,
            "occupation_total": lt.occupation_total(),
            "horizon": lt.horizon,
            "degenerate": lt.degenerate,
            "squared_integral": lt.squared_integral(),
            "mean_squared_integral": float(np.mean([e.squared_integral() for e in estimates])),
            "max_occupation_error": max(e.occupation_error() for e in estimates),
            "degenerate_paths": sum(e.degenerate for e in estimates),
        }
        if caught:
            print(f"warning: {caught[0].message} ({len(caught)} path(s))", file=sys.stderr)
            summary["local_time"]["warning"] = str(caught[0].message)
    else:
        summary["local_time"] = {"note": "local time needs a uniform grid of at least two points"}

    summary["difference_quotient"] = _quotient_table(ensemble, t0)
    return summary


def _quotient_table(ensemble: PathEnsemble, t0: float | None) -> dict:
    grid = ensemble.grid
    if not grid.uniform or len(grid) < 3:
        return {"note": "difference quotients need a uniform grid of at least three points"}
    t0 = grid.t_max / 2 if t0 is None else t0
    reach = min(t0, grid.t_max - t0)
    levels = [k for k in range(0, 31) if grid.step * 2**k <= reach]
    if not levels:
        return {"note": f"t0={t0} is within one step of the boundary"}
    eps = [grid.step * 2**k for k in reversed(levels)]
    sups = np.array([est.difference_quotient_sup(row, grid, t0, eps) for row in ensemble.values])
    return {"t0": t0, "eps": eps, "sup_path_0": sups[0], "median_sup": np.median(sups, axis=0)}


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.input == "-":
        text, source = sys.stdin.read(), "<stdin>"
    else:
        with open(args.input, encoding="utf-8", newline="") as fh:
            text, source = fh.read(), args.input
    ensemble = read_ensemble(text, source)
    summary = analyze_ensemble(ensemble, args.bins, args.t0)
    out = json.dumps(est.to_jsonable(summary), indent=2, allow_nan=False) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(out)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float, default=1.0, help="coefficient of B_t (default 1)")
    p.add_argument("--b", type=float, default=0.0, help="coefficient of B_{-t} (default 0)")
    p.add_argument("--hurst", type=float, default=0.5, help="Hurst index in (0, 1) (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfbm", description="Generalized fractional Brownian motion toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate paths to CSV")
    _add_params(sim)
    sim.add_argument("--t-max", type=float, default=1.0)
    sim.add_argument("--points", type=int, default=1024, help="number of steps; the file has points+1 rows")
    sim.add_argument("--paths", type=int, default=1)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--method", choices=[m.value for m in Method], default=Method.CIRCULANT.value)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    sim.set_defaults(func=cmd_simulate)

    tab = sub.add_parser("table", help="tabulate analytic quantities as CSV")
    _add_params(tab)
    tab.add_argument("--what", choices=["cov", "var", "incr", "bounds", "rz"], required=True)
    tab.add_argument("--t", type=float, nargs="+", help="time values (default 1)")
    tab.add_argument("--s", type=float, nargs="+", help="second time values (default 1; 0 for incr)")
    tab.add_argument("--p", type=int, default=1, help="offset for rz (default 1)")
    tab.add_argument("--n-max", type=int, default=10, help="largest lag for rz (default 10)")
    tab.set_defaults(func=cmd_table)

    ver = sub.add_parser("verify", help="run the verification suite, JSON report")
    _add_params(ver)
    ver.add_argument("--seed", type=int, required=True)
    ver.add_argument(
        "--checks",
        nargs="*",
        default=None,
        help=f"checks to run, space or comma separated (default all: {', '.join(CHECKS)})",
    )
    ver.add_argument("--inject-mismatch", action="store_true", help="debug: feed mismatched parameters to the checks")
    ver.add_argument("-o", "--output", default=None, help="report file (default stdout)")
    ver.set_defaults(func=cmd_verify)

    ana = sub.add_parser("analyze", help="summarize a stored path file as JSON")
    ana.add_argument("input", help="CSV path file, or - for stdin")
    ana.add_argument("--bins", type=int, default=128)
    ana.add_argument("--t0", type=float, default=None, help="difference-quotient anchor (default T/2)")
    ana.add_argument("-o", "--output", default=None)
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be in [0, 2^64)")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"gfbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GfbmError, ValueError, OSError) as exc:
        print(f"gfbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
