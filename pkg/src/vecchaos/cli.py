"""Command-line driver: every verification suite and the limit experiment as a subcommand.

Reports go to stdout or ``--out``; JSON is written with sorted keys so that
identical inputs and seeds give byte-identical files.  Failures exit with
status 1 (a suite assertion failed) or 2 (bad input), and input errors are
reported as a JSON record on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .errors import ConsistencyError, VecChaosError
from .limits import convergence_report
from .spectral import correlation, validate
from .suites import (chaos_moment_rows, decays, diagram_sweep, family_check, hermite_suite,
                     ito_sweep, levels_of, sampler_moment_rows, shift_suite, split_measure,
                     wick_expansion_suite, wick_recursion_suite)

THREADS_ENV = "VECCHAOS_THREADS"
EXIT_FAIL = 1
EXIT_INPUT = 2


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _lags(text: str) -> list[list[int]]:
    """``"0,1,2"`` (one axis) or ``"0:0;1:0"`` (several axes)."""
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if item:
            out.append([int(v) for v in item.split(":")])
    if not out:
        raise argparse.ArgumentTypeError("empty lag list")
    return out


def _clean(obj):
    """Replace non-finite floats with strings so reports stay strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in fields})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def _emit(args, report: dict, rows: list[dict] | None = None) -> None:
    report = _clean(report)
    if args.format == "csv" and rows is not None:
        meta = f"# seed={report.get('seed', '')} passed={report.get('passed', '')}\n"
        text = meta + _csv_text(_clean(rows))
    else:
        text = io.dumps(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------------

def cmd_validate(args):
    G = io.load_measure(args.measure)
    rep = validate(G)
    out = {"command": "validate", "measure": args.measure, **rep.to_dict()}
    fail = rep.first_failure()
    if fail is not None:
        out["error"] = {"invariant": fail[0], "k": fail[1], "value": fail[2]}
    _emit(args, out, out["cells"])
    return 0 if rep.passed else EXIT_FAIL


def _require(G):
    rep = validate(G)
    fail = rep.first_failure()
    if fail is not None:
        raise _InvariantError(*fail)
    return G


class _InvariantError(VecChaosError):
    code = "invariant-violation"

    def __init__(self, invariant, k, value):
        super().__init__(f"measure fails the {invariant} check at cell k={k} (value {value:.3e})")
        self.invariant, self.k, self.value = invariant, k, value


def cmd_correlation(args):
    G = _require(io.load_measure(args.measure))
    lags = np.asarray(args.lags, dtype=np.int64).reshape(-1, G.system.dim)
    r = correlation(G, lags)
    d = G.dim_field
    rows = [{"p": lag, "j": j + 1, "jp": jp + 1, "value": float(r[i, j, jp])}
            for i, lag in enumerate(lags.tolist()) for j in range(d) for jp in range(d)]
    out = {"command": "correlation", "measure": args.measure, "rows": rows, "passed": True}
    _emit(args, out, rows)
    return 0


def cmd_sample(args):
    G = _require(io.load_measure(args.measure))
    rows = sampler_moment_rows(G, args.seed, args.replicas, args.lags or ())
    fam = family_check(rows)
    ok = fam["passed"]
    out = {"command": "sample", "measure": args.measure, "seed": args.seed,
           "replicas": args.replicas, "family": fam, "rows": rows, "passed": ok}
    _emit(args, out, rows)
    return 0 if ok else EXIT_FAIL


def cmd_chaos_moments(args):
    G = _require(io.load_measure(args.measure))
    f = io.load_kernel(args.kernel, G.system)
    f.check_colours(G.dim_field)
    rows = chaos_moment_rows(G, f, args.seed, args.replicas)
    fam = family_check(rows[:2])
    ok = fam["passed"] and rows[2]["within_3se"]
    out = {"command": "chaos-moments", "measure": args.measure, "kernel": args.kernel,
           "seed": args.seed, "replicas": args.replicas, "family": fam, "rows": rows, "passed": ok}
    _emit(args, out, rows)
    return 0 if ok else EXIT_FAIL


def _levels(G, args):
    if args.base_split > 1:
        G = split_measure(G, args.base_split)
    return levels_of(G, args.refinements)


def cmd_verify_diagram(args):
    G = _require(io.load_measure(args.measure))
    rows = diagram_sweep(_levels(G, args), args.n, args.m, args.refinements,
                         args.replicas, args.seed)
    ok = decays(rows, args.ratio)
    out = {"command": "verify-diagram", "measure": args.measure, "n": args.n, "m": args.m,
           "seed": args.seed, "replicas": args.replicas, "ratio_tolerance": args.ratio,
           "rows": rows, "passed": ok}
    _emit(args, out, rows)
    return 0 if ok else EXIT_FAIL


def cmd_verify_ito(args):
    G = _require(io.load_measure(args.measure))
    rows = ito_sweep(_levels(G, args), args.n, args.refinements, args.replicas, args.seed)
    if args.n == 1:
        ok = all(r["max_abs_gap"] <= 1e-12 for r in rows)
    else:
        ok = decays(rows, args.ratio)
    out = {"command": "verify-ito", "measure": args.measure, "n": args.n, "seed": args.seed,
           "replicas": args.replicas, "ratio_tolerance": args.ratio, "rows": rows, "passed": ok}
    _emit(args, out, rows)
    return 0 if ok else EXIT_FAIL


def cmd_verify_wick(args):
    if args.suite == "expansion":
        rows = wick_expansion_suite(args.seed, args.instances or 200)
        rows += [{"instance": f"hermite-{r['order']}", **r} for r in hermite_suite()]
    elif args.suite == "recursion":
        rows = wick_recursion_suite(args.seed, args.instances or 50)
    else:
        G = _require(io.load_measure(args.measure or io.data_path("example_measure.json")))
        seeds = [args.seed + i for i in range(args.instances or 10)]
        rows = shift_suite(G, seeds)
    ok = all(r["passed"] for r in rows)
    out = {"command": "verify-wick", "suite": args.suite, "seed": args.seed,
           "max_defect": max(r["defect"] for r in rows), "rows": rows, "passed": ok}
    _emit(args, out, rows)
    return 0 if ok else EXIT_FAIL


def cmd_limit_experiment(args):
    exp = io.load_experiment(args.config)
    if args.replicas:
        exp.replicas = args.replicas
    if args.seed is not None:
        exp.seed = args.seed
    rep = convergence_report(exp)
    rep["command"] = "limit-experiment"
    rep["seed"] = exp.seed
    rows = [{"N": r["N"], "A_N": r["A_N"], "moment_discrepancy": r["moment_discrepancy"],
             "cf_discrepancy": r["cf_discrepancy"], "analytic_variance": r["analytic_variance"]}
            for r in rep["rows"]]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(_csv_text(_clean(rows)))
    _emit(args, rep, rows)
    return 0 if rep["passed"] else EXIT_FAIL


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecchaos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "check a measure file and list per-cell defects")
    sp.add_argument("--measure", required=True)

    sp = add("correlation", cmd_correlation, "cross-correlations r_{j j'}(p) of a measure")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--lags", type=_lags, required=True, help="e.g. 0,1,2 or 0:0;1:0 for nu=2")

    sp = add("sample", cmd_sample, "empirical moments of the random spectral measure")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--replicas", type=_positive, default=100000)
    sp.add_argument("--lags", type=_lags, default=None)

    sp = add("chaos-moments", cmd_chaos_moments, "Monte Carlo against analytic chaos moments")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--kernel", required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--replicas", type=_positive, default=20000)

    sp = add("verify-diagram", cmd_verify_diagram, "refinement sweep of the product formula")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--n", type=_positive, required=True)
    sp.add_argument("--m", type=_positive, required=True)
    sp.add_argument("--refinements", type=_positive, default=3)
    sp.add_argument("--replicas", type=_positive, default=2000)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--ratio", type=float, default=0.75)
    sp.add_argument("--base-split", type=_positive, default=1,
                    help="split every cell into this many before level 0")

    sp = add("verify-ito", cmd_verify_ito, "refinement sweep of the multivariate Ito formula")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--n", type=_positive, required=True)
    sp.add_argument("--refinements", type=_positive, default=3)
    sp.add_argument("--replicas", type=_positive, default=4000)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--ratio", type=float, default=0.75)
    sp.add_argument("--base-split", type=_positive, default=1,
                    help="split every cell into this many before level 0")

    sp = add("verify-wick", cmd_verify_wick, "Wick algebra and shift identities")
    sp.add_argument("--suite", choices=("recursion", "expansion", "shift"), required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--instances", type=_positive, default=None)
    sp.add_argument("--measure", default=None, help="measure for the shift suite")

    sp = add("limit-experiment", cmd_limit_experiment, "long-memory limit harness")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=_seed, default=None, help="override the config seed")
    sp.add_argument("--replicas", type=_positive, default=None)
    sp.add_argument("--csv", help="also write the per-N summary as CSV")
    return p


def _error_record(exc: Exception) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, _InvariantError):
        rec.update({"invariant": exc.invariant, "k": exc.k, "value": exc.value})
    code = getattr(exc, "code", None)
    if code is not None:
        rec["code"] = code
    return rec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get(THREADS_ENV)
    try:
        limit = int(threads) if threads else None
    except ValueError:
        sys.stderr.write(json.dumps({"error": "BadEnvironment",
                                     "message": f"{THREADS_ENV} must be an integer"}) + "\n")
        return EXIT_INPUT
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except VecChaosError as exc:
        sys.stderr.write(json.dumps(_clean(_error_record(exc)), sort_keys=True) + "\n")
        return EXIT_INPUT
    except ConsistencyError as exc:
        sys.stderr.write(json.dumps(_clean(_error_record(exc)), sort_keys=True) + "\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
