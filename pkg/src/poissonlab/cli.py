"""Command-line front end: reproducible certification and simulation runs.

Exit codes are a stable contract: 0 success/certified, 2 predicate failed,
64 usage error, 70 internal numeric failure. All randomness flows from the
--seed flag; outputs embed their full run configuration (minus the thread
count, which never affects results) so runs can be replayed byte-for-byte.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .poisson_core import (
    DEFAULT_TOL,
    ORACLE_POINTS,
    CappedFunctional,
    TruncationError,
    expectation,
    fourth_central_moment,
    monte_carlo_moments,
    variance,
    variance_pairwise,
)
from . import ci_model, d_statistic, inequality_lab, sample_complexity

EX_OK = 0
EX_PREDICATE = 2
EX_USAGE = 64
EX_NUMERIC = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(obj):
    """Strict-JSON rendering: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v) or math.isnan(v):
            return repr(v)
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _payload(command: str, params: dict, body: dict) -> dict:
    return {
        "tool": "poissonlab",
        "version": __version__,
        "command": command,
        "config": params,
        "result": body,
    }


def _emit(args, payload: dict, csv_text: str | None = None) -> None:
    if args.format == "csv" and csv_text is not None:
        text = csv_text
    else:
        text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_float_list(text: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad numeric list {text!r}") from exc


def _grid_from_args(args, kind: str) -> inequality_lab.GridSpec:
    default = inequality_lab.default_grid(kind, args.tol)
    lambdas = default.lambda_points
    pairs = default.cap_pairs
    if args.lam is not None:
        lambdas = tuple(_parse_float_list(args.lam))
    if args.caps:
        parsed = []
        for pair_text in args.caps:
            vals = _parse_float_list(pair_text)
            if len(vals) != 2:
                raise UsageError(f"--caps expects 'a,b', got {pair_text!r}")
            parsed.append((min(vals), max(vals)))
        pairs = tuple(parsed)
    return inequality_lab.GridSpec(lambdas, pairs, args.tol)


def cmd_certify(args) -> int:
    which_map = {"lemma1": "corrected", "claim21": "claim21", "claim23": "claim23"}
    kind = which_map[args.which]
    if args.which == "claim21":
        lambdas = (
            tuple(_parse_float_list(args.lam))
            if args.lam is not None
            else inequality_lab.default_grid("claim21", args.tol).lambda_points
        )
        grid = inequality_lab.GridSpec(lambdas, ((math.inf, math.inf),), args.tol)
    else:
        grid = _grid_from_args(args, kind)
    cert = inequality_lab.sweep(grid, kind, threads=args.threads)

    if kind == "corrected":
        finite = all(math.isfinite(r.ratio) for r in cert.records)
        plateau = inequality_lab.plateau_check(grid.cap_pairs, tol=args.tol)
        certified = finite and plateau
        extra = {"plateau": plateau}
    elif kind == "claim21":
        certified = bool(cert.records) and math.isfinite(cert.sup_ratio)
        extra = {}
    else:
        certified = bool(cert.records) and cert.inf_ratio > 0.0
        extra = {}

    body = dict(cert.to_json_dict(), certified=certified, **extra)
    csv_buf = io.StringIO()
    cert.write_csv(csv_buf)
    params = {"which": args.which, "tol": args.tol,
              "lambda": args.lam, "caps": args.caps}
    _emit(args, _payload("certify", params, body), csv_buf.getvalue())
    return EX_OK if certified else EX_PREDICATE


def cmd_falsify(args) -> int:
    if args.target <= 0:
        raise UsageError("--target must be positive")
    search = inequality_lab.find_counterexample(args.target)
    body = {
        "found": search.found,
        "lambda": search.lam,
        "a": search.cap_a,
        "b": search.cap_b,
        "ratio": search.ratio,
        "trail": [
            {"k": k, "lambda": lam, "ratio": ratio}
            for (k, lam, ratio) in search.trail
        ],
    }
    _emit(args, _payload("falsify", {"target": args.target}, body))
    return EX_OK if search.found else EX_PREDICATE


def cmd_simulate_d(args) -> int:
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    if args.l1 < 2 or args.l2 < 2 or args.n < 1:
        raise UsageError("need l1, l2 >= 2 and n >= 1")
    if args.m <= 0:
        raise UsageError("--m must be positive")
    if not (0.0 <= args.magnitude <= 1.0):
        raise UsageError("--magnitude must lie in [0, 1]")

    joint = ci_model.generate_null(args.l1, args.l2, args.n, args.seed)
    if args.magnitude > 0:
        joint = ci_model.perturb(joint, args.magnitude, args.seed)
    model = ci_model.build_model(joint, args.m)
    exact = d_statistic.exact_moments(model, args.tol)
    mc = d_statistic.mc_moments(model, args.reps, args.seed)
    chain = d_statistic.bound_chain_check(model, args.tol)
    try:
        ratio = d_statistic.variance_mean_ratio(model, args.tol)
    except inequality_lab.SkippedPoint:
        ratio = None

    if exact.mean == 0.0 and exact.variance == 0.0:
        mc_ok = mc.mean_hat == 0.0 and mc.var_hat == 0.0
    else:
        mc_ok = (
            abs(mc.mean_hat - exact.mean) <= 4.0 * mc.se_mean
            and abs(mc.var_hat - exact.variance) <= 4.0 * mc.se_var
        )
    ok = mc_ok and chain.quarter_step_ok

    body = {
        "exact": {"mean": exact.mean, "variance": exact.variance,
                  "tail_bound": exact.tail_bound},
        "mc": {"replications": mc.replications, "mean_hat": mc.mean_hat,
               "var_hat": mc.var_hat, "se_mean": mc.se_mean,
               "se_var": mc.se_var},
        "ratio": ratio if ratio is not None else "skipped",
        "chain": {
            "var_total": chain.var_total,
            "mean_total": chain.mean_total,
            "mid_sum": chain.mid_sum,
            "c1_observed": chain.c1_observed,
            "first_step_ok": chain.first_step_ok,
            "quarter_step_ok": chain.quarter_step_ok,
        },
        "mc_within_4se": mc_ok,
    }
    csv_buf = io.StringIO()
    csv_buf.write("z,lambda_z,weight,mean_z,var_z\n")
    per_z = {s.z: s for s in exact.per_z}
    for z in range(model.n):
        s = per_z.get(z)
        mean_z = s.mean if s else 0.0
        var_z = s.variance if s else 0.0
        csv_buf.write(
            f"{z},{float(model.rates[z])!r},{float(model.weights[z])!r},"
            f"{mean_z!r},{var_z!r}\n"
        )
    params = {"l1": args.l1, "l2": args.l2, "n": args.n, "m": args.m,
              "magnitude": args.magnitude, "seed": args.seed,
              "reps": args.reps, "tol": args.tol}
    _emit(args, _payload("simulate-d", params, body), csv_buf.getvalue())
    return EX_OK if ok else EX_PREDICATE


def cmd_complexity(args) -> int:
    if args.map:
        if args.eps is not None and not (0.0 < args.eps <= 1.0):
            raise UsageError("--eps must lie in (0, 1]")
        try:
            n_lo, n_hi, n_count = _parse_float_list(args.n_range)
            e_lo, e_hi, e_count = _parse_float_list(args.eps_range)
            n_values = sample_complexity.log_spaced(n_lo, n_hi, int(n_count))
            eps_values = sample_complexity.log_spaced(e_lo, e_hi, int(e_count))
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad range: {exc}") from exc
        if max(eps_values) > 1.0 or min(eps_values) <= 0.0:
            raise UsageError("eps range must lie in (0, 1]")
        rows = sample_complexity.regime_map(n_values, args.l1, args.l2, eps_values)
    else:
        if args.eps is None:
            raise UsageError("--eps is required")
        try:
            inputs = sample_complexity.ComplexityInputs(
                args.n, args.l1, args.l2, args.eps
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        res = sample_complexity.evaluate(inputs, both_orders=args.both_orders)
        row = {"n": inputs.n, "l1": inputs.l1, "l2": inputs.l2,
               "eps": inputs.eps}
        row.update(res.terms)
        row.update({"value": res.value, "active_term": res.active_term,
                    "dominant_regime": res.dominant_regime})
        rows = [row]
    csv_buf = io.StringIO()
    sample_complexity.write_regime_csv(rows, csv_buf)
    params = {"n": args.n, "l1": args.l1, "l2": args.l2, "eps": args.eps,
              "map": args.map, "n_range": args.n_range,
              "eps_range": args.eps_range, "both_orders": args.both_orders}
    _emit(args, _payload("complexity", params, {"rows": rows}), csv_buf.getvalue())
    return EX_OK


def cmd_h(args) -> int:
    if args.lambda_max < 1.0 or args.grid_points < 2:
        raise UsageError("need --lambda-max >= 1 and --grid-points >= 2")
    res = inequality_lab.h_infimum(args.lambda_max, args.grid_points)
    in_band = 0.0109 <= res.value <= 0.0129
    body = {"infimum": res.value, "arg_lambda": res.arg,
            "tail_certified": res.tail_certified, "in_band": in_band}
    params = {"lambda_max": args.lambda_max, "grid_points": args.grid_points}
    _emit(args, _payload("h", params, body))
    return EX_OK if in_band else EX_PREDICATE


def cmd_oracle_check(args) -> int:
    if args.draws < 2:
        raise UsageError("--draws must be at least 2")
    points = []
    all_ok = True
    for idx, (lam, a, b) in enumerate(ORACLE_POINTS):
        f = CappedFunctional(lam, a, b)
        e = expectation(f, args.tol)
        v = variance(f, args.tol)
        pw = variance_pairwise(f, args.tol)
        triangle_ok = abs(v.value - pw.value) <= v.tail_bound + pw.tail_bound
        mu4 = fourth_central_moment(f, args.tol)
        mc = monte_carlo_moments(f, args.draws, args.seed + idx)
        se_mean = math.sqrt(v.value / args.draws)
        se_var = math.sqrt(max(mu4.value - v.value**2, 0.0) / args.draws)
        mean_ok = abs(mc.mean - e.value) <= 4.0 * se_mean + e.tail_bound
        var_ok = abs(mc.variance - v.value) <= 4.0 * se_var + v.tail_bound
        ok = triangle_ok and mean_ok and var_ok
        all_ok = all_ok and ok
        points.append({
            "lambda": lam, "a": a, "b": b,
            "mean": e.value, "variance": v.value,
            "variance_pairwise": pw.value,
            "triangle_ok": triangle_ok, "mc_mean_ok": mean_ok,
            "mc_var_ok": var_ok,
        })
    params = {"draws": args.draws, "seed": args.seed, "tol": args.tol}
    _emit(args, _payload("oracle-check", params,
                         {"points": points, "all_ok": all_ok}))
    return EX_OK if all_ok else EX_PREDICATE


def build_parser() -> _Parser:
    parser = _Parser(prog="poissonlab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("certify", help="sweep a ratio grid and certify it")
    p.add_argument("which", choices=("lemma1", "claim21", "claim23"))
    p.add_argument("--lambda", dest="lam", default=None,
                   help="comma-separated rate list overriding the default grid")
    p.add_argument("--caps", action="append", default=None,
                   help="cap pair 'a,b'; repeatable")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("falsify", help="search for an unbounded-ratio witness")
    p.add_argument("--target", type=float, required=True)
    common(p)
    p.set_defaults(func=cmd_falsify)

    p = sub.add_parser("simulate-d", help="exact vs Monte Carlo statistic moments")
    p.add_argument("--l1", type=int, default=4)
    p.add_argument("--l2", type=int, default=4)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--m", type=float, default=1000.0)
    p.add_argument("--magnitude", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=10**5)
    common(p)
    p.set_defaults(func=cmd_simulate_d)

    p = sub.add_parser("complexity", help="evaluate the sample-size bound")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--l1", type=int, default=1)
    p.add_argument("--l2", type=int, default=1)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--both-orders", action="store_true")
    p.add_argument("--map", action="store_true", help="emit a regime map")
    p.add_argument("--n-range", default=None, help="'lo,hi,count' log-spaced")
    p.add_argument("--eps-range", default=None, help="'lo,hi,count' log-spaced")
    common(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("h", help="infimum of the closed-form comparison function")
    p.add_argument("--lambda-max", type=float, default=60.0)
    p.add_argument("--grid-points", type=int, default=10**4)
    common(p)
    p.set_defaults(func=cmd_h)

    p = sub.add_parser("oracle-check",
                       help="dual-route and Monte Carlo checks on pinned points")
    p.add_argument("--draws", type=int, default=10**6)
    common(p)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (TruncationError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EX_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
