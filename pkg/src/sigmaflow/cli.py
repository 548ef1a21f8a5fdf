"""Command-line front end.

Subcommands: classify, stationary, lambda, evolve, obstacle, phase-diagram, report.
Options may also come from a key=value file given with --config; flags win.

Exit codes: 0 ok, 1 bad input, 2 indeterminate run, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from math import comb

import numpy as np

from . import __version__
from .classes import (BLOWUP, PnProblem, XmnProblem, classify_pn, classify_xmn,
                      critical_alpha_pn, limit_class, ratio_pn, threshold_pn)
from .errors import (CaseMismatchError, InconsistencyError, InvalidProblemError,
                     RelaxationError, SchemeError, SigmaflowError)
from .flow import CONVERGED, FlowProblem, SchemeConfig, evolve, sigma_profile
from .gpoly import topological_constant_xmn
from .obstacle import ObstacleProblem, complementarity_residual, export_csv, solve_psor
from .potential import flux_by_name
from .stationary import solve_lambda_pn, solve_xmn_system, stationary_for

log = logging.getLogger("sigmaflow")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_INDETERMINATE, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "family": "pn",
    "m": 0,
    "points": 400,
    "cfl": 0.8,
    "steady_tol": 1e-8,
    "theta": 1.0,
    "flux": "neg_identity",
    "out": None,
    "tol": 1e-12,
    "resolution": 50,
    "workers": 1,
    "omega": None,
    "psor_tol": 1e-12,
    "snapshot_every": None,
    "max_time": None,
    "wall_limit": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_number(text) -> Fraction:
    """Decimal or p/q text to an exact Fraction."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None
    return value


def parse_range(text):
    parts = str(text).split(",")
    if len(parts) != 2:
        raise UsageError(f"range must be 'lo,hi', got {text!r}")
    lo, hi = (parse_number(p) for p in parts)
    if not hi > lo:
        raise UsageError(f"empty range {text!r}")
    return lo, hi


def read_config(path):
    cfg = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, value = (s.strip() for s in line.split("=", 1))
                cfg[key.replace("-", "_")] = value
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    return cfg


def _add_problem_args(p):
    p.add_argument("--family", choices=["pn", "xmn"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--b")
    p.add_argument("--bprime", dest="b_prime")


def _add_scheme_args(p):
    p.add_argument("--points", type=int)
    p.add_argument("--cfl", type=float)
    p.add_argument("--steady-tol", type=float)
    p.add_argument("--theta", type=float, help="0 = explicit Euler, >0 implicit accelerator")
    p.add_argument("--max-time", type=float)
    p.add_argument("--wall-limit", type=float)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--flux", choices=["neg_identity", "neg_log"])


def build_parser():
    parser = _Parser(prog="sigmaflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="case label, constants and limit class")
    _add_problem_args(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("stationary", help="analytic limit profile")
    _add_problem_args(p)
    p.add_argument("--points", type=int)
    p.add_argument("--out")

    p = sub.add_parser("lambda", help="contact point of the limit")
    _add_problem_args(p)

    p = sub.add_parser("evolve", help="run the flow and write snapshots")
    _add_problem_args(p)
    _add_scheme_args(p)
    p.add_argument("--out")

    p = sub.add_parser("obstacle", help="projected SOR oracle (P^n family)")
    _add_problem_args(p)
    p.add_argument("--points", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--psor-tol", type=float)
    p.add_argument("--out")

    p = sub.add_parser("phase-diagram", help="case labels over a parameter grid")
    p.add_argument("--family", choices=["pn", "xmn"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha-range")
    p.add_argument("--beta-range")
    p.add_argument("--b-range")
    p.add_argument("--bprime-range", dest="b_prime_range")
    p.add_argument("--resolution", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("report", help="one run per case with plot-ready output")
    _add_problem_args(p)
    _add_scheme_args(p)
    p.add_argument("--alphas", help="comma-separated alpha values (default: one per case)")
    p.add_argument("--bs", help="comma-separated b values for X_{m,n}")
    p.add_argument("--out")
    return parser


def resolve(args, config):
    for key, value in config.items():
        if key in ("command", "config"):
            continue
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    # config values arrive as text
    for key in ("n", "k", "m", "points", "resolution", "workers", "snapshot_every"):
        value = getattr(args, key, None)
        if isinstance(value, str):
            setattr(args, key, int(value))
    for key in ("cfl", "steady_tol", "theta", "max_time", "wall_limit", "tol", "omega",
                "psor_tol"):
        value = getattr(args, key, None)
        if isinstance(value, str):
            setattr(args, key, float(value))
    return args


def make_problem(args):
    if args.family == "pn":
        if args.n is None or args.k is None or args.alpha is None or args.beta is None:
            raise UsageError("pn needs --n, --k, --alpha, --beta")
        return PnProblem(args.n, args.k, parse_number(args.alpha), parse_number(args.beta))
    if args.n is None or args.k is None or args.b is None or args.b_prime is None:
        raise UsageError("xmn needs --n, --k, --b, --bprime (and --m)")
    return XmnProblem(args.m, args.n, args.k, parse_number(args.b), parse_number(args.b_prime))


def classify_report(problem, tol=1e-12) -> dict:
    if isinstance(problem, PnProblem):
        label = classify_pn(problem, tol)
        out = {
            "family": "pn", "n": problem.n, "k": problem.k,
            "alpha": float(problem.alpha), "beta": float(problem.beta),
            "ratio": float(ratio_pn(problem)), "threshold": float(threshold_pn(problem)),
            "case": label.variant, "detail": label.detail,
        }
        if label.variant == BLOWUP:
            lam = solve_lambda_pn(problem)
            out["lambda"] = lam
            out["limit_class"] = limit_class(problem, lam).as_dict()
        return out
    ck = topological_constant_xmn(problem)
    label = classify_xmn(problem, ck.exact if ck.exact is not None else ck.value, tol)
    out = {
        "family": "xmn", "m": problem.m, "n": problem.n, "k": problem.k,
        "b": float(problem.b), "b_prime": float(problem.b_prime),
        "ck": ck.value, "threshold": comb(problem.n, problem.k) if problem.k <= problem.n else None,
        "case": label.variant, "detail": None,
    }
    if ck.exact is not None:
        out["ck_exact"] = str(ck.exact)
    if label.variant == BLOWUP:
        sysv = solve_xmn_system(problem)
        out.update({"lambda": sysv.lam, "level_alpha": sysv.alpha, "level_beta": sysv.beta,
                    "limit_class": limit_class(problem, sysv.lam).as_dict()})
    return out


def cmd_classify(args):
    rep = classify_report(make_problem(args), args.tol)
    if args.json:
        print(json.dumps(rep, indent=2))
        return EXIT_OK
    label = rep["case"] + (f" ({rep['detail']})" if rep["detail"] else "")
    print(f"case: {label}")
    if rep["family"] == "pn":
        print(f"ratio: {rep['ratio']:.10g}  threshold (n-k)/n: {rep['threshold']:.10g}")
    else:
        thr = rep["threshold"]
        print(f"c_k: {rep['ck']:.10g}  threshold C(n,k): {thr if thr is not None else 'none (k > n)'}")
    if "lambda" in rep:
        print(f"lambda: {rep['lambda']:.10g}")
        cls = rep["limit_class"]
        print("limit class: " + ", ".join(f"{k}={v:.10g}" for k, v in cls.items()))
    return EXIT_OK


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_stationary(args):
    problem = make_problem(args)
    s = stationary_for(problem)
    print(f"case: {s.label}")
    print(f"lambda: {s.lam:.10g}")
    print(f"branch: {s.branch[0]:.10g}, {s.branch[1]:.10g}")
    print(f"sigma_k constant: {s.constant:.10g}")
    if args.out:
        from .stationary import export_csv as write_profile

        x = np.linspace(s.x_lo, s.x_hi, args.points)
        path = args.out if args.out.endswith(".csv") else os.path.join(_ensure_dir(args.out), "stationary.csv")
        write_profile(s, x, path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_lambda(args):
    problem = make_problem(args)
    if isinstance(problem, PnProblem):
        label = classify_pn(problem)
        if label.variant == "Smooth":
            print(f"case {label}: no flat part, lambda = 1")
            return EXIT_OK
        print(f"{solve_lambda_pn(problem):.12g}")
        return EXIT_OK
    sysv = solve_xmn_system(problem)
    print(f"lambda: {sysv.lam:.12g}  alpha: {sysv.alpha:.12g}  beta: {sysv.beta:.12g}")
    return EXIT_OK


def _scheme(args):
    return SchemeConfig(cfl=args.cfl, steady_tol=args.steady_tol, max_time=args.max_time,
                        theta=args.theta, snapshot_every=args.snapshot_every,
                        wall_limit=args.wall_limit)


def run_and_write(problem, args, out_dir, tag=""):
    from .diagnostics import lambda_estimate

    fp = FlowProblem(problem, flux=flux_by_name(args.flux))
    result = evolve(fp, args.points, _scheme(args), keep_states=True)
    x = result.state.x
    ref = result.reference(x) if result.reference is not None else np.full_like(x, np.nan)
    prefix = f"{tag}_" if tag else ""
    with open(os.path.join(out_dir, f"{prefix}snapshots.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "f", "fprime", "sigma"])
        snaps = [(result.records[0]["t"], result.initial)]
        for rec in result.records[1:]:
            if "values" in rec:
                snaps.append((rec["t"], rec["values"]))
        for t, item in snaps:
            if hasattr(item, "f"):
                f = item.f
                state = item
            else:
                f = item
                state = type(result.state)(t, fp.from_f(f), fp.variable, fp, x)
            fx = np.gradient(f, x, edge_order=2)
            sig = sigma_profile(state)
            for row in zip(x, f, fx, sig):
                w.writerow([f"{t:.10g}"] + [f"{v:.10g}" for v in row])
    with open(os.path.join(out_dir, f"{prefix}cases.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "f0", "f_final", "f_analytic"])
        for row in zip(x, result.initial.f, result.state.f, ref):
            w.writerow([f"{v:.10g}" for v in row])
    label = result.reference.label if result.reference is not None else None
    summary = {
        "schema_version": SCHEMA_VERSION,
        "problem": classify_report(problem),
        "case": label.variant if label is not None else None,
        "detail": label.detail if label is not None else None,
        "status": result.status,
        "steps": result.steps,
        "t_final": result.state.t,
        "final_residual": result.residual,
        "wall_time": result.wall_time,
        "dt_halvings": result.halvings,
        "points": args.points,
        "theta": args.theta,
        "flux": args.flux,
        "sup_error": result.sup_error(),
        "lambda_estimate": lambda_estimate(result.state),
        "lambda_exact": result.reference.lam if result.reference is not None else None,
    }
    if result.status != CONVERGED:
        # no case label is forced onto a run that did not settle
        summary["case"] = "indeterminate"
    with open(os.path.join(out_dir, f"{prefix}summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return result, summary


def cmd_evolve(args):
    problem = make_problem(args)
    out_dir = _ensure_dir(args.out or ".")
    result, summary = run_and_write(problem, args, out_dir)
    print(f"status: {summary['status']}  steps: {summary['steps']}  "
          f"residual: {summary['final_residual']:.3g}")
    if summary["sup_error"] is not None:
        print(f"sup error vs analytic limit: {summary['sup_error']:.3g}")
    print(f"lambda estimate: {summary['lambda_estimate']:.8g} (exact {summary['lambda_exact']:.8g})")
    return EXIT_OK if result.converged else EXIT_INDETERMINATE


def cmd_obstacle(args):
    problem = make_problem(args)
    if not isinstance(problem, PnProblem):
        raise UsageError("the obstacle oracle is defined for the pn family")
    op = ObstacleProblem.from_pn(problem)
    sol = solve_psor(op, args.points, args.omega, args.psor_tol)
    res = complementarity_residual(sol.values, op)
    s = stationary_for(problem)
    err = float(np.max(np.abs(sol.f - s(sol.x))))
    print(f"sweeps: {sol.sweeps}  contact point: {sol.lam:.8g} (analytic {s.lam:.8g})")
    print(f"complementarity: violation {res[0]:.3g}, free {res[1]:.3g}, contact {res[2]:.3g}")
    print(f"sup error vs analytic limit: {err:.3g}")
    if args.out:
        path = args.out if args.out.endswith(".csv") else os.path.join(_ensure_dir(args.out), "obstacle.csv")
        export_csv(sol, op, path)
        print(f"wrote {path}")
    return EXIT_OK


def _grid(lo, hi, count):
    return [lo + (hi - lo) * Fraction(i, count - 1) for i in range(count)]


def _phase_row(task):
    family, n, k, m, outer, inner = task
    rows = []
    for value in inner:
        if family == "pn":
            p = PnProblem(n, k, value, outer)
            label = classify_pn(p)
            rows.append([float(value), float(outer), float(ratio_pn(p)),
                         float(threshold_pn(p)), label.variant, label.detail])
        else:
            p = XmnProblem(m, n, k, value, outer)
            ck = topological_constant_xmn(p)
            label = classify_xmn(p, ck.exact)
            thr = comb(n, k) if k <= n else ""
            rows.append([float(value), float(outer), ck.value, thr, label.variant, ""])
    return rows


def phase_diagram(family, n, k, m, range_inner, range_outer, resolution, workers=1):
    """Rows of labels; the inner parameter (alpha or b) varies fastest."""
    inner = _grid(*range_inner, resolution)
    outer = _grid(*range_outer, resolution)
    tasks = [(family, n, k, m, o, inner) for o in outer]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_phase_row, tasks))
    else:
        chunks = [_phase_row(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def cmd_phase_diagram(args):
    if args.n is None or args.k is None:
        raise UsageError("phase-diagram needs --n and --k")
    if args.family == "pn":
        inner = parse_range(args.alpha_range or "1.05,3")
        outer = parse_range(args.beta_range or "1.05,3")
        PnProblem(args.n, args.k, Fraction(2), Fraction(2))  # validates n, k
        if inner[0] <= 1 or outer[0] <= 1:
            raise UsageError("alpha and beta ranges must lie above 1")
        header = ["alpha", "beta", "ratio", "threshold", "case", "detail"]
    else:
        inner = parse_range(args.b_range or "0.05,2")
        outer = parse_range(args.b_prime_range or "0.05,2")
        XmnProblem(args.m, args.n, args.k, Fraction(1), Fraction(1))
        if inner[0] <= 0 or outer[0] <= 0:
            raise UsageError("b and b' ranges must be positive")
        header = ["b", "b_prime", "ck", "threshold", "case", "detail"]
    rows = phase_diagram(args.family, args.n, args.k, args.m, inner, outer, args.resolution,
                         args.workers)
    out = args.out
    if out is None:
        fh = sys.stdout
    else:
        path = out if out.endswith(".csv") else os.path.join(_ensure_dir(out), "phase_diagram.csv")
        fh = open(path, "w", newline="")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
            print(f"wrote {path} ({len(rows)} cells)")
    return EXIT_OK


def default_alphas(n, k, beta):
    """One alpha per case: concave, convex interior, tangent, obstacle."""
    beta = float(beta)
    crit = critical_alpha_pn(n, k, beta)
    if k == n:
        return [1.5 * beta, 0.5 * (1 + beta)]
    return [1.5 * beta, 0.5 * (crit + beta), crit, 0.5 * (1 + crit)]


def cmd_report(args):
    out_dir = _ensure_dir(args.out or ".")
    base = make_problem(args) if (args.alpha is not None or args.b is not None) else None
    runs = []
    worst = EXIT_OK
    if args.family == "pn":
        if args.n is None or args.k is None or args.beta is None:
            raise UsageError("report needs --n, --k, --beta")
        beta = parse_number(args.beta)
        if args.alphas:
            alphas = [parse_number(a) for a in args.alphas.split(",")]
        elif base is not None:
            alphas = [base.alpha]
        else:
            alphas = default_alphas(args.n, args.k, beta)
        problems = [PnProblem(args.n, args.k, a, beta) for a in alphas]
    else:
        if args.n is None or args.k is None or args.b_prime is None:
            raise UsageError("report needs --n, --k, --bprime")
        bp = parse_number(args.b_prime)
        bs = [parse_number(b) for b in args.bs.split(",")] if args.bs else [base.b if base else Fraction(1)]
        problems = [XmnProblem(args.m, args.n, args.k, b, bp) for b in bs]
    for i, problem in enumerate(problems):
        result, summary = run_and_write(problem, args, out_dir, tag=f"case{i + 1}")
        runs.append(summary)
        if not result.converged:
            worst = EXIT_INDETERMINATE
        print(f"case{i + 1}: {summary['problem']['case']:<14} status {summary['status']:<13} "
              f"sup error {summary['sup_error']:.3g}")
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "runs": runs}, fh, indent=2)
    return worst


COMMANDS = {
    "classify": cmd_classify,
    "stationary": cmd_stationary,
    "lambda": cmd_lambda,
    "evolve": cmd_evolve,
    "obstacle": cmd_obstacle,
    "phase-diagram": cmd_phase_diagram,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = read_config(args.config) if args.config else {}
        args = resolve(args, config)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except (UsageError, InvalidProblemError, CaseMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SchemeError, RelaxationError, InconsistencyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SigmaflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
