"""Command-line front end.

    cvxrepair simproj --input problem.json [--output report.json]
    cvxrepair bounds  --input system.json
    cvxrepair linear  --input linear.json --output cert.json
    cvxrepair verify  --cert cert.json [--input linear.json]

Exit codes: 0 success, 2 bad input or arguments, 3 a solve did not converge
(or nonattainment is suspected; the partial report is still written),
4 verification failed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, cvxfeas, linexact, simproj
from .convexsets import set_from_dict
from .coremath import weighted_pnorm
from .errors import ConvergenceError, DomainError, InvalidInputError, PreconditionError
from .schema import (check_problem, check_report, dumps, envelope, load_json, parse_convex_system,
                     parse_linear, parse_simproj, split_batch)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGED = 3
EXIT_VERIFY_FAILED = 4

ENV_TOL = "CVXREPAIR_TOL"
ENV_MAX_ITER = "CVXREPAIR_MAX_ITER"

COMMAND_KIND = {"simproj": "simproj", "bounds": "convex-system", "linear": "linear-system"}
VERIFY_TOL = 1e-8

_INPUT_ERRORS = (InvalidInputError, DomainError, PreconditionError)


class UsageError(Exception):
    pass


def _vec(x):
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


# ---------------------------------------------------------------- solvers


def run_simproj(d, opts) -> dict:
    problem = parse_simproj(d, opts.get("p"), opts.get("alpha"))
    x0 = d.get("x0")
    if x0 is None and opts.get("seed") is not None:
        rng = np.random.default_rng(opts["seed"])
        start = problem.start_point()
        x0 = start + (1.0 + np.linalg.norm(start)) * rng.standard_normal(problem.dim)
    kw = {k: opts[k] for k in ("tol", "max_iter") if opts.get(k) is not None}
    try:
        sol = simproj.solve(problem, x0=x0, **kw)
    except ConvergenceError as exc:
        sol = exc.best
    trans = [np.asarray(u) for u in sol.translations]
    solution = {
        "point": _vec(sol.point),
        "value": sol.value,
        "translations": [_vec(u) for u in trans],
        "translation_norm": weighted_pnorm(trans, problem.weights),
        "p": problem.p,
        "alpha": _vec(problem.alpha),
    }
    diag = {
        "iterations": sol.iterations,
        "method": sol.method,
        "step_residual": sol.step_residual,
        "gradient_residual": sol.gradient_residual,
        "fixed_point_residual": sol.fixed_point_residual,
    }
    if "gap" in sol.extra:
        diag["set_gap"] = sol.extra["gap"]
    return {"kind": "simproj", "status": sol.status, "solution": solution, "diagnostics": diag}


def _resolve_bound_data(system, d, seed):
    spec = d.get("bounds") or {}
    C = spec.get("C")
    C = None if C is None else set_from_dict(C)
    u = spec.get("u", "estimate")
    u_source = "given"
    if isinstance(u, str):
        if u != "estimate":
            raise InvalidInputError(f"bounds.u must be a list or 'estimate', got {u!r}")
        u = cvxfeas.estimate_upper_bounds(system, C, seed=0 if seed is None else seed)
        u_source = "estimated by sampling (heuristic)"
    l = spec.get("l", "catalog")
    l_source = "given"
    if isinstance(l, str):
        if l != "catalog":
            raise InvalidInputError(f"bounds.l must be a list or 'catalog', got {l!r}")
        l = [cvxfeas.catalog_lower_bound(g, b) for g, b in zip(system.constraints, system.rhs)]
        missing = [i for i, v in enumerate(l) if v is None]
        if missing:
            raise InvalidInputError(f"no catalog lower bound for constraints {missing}; give bounds.l")
        l_source = "catalog"
    data = cvxfeas.BoundData(u, l, C)
    return data, {"u": _vec(data.u), "l": _vec(data.l), "u_source": u_source,
                  "l_source": l_source, "C": None if C is None else C.to_dict()}


def run_bounds(d, opts) -> dict:
    system = parse_convex_system(d, opts.get("p"))
    data, data_echo = _resolve_bound_data(system, d, opts.get("seed"))
    kw = {k: opts[k] for k in ("tol", "max_iter") if opts.get(k) is not None}
    b = cvxfeas.bound_distance(system, data, **kw)
    res_kw = {"max_iter": opts["max_iter"]} if opts.get("max_iter") else {}
    exact = cvxfeas.minimize_residual(system, **res_kw)
    status = b.status if b.status != simproj.CONVERGED else exact.status
    solution = {
        "lower": b.lower,
        "upper": b.upper,
        "lower_vector": None if b.lower_vector is None else _vec(b.lower_vector),
        "upper_vector": _vec(b.upper_vector),
        "argmin_points": {k: None if v is None else _vec(v) for k, v in b.argmin_points.items()},
        "residual_minimum": {"point": _vec(exact.point), "value": exact.value,
                             "distance": exact.distance, "certificate": exact.certificate,
                             "status": exact.status},
        "bound_data": data_echo,
        "p": system.p,
    }
    diag = {"messages": list(b.messages), "residual_iterations": exact.iterations}
    return {"kind": "convex-system", "status": status, "solution": solution, "diagnostics": diag}


def run_linear(d, opts) -> dict:
    system = parse_linear(d)
    kw = {k: opts[k] for k in ("tol", "max_iter") if opts.get(k) is not None}
    cert = linexact.solve_exact(system, seed=opts.get("seed"), **kw)
    passed, report = linexact.verify_kkt(system, cert)
    solution = {
        "x0": _vec(cert.x0),
        "h0": _vec(cert.h0),
        "distance": cert.distance,
        "repaired_rhs": _vec(cert.repaired_rhs),
        "kkt_multipliers": {"lambda": _vec(cert.lam), "mu": _vec(cert.mu)},
    }
    diag = {
        "iterations": cert.iterations,
        "fixed_point_residual": cert.fixed_point_residual,
        "kkt_residuals": report.residuals,
        "kkt_passed": passed,
        "optimality_residuals": linexact.optimality_residuals(system, cert),
    }
    return {"kind": "linear-system", "status": cert.status, "solution": solution, "diagnostics": diag}


RUNNERS = {"simproj": run_simproj, "bounds": run_bounds, "linear": run_linear}


def _solve_one(job):
    command, d, opts = job
    t0 = time.perf_counter()
    body = RUNNERS[command](d, opts)
    if opts.get("timing"):
        body["diagnostics"]["wall_time_s"] = time.perf_counter() - t0
    body["problem"] = d
    return body


# ---------------------------------------------------------------- verification


def _close(a, b, tol=VERIFY_TOL):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol * (1.0 + np.abs(b))))


def verify_linear(report, d) -> list:
    system = parse_linear(d)
    sol = report["solution"]
    cert = linexact.RepairCertificate(
        sol["x0"], sol["h0"], sol["repaired_rhs"],
        multipliers=(np.asarray(sol["kkt_multipliers"]["lambda"], dtype=float),
                     np.asarray(sol["kkt_multipliers"]["mu"], dtype=float)))
    problems = []
    passed, kkt = linexact.verify_kkt(system, cert)
    if not passed:
        problems.append(kkt.summary())
    for name, r in linexact.optimality_residuals(system, cert).items():
        if r > VERIFY_TOL:
            problems.append(f"{name} residual {r:.3e}")
    if not _close(cert.repaired_rhs, system.rhs + cert.h0):
        problems.append("repaired_rhs differs from b + h0")
    if not abs(sol["distance"] - cert.distance) <= VERIFY_TOL:
        problems.append("distance differs from ||h0||")
    return problems


def verify_simproj(report, d) -> list:
    sol = report["solution"]
    problem = parse_simproj(d, sol["p"], sol["alpha"])
    x = np.asarray(sol["point"], dtype=float)
    problems = []
    trans = [x - S.project(x) for S in problem.sets]
    if not _close(np.array(sol["translations"]), np.array(trans)):
        problems.append("translations differ from x - P_i(x)")
    value = float(simproj.objective(problem, x))
    if not abs(value - sol["value"]) <= VERIFY_TOL * (1.0 + abs(value)):
        problems.append(f"stored value {sol['value']} but objective is {value}")
    if problem.p > 1:
        r = simproj.gradient_residual(problem, x)
        if not r <= simproj.CERT_TOL:
            problems.append(f"gradient residual {r:.3e}")
    else:
        a1, a2 = problem.alpha
        S1, S2 = problem.sets
        if abs(a1 - a2) <= 1e-12:
            if not simproj.membership_p1_equal(S1, S2, x, tol=VERIFY_TOL):
                problems.append("point is not a minimizer of (d_1 + d_2)/2")
        else:
            heavy, light = (S1, S2) if a1 > a2 else (S2, S1)
            if heavy.distance(x) > VERIFY_TOL:
                problems.append("point is not in the heavier-weighted set")
            y = heavy.project(light.project(x))
            if np.linalg.norm(y - x) > VERIFY_TOL * (1.0 + np.linalg.norm(x)):
                problems.append("point is not a nearest point to the other set")
    return problems


def verify_bounds(report, d) -> list:
    sol = report["solution"]
    system = parse_convex_system(d, sol["p"])
    bd = sol["bound_data"]
    C = None if bd["C"] is None else set_from_dict(bd["C"])
    u, l = np.asarray(bd["u"]), np.asarray(bd["l"])
    problems = []
    for which, w, vec_key in (("upper", u, "upper_vector"), ("lower", l, "lower_vector")):
        pt = sol["argmin_points"].get(which)
        if pt is None:
            continue
        x = np.asarray(pt, dtype=float)
        dist = np.array([float(S.distance(x)) for S in system.sets])
        if not _close(w * dist, sol[vec_key]):
            problems.append(f"{vec_key} does not match the stored argmin point")
        active = [i for i, (g, b) in enumerate(zip(system.constraints, system.rhs))
                  if not cvxfeas._is_vacuous(g, b) and w[i] > 0]
        if len(active) >= 2:
            prob = simproj.SimProjProblem.build([system.sets[i] for i in active],
                                                w[active] ** system.p, system.p)
            if which == "upper" and C is not None:
                r = simproj.projected_gradient_residual(prob, C, x)
            else:
                r = simproj.gradient_residual(prob, x)
            if not r <= simproj.CERT_TOL:
                problems.append(f"{which} argmin residual {r:.3e}")
    rm = sol["residual_minimum"]
    val = cvxfeas.residual_value(system, rm["point"])
    if not abs(val - rm["value"]) <= VERIFY_TOL * (1.0 + abs(val)):
        problems.append("stored residual value does not match its point")
    return problems


VERIFIERS = {"linear-system": verify_linear, "simproj": verify_simproj,
             "convex-system": verify_bounds}


# ---------------------------------------------------------------- driver


def _env_default(name, cast):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"environment variable {name}={raw!r} is not a valid {cast.__name__}") from None


def _alpha(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--alpha expects comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvxrepair", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", required=True, help="problem file (JSON)")
        p.add_argument("--output", help="report file; stdout if omitted")
        p.add_argument("--force", action="store_true", help="overwrite an existing report")

    for name, help_ in (("simproj", "weighted simultaneous projection"),
                        ("bounds", "distance-to-feasibility bounds for a convex system"),
                        ("linear", "exact repair of a linear system")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--p", type=float, help="power / parameter-space norm")
        if name == "simproj":
            p.add_argument("--alpha", type=_alpha, help="comma-separated weights")
        p.add_argument("--tol", type=float, help=f"iterate tolerance (env {ENV_TOL})")
        p.add_argument("--max-iter", type=int, help=f"iteration budget (env {ENV_MAX_ITER})")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for batch files")
        p.add_argument("--seed", type=int, help="seed for randomized starts")
        p.add_argument("--timing", action="store_true", help="record wall time (breaks byte determinism)")

    p = sub.add_parser("verify", help="re-check a stored report")
    p.add_argument("--cert", required=True, help="report to check")
    p.add_argument("--input", help="problem file; defaults to the copy inside the report")
    return parser


def _write(text, path, force):
    if path is None:
        sys.stdout.write(text)
        return
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; reports are not overwritten (use --force)")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _summary(i, body):
    sol = body["solution"]
    if body["kind"] == "simproj":
        detail = f"value={sol['value']:.12g}"
    elif body["kind"] == "linear-system":
        detail = f"distance={sol['distance']:.12g}"
    else:
        lo = "n/a" if sol["lower"] is None else f"{sol['lower']:.12g}"
        detail = (f"lower={lo} distance={sol['residual_minimum']['distance']:.12g} "
                  f"upper={sol['upper']:.12g}")
    return f"[{i}] {body['kind']}: {body['status']} {detail}"


def _run_solve(args) -> int:
    opts = {
        "p": args.p,
        "alpha": getattr(args, "alpha", None),
        "tol": args.tol if args.tol is not None else _env_default(ENV_TOL, float),
        "max_iter": args.max_iter if args.max_iter is not None else _env_default(ENV_MAX_ITER, int),
        "seed": args.seed,
        "timing": args.timing,
    }
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    problems, batch = split_batch(load_json(args.input))
    want = COMMAND_KIND[args.command]
    for i, d in enumerate(problems):
        kind = check_problem(d)
        if kind != want:
            raise UsageError(f"problem {i} has kind {kind!r}; '{args.command}' expects {want!r}")
    # parse everything up front so bad input fails before any solving
    parse = {"simproj": lambda d: parse_simproj(d, opts["p"], opts["alpha"]),
             "bounds": lambda d: parse_convex_system(d, opts["p"]),
             "linear": parse_linear}[args.command]
    for d in problems:
        parse(d)
    jobs = [(args.command, d, opts) for d in problems]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            bodies = list(pool.map(_solve_one, jobs))
    else:
        bodies = [_solve_one(j) for j in jobs]
    for i, body in enumerate(bodies):
        print(_summary(i, body), file=sys.stderr)
    ok = all(b["status"] == simproj.CONVERGED for b in bodies)
    if batch:
        doc = envelope(args.command, {"status": simproj.CONVERGED if ok else simproj.NONCONVERGED,
                                      "reports": bodies})
    else:
        doc = envelope(args.command, bodies[0])
    _write(dumps(doc) + "\n", args.output, args.force)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _run_verify(args) -> int:
    report = load_json(args.cert)
    check_report(report)
    bodies = report["reports"] if "reports" in report else [report]
    if args.input is not None:
        problems, _ = split_batch(load_json(args.input))
        if len(problems) != len(bodies):
            raise UsageError(f"report has {len(bodies)} entries but input has {len(problems)} problems")
    else:
        problems = [b.get("problem") for b in bodies]
    failed = False
    for i, (body, d) in enumerate(zip(bodies, problems)):
        kind = check_problem(d)
        if kind != body.get("kind"):
            raise UsageError(f"entry {i}: report kind {body.get('kind')!r} vs problem kind {kind!r}")
        try:
            issues = VERIFIERS[kind](body, d)
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"entry {i}: malformed report ({exc})") from None
        if issues:
            failed = True
            print(f"[{i}] {kind}: FAIL - " + "; ".join(issues))
        else:
            print(f"[{i}] {kind}: ok")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return _run_verify(args)
        return _run_solve(args)
    except (UsageError, *_INPUT_ERRORS) as exc:
        print(f"cvxrepair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
