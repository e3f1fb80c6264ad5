"""Command line front end.

Commands: solve, sweep, simulate, verify, validate.  Exit codes: 0 all
requested checks pass, 1 a check failed, 2 usage or configuration error,
3 numeric failure (irreducibility, convergence, stencil positivity, step
size).

Every machine output embeds the resolved configuration, the seed, and a
sha256 hash of that configuration, and is written deterministically (sorted
keys, fixed float formatting via repr).  Wall-clock metadata and the worker
count live in a run_meta.json side file so that reruns of the same
configuration are byte-identical regardless of parallelism.
"""

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .eigen import (NoConvergenceError, NotIrreducibleError,
                    OscillatingPolicyError, domain_sweep, principal_eigenpair,
                    solve_semilinear, verification_tol)
from .expressions import ExpressionError, load_model
from .grid import grid_for_resolution
from .model import (builtin_certificate, check_lyapunov, make_builtin,
                    validate_model)
from .operator import MonotonicityViolation, assemble, constant_policy
from .simulate import (ControlMap, PathConfig, StepSizeError,
                       estimate_risk_sensitive_rate, feynman_kac_annulus,
                       mean_position_diagnostic, resolve_workers, simulate_paths)
from .verify import (lambda_equals_optimal_value, near_monotone_suite,
                     random_policies, validate_near_monotone, verify_optimality)

NUMERIC_ERRORS = (MonotonicityViolation, NotIrreducibleError,
                  NoConvergenceError, OscillatingPolicyError, StepSizeError,
                  np.linalg.LinAlgError)


class UsageError(ValueError):
    pass


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _sanitize(dataclasses.asdict(obj))
    return obj


def _canonical_json(payload):
    return json.dumps(_sanitize(payload), sort_keys=True, indent=2) + "\n"


def _config_hash(config):
    return hashlib.sha256(
        json.dumps(_sanitize(config), sort_keys=True).encode()
    ).hexdigest()


def _write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        fh.write(_canonical_json(payload))


def _emit(outdir, name, config, body):
    os.makedirs(outdir, exist_ok=True)
    payload = dict(body)
    payload["config"] = config
    payload["config_hash"] = _config_hash(config)
    path = "%s/%s" % (outdir, name)
    _write_json(path, payload)
    return path


def _write_meta(outdir, started, args):
    meta = {
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "duration_sec": time.time() - _write_meta.t0,
        "workers": resolve_workers(getattr(args, "workers", None)),
        "version": __version__,
        "argv": sys.argv[1:],
    }
    _write_json("%s/run_meta.json" % outdir, meta)


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError("expected comma-separated numbers, got %r" % text)


def _parse_param(text):
    if "=" not in text:
        raise UsageError("--param expects key=value, got %r" % text)
    key, raw = text.split("=", 1)
    vals = _parse_floats(raw)
    return key.strip(), (vals[0] if len(vals) == 1 else tuple(vals))


def _model_from_args(args):
    if args.model:
        try:
            return load_model(args.model)
        except FileNotFoundError:
            raise UsageError("model config file not found: %s" % args.model)
        except (json.JSONDecodeError, ExpressionError, KeyError) as exc:
            raise UsageError("bad model config: %s" % exc)
    if not args.builtin:
        raise UsageError("provide --builtin NAME or --model FILE")
    params = {}
    for kv in args.param or ():
        key, val = _parse_param(kv)
        params[key] = val
    if getattr(args, "q", None) is not None:
        params["q"] = args.q
    if getattr(args, "controls", None):
        params["controls"] = tuple(_parse_floats(args.controls))
    try:
        return make_builtin(args.builtin, **params)
    except (KeyError, TypeError) as exc:
        raise UsageError(str(exc))


def _model_config(args, model):
    cfg = {"builtin": args.builtin, "file": args.model,
           "params": {k: _sanitize(v) for k, v in model.params.items()},
           "name": model.name}
    return cfg


def _grid_for(args, model, radius=None):
    r = radius if radius is not None else args.radius
    return grid_for_resolution(model.dim, r, args.nodes_per_unit)


def _policy_histogram(policy, n_controls):
    counts = np.bincount(np.asarray(policy).reshape(-1), minlength=n_controls)
    return {str(i): int(c) for i, c in enumerate(counts)}


def _write_psi_csv(path, grid, eigenpair):
    X = grid.interior_points()
    with open(path, "w", newline="\n") as fh:
        cols = ["x%d" % (i + 1) for i in range(grid.dim)]
        fh.write(",".join(cols + ["regime", "value"]) + "\n")
        psi = eigenpair.eigenfunction
        for k in range(psi.shape[0]):
            for j in range(grid.num_interior):
                coords = ",".join("%r" % float(v) for v in X[j])
                fh.write("%s,%d,%r\n" % (coords, k, float(psi[k, j])))


def _add_model_flags(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--builtin", help="built-in model name (lq, ou2, bounded2d, dip)")
    group.add_argument("--model", help="path to a JSON model config")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="builtin parameter override, repeatable")
    p.add_argument("--q", type=float, help="shortcut for the cost coefficient q")
    p.add_argument("--controls", help="comma-separated control set, e.g. 1,2")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: RISKSWITCH_WORKERS or 1)")


def cmd_solve(args):
    model = _model_from_args(args)
    grid = _grid_for(args, model)
    sol = solve_semilinear(model, grid, tol=args.tol,
                           max_policy_iters=args.max_policy_iters)
    if args.dump_operator:
        op = assemble(model, grid, sol.policy)
        op.write_matrix_market(args.dump_operator)
    config = {"command": "solve", "model": _model_config(args, model),
              "radius": args.radius, "nodes_per_unit": args.nodes_per_unit,
              "tol": args.tol, "max_policy_iters": args.max_policy_iters,
              "seed": args.seed}
    body = {
        "lambda": sol.eigenpair.eigenvalue,
        "radius": args.radius,
        "iterations": sol.policy_iterations,
        "residual": sol.eigenpair.residual,
        "policy_histogram": _policy_histogram(sol.policy, model.num_controls),
        "eigenvalue_trace": sol.eigenvalue_trace,
        "converged": sol.converged,
        "oscillated": sol.oscillated,
        "interior_nodes": grid.num_interior,
    }
    _emit(args.output_dir, "solve.json", config, body)
    _write_psi_csv("%s/psi.csv" % args.output_dir, grid, sol.eigenpair)
    return 0


def cmd_sweep(args):
    model = _model_from_args(args)
    radii = _parse_floats(args.radii)
    if any(b <= a for a, b in zip(radii, radii[1:])) or not radii:
        raise UsageError("--radii must be strictly increasing")
    sweep = domain_sweep(model, radii, args.nodes_per_unit, tol=args.tol)
    config = {"command": "sweep", "model": _model_config(args, model),
              "radii": radii, "nodes_per_unit": args.nodes_per_unit,
              "tol": args.tol, "seed": args.seed}
    body = {
        "entries": [
            {"radius": e.radius, "lambda": e.eigenvalue,
             "iterations": e.iterations,
             "policy_histogram": _policy_histogram(e.policy, model.num_controls),
             "residual": e.eigenpair.residual}
            for e in sweep.entries
        ],
        "monotonicity_certificate": sweep.monotone,
        "extrapolated": sweep.extrapolated,
        "lambda_star": sweep.lambda_star,
        "increments": sweep.increments,
    }
    _emit(args.output_dir, "sweep.json", config, body)
    return 0 if sweep.monotone else 1


def cmd_simulate(args):
    model = _model_from_args(args)
    config_sim = PathConfig(step=args.step, horizon=args.horizon,
                            seed=args.seed, paths=args.paths)
    x0 = _parse_floats(args.x0) if args.x0 else None
    control = ControlMap.constant(args.control_index)
    config = {"command": "simulate", "model": _model_config(args, model),
              "functional": args.functional, "step": args.step,
              "horizon": args.horizon, "paths": args.paths,
              "control_index": args.control_index, "x0": x0, "k0": args.k0,
              "lambda_ref": args.lambda_ref, "seed": args.seed}
    if args.functional == "rate":
        est = estimate_risk_sensitive_rate(
            model, control, config_sim, lambda_ref=args.lambda_ref,
            x0=x0, k0=args.k0, workers=args.workers)
        _emit(args.output_dir, "estimate.json", config, est.as_dict())
        return 0
    if args.functional == "mean-position":
        report = mean_position_diagnostic(
            model, control, config_sim, x0=x0, k0=args.k0, workers=args.workers)
        _emit(args.output_dir, "diagnostic.json", config,
              {**report.as_dict(), "estimates": [e.as_dict() for e in report.estimates]})
        return 0 if report.passed else 1
    if args.functional == "paths":
        batch = simulate_paths(model, control, config_sim, x0=x0, k0=args.k0,
                               workers=args.workers)
        batch.write_csv("%s/paths.csv" % args.output_dir)
        _emit(args.output_dir, "paths.json", config, {
            "paths": batch.paths,
            "n_steps": config_sim.n_steps,
            "mean_final_abs": float(np.mean(np.linalg.norm(batch.positions[:, -1], axis=1))),
            "mean_integrated_cost": float(np.mean(batch.integrated_cost)),
            "switch_count_mean": float(np.mean(batch.switch_counts())),
        })
        return 0
    raise UsageError("unknown functional %r" % args.functional)


def _parse_starts(text, dim):
    starts = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            coords, k = part.rsplit(":", 1)
            x = [float(v) for v in coords.split(",")]
            if len(x) != dim:
                raise ValueError
            starts.append((np.asarray(x), int(k)))
        except ValueError:
            raise UsageError(
                "bad start %r; expected x1,..,x%d:regime" % (part, dim))
    if not starts:
        raise UsageError("no start points parsed from %r" % text)
    return starts


def _default_starts(model, grid, r_inner, count=5):
    """Annulus start points spread over both regimes and both signs."""
    lo = r_inner + 0.25 * (grid.radius - r_inner)
    hi = r_inner + 0.65 * (grid.radius - r_inner)
    radii = np.linspace(lo, hi, count)
    starts = []
    for i, r in enumerate(radii):
        x = np.zeros(model.dim)
        x[0] = r if i % 2 == 0 else -r
        starts.append((x, i % model.num_regimes))
    return starts


def cmd_verify(args):
    model = _model_from_args(args)
    grid = _grid_for(args, model)
    checks = {}
    failed = []
    flagged = []

    hyp = validate_model(model, box_radius=grid.radius, samples=args.samples,
                         seed=args.seed)
    checks["hypotheses"] = hyp.as_dict()
    if not hyp.passed:
        failed.append("hypotheses")

    cert = builtin_certificate(model)
    if cert is not None:
        cert_grid = grid_for_resolution(model.dim, min(grid.radius, 4.0),
                                        max(args.nodes_per_unit // 4, 8))
        report = check_lyapunov(model, cert, cert_grid)
        checks["certificate"] = report.as_dict()
        if report.status == "fail":
            failed.append("certificate")
        elif report.status == "inconclusive":
            flagged.append("certificate")

    # eig_tol tight so the optimality comparisons are not dominated by
    # eigensolver noise (the auto tolerance leaves ~1e-10 in lambda)
    eig_tol = verification_tol(
        assemble(model, grid, constant_policy(grid, model.num_regimes)))
    sol = solve_semilinear(model, grid, tol=args.tol,
                           max_policy_iters=args.max_policy_iters,
                           eig_tol=eig_tol)
    alt = random_policies(model, grid, args.alt_policies, seed=args.seed)
    opt = verify_optimality(model, grid, alt, solution=sol, eig_tol=eig_tol)
    checks["optimality"] = opt.as_dict()
    if not opt.passed:
        failed.append("optimality")

    if not args.skip_simulation:
        sim = PathConfig(step=args.step, horizon=args.horizon, seed=args.seed,
                         paths=args.paths)
        match = lambda_equals_optimal_value(
            model, grid, args.rate_policies, sim, seed=args.seed,
            workers=args.workers, solution=sol)
        checks["lambda_match"] = match.as_dict()
        if not match.passed:
            failed.append("lambda_match")
        if match.flagged:
            flagged.append("lambda_match")

        fk_cfg = PathConfig(step=args.step, horizon=args.fk_horizon,
                            seed=args.seed, paths=args.paths)
        if args.starts:
            starts = _parse_starts(args.starts, model.dim)
        else:
            starts = _default_starts(model, grid, args.inner_radius)
        pair = sol.eigenpair
        if args.lambda_ref is not None:
            pair = dataclasses.replace(pair, eigenvalue=args.lambda_ref)
        fk = feynman_kac_annulus(model, sol.policy, pair, grid,
                                 args.inner_radius, starts, fk_cfg,
                                 workers=args.workers)
        checks["feynman_kac"] = fk.as_dict()
        if not fk.passed:
            failed.append("feynman_kac")

    config = {"command": "verify", "model": _model_config(args, model),
              "radius": args.radius, "nodes_per_unit": args.nodes_per_unit,
              "tol": args.tol, "max_policy_iters": args.max_policy_iters,
              "samples": args.samples, "alt_policies": args.alt_policies,
              "rate_policies": args.rate_policies,
              "skip_simulation": args.skip_simulation, "step": args.step,
              "horizon": args.horizon, "fk_horizon": args.fk_horizon,
              "paths": args.paths, "inner_radius": args.inner_radius,
              "starts": args.starts, "lambda_ref": args.lambda_ref,
              "seed": args.seed}
    body = {"lambda": sol.eigenpair.eigenvalue, "checks": checks,
            "failed": failed, "flagged": flagged, "passed": not failed}
    _emit(args.output_dir, "verify.json", config, body)
    return 0 if not failed else 1


def cmd_validate(args):
    model = _model_from_args(args)
    checks = {}
    failed = []
    flagged = []
    hyp = validate_model(model, box_radius=args.radius, samples=args.samples,
                         seed=args.seed)
    checks["hypotheses"] = hyp.as_dict()
    if not hyp.passed:
        failed.append("hypotheses")
    cert = builtin_certificate(model)
    if cert is not None:
        cert_grid = grid_for_resolution(model.dim, min(args.radius, 4.0),
                                        args.nodes_per_unit)
        report = check_lyapunov(model, cert, cert_grid)
        checks["certificate"] = report.as_dict()
        if report.status == "fail":
            failed.append("certificate")
        elif report.status == "inconclusive":
            flagged.append("certificate")
    if args.near_monotone:
        gate = validate_near_monotone(model, box_radius=args.radius,
                                      samples=args.samples, seed=args.seed)
        checks["near_monotone"] = gate.as_dict()
        if not gate.passed:
            failed.append("near_monotone")
    config = {"command": "validate", "model": _model_config(args, model),
              "radius": args.radius, "nodes_per_unit": args.nodes_per_unit,
              "samples": args.samples, "near_monotone": args.near_monotone,
              "seed": args.seed}
    body = {"checks": checks, "failed": failed, "flagged": flagged,
            "passed": not failed}
    _emit(args.output_dir, "validate.json", config, body)
    return 0 if not failed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riskswitch",
        description="Risk-sensitive control of regime-switching diffusions: "
                    "eigensolver, Monte Carlo, and verification checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="policy-iteration eigensolve on one box")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--nodes-per-unit", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-policy-iters", type=int, default=60)
    p.add_argument("--dump-operator", metavar="FILE.mtx",
                   help="dump the final assembled operator in Matrix Market format")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="domain exhaustion over increasing radii")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--radii", required=True, help="comma-separated increasing radii")
    p.add_argument("--nodes-per-unit", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-11)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo functionals under a constant control")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--functional", choices=["rate", "mean-position", "paths"],
                   default="rate")
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--control-index", type=int, default=0)
    p.add_argument("--x0", help="comma-separated start state (default origin)")
    p.add_argument("--k0", type=int, default=0)
    p.add_argument("--lambda-ref", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="full verification pipeline")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--nodes-per-unit", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-policy-iters", type=int, default=60)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--alt-policies", type=int, default=5,
                   help="random alternative policies for the optimality check")
    p.add_argument("--rate-policies", type=int, default=2,
                   help="random policies for the Monte Carlo rate check")
    p.add_argument("--skip-simulation", action="store_true",
                   help="run only the PDE-side checks")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--fk-horizon", type=float, default=2.0)
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--inner-radius", type=float, default=0.5)
    p.add_argument("--starts",
                   help="semicolon-separated x1,..,xd:regime start points")
    p.add_argument("--lambda-ref", type=float, default=None,
                   help="override the eigenvalue used in the Feynman-Kac check")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("validate", help="model hypothesis and certificate checks")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--nodes-per-unit", type=int, default=10)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--near-monotone", action="store_true")
    p.set_defaults(func=cmd_validate)

    return parser


def _error_payload(exc, code):
    return {"error": {"type": type(exc).__name__, "message": str(exc)},
            "exit_code": code}


def main(argv=None):
    _write_meta.t0 = time.time()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "output_dir", None):
        os.makedirs(args.output_dir, exist_ok=True)
    try:
        code = args.func(args)
    except UsageError as exc:
        print(_canonical_json(_error_payload(exc, 2)), end="")
        return 2
    except NUMERIC_ERRORS as exc:
        print(_canonical_json(_error_payload(exc, 3)), end="")
        return 3
    except (ValueError, OSError) as exc:
        print(_canonical_json(_error_payload(exc, 2)), end="")
        return 2
    try:
        _write_meta(args.output_dir, started, args)
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
