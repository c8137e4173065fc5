"""Command-line front end.

Every command writes one JSON document (or CSV for plot data) to ``--out`` or
stdout. Floats carry 17 significant digits and keys are sorted, so repeated
runs with the same arguments produce byte-identical output.

Exit codes: 0 success, 1 runtime error, 2 invalid input. Errors are also
printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from importlib import resources

import numpy as np

from . import __version__
from .landscape import certify_family_convexity, counterexample, endpoint_grid
from .model import (box_from_dict, econ_from_dict, family_from_dict, instance_from_dict, to_unit_mean_box,
                    validate)
from .qlength import SeriesConfig, lq, spitzer_terms_gamma
from .reform import objective, transform_point
from .simulate import SimConfig, simulate_wait
from .solve import JacksonInstance, SolveConfig, projected_gd, solve_jackson

COMMANDS = ("eval", "solve", "certify", "counterexample", "jackson", "simulate", "figure1")


class InputError(ValueError):
    """Bad arguments or an instance that fails validation (exit code 2)."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


# ---------------------------------------------------------------------------
# output


def _plain(obj):
    """Convert to JSON-ready builtins; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # str enums
        return obj.value
    return obj


class _Float17(float):
    def __repr__(self):
        return format(float(self), ".17g")


def _wrap_floats(obj):
    if isinstance(obj, dict):
        return {k: _wrap_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_wrap_floats(v) for v in obj]
    if isinstance(obj, float):
        return _Float17(obj)
    return obj


def dumps(obj) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""
    return _encode(_wrap_floats(_plain(obj)), 0) + "\n"


def _encode(obj, level):
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, _Float17):
        return repr(obj)
    return json.dumps(obj)


def load_schema(name: str) -> dict:
    text = resources.files("qhidden").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def check_schema(doc: dict, name: str) -> None:
    import jsonschema
    jsonschema.validate(json.loads(dumps(doc)), load_schema(name))


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# inputs


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(pairs):
    """['a.b=1', 'n=1,2'] -> {'a.b': 1, 'n': [1, 2]}."""
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise InputError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        if "," in raw and not raw.strip().startswith("["):
            out[key.strip()] = [_parse_value(p) for p in raw.split(",")]
        else:
            out[key.strip()] = _parse_value(raw)
    return out


def _apply_dotted(doc, overrides):
    doc = copy.deepcopy(doc)
    for key, val in overrides.items():
        if "." not in key:
            continue
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return doc


def _options(overrides):
    return {k: v for k, v in overrides.items() if "." not in k}


def _read_json(path):
    if path is None:
        raise InputError("--instance is required for this command")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _load_instance(args, overrides):
    doc = _apply_dotted(_read_json(args.instance), overrides)
    try:
        inst = instance_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed instance: {exc}") from exc
    if args.unit_mean:
        inst = type(inst)(inst.queue, to_unit_mean_box(inst.box, inst.queue), inst.econ)
    report = validate(inst)
    if not report.ok:
        raise InputError("instance failed validation",
                         [{"code": v.code, "message": v.message} for v in report])
    return inst


def _series_cfg(args, opts):
    kw = {k: opts[k] for k in ("n_max", "tail_tol", "mc_samples", "direct_terms", "mc_terms") if k in opts}
    return SeriesConfig(seed=args.seed, **kw)


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args, overrides):
    inst = _load_instance(args, overrides)
    cfg = _series_cfg(args, _options(overrides))
    b = inst.box
    lam = args.lam if args.lam is not None else 0.5 * (b.lambda_lo + b.lambda_hi)
    mu = args.mu if args.mu is not None else 0.5 * (b.mu_lo + b.mu_hi)
    rho = lam / mu
    q = lq(inst.queue, rho, cfg)
    doc = {"command": "eval", "lambda": lam, "mu": mu, "rho": rho, "mean_queue": q.value,
           "mean_queue_d1": q.d1, "mean_queue_d2": q.d2, "method": q.method.value,
           "tail_bound": q.tail_bound, "std_error": q.std_error, "objective": None}
    if b.contains(lam, mu):
        point = transform_point(args.param, b, [lam, mu])
        e = objective(args.param, inst, point, cfg)
        doc["objective"] = {"param": args.param, "point": point, "value": e.value, "grad": e.grad,
                            "tau": e.tau, "certified": e.certified}
    return doc


def _report_doc(rep, command):
    runs = [{"start": r.start, "point": r.point, "value": r.value, "reduced_grad_norm": r.reduced_grad_norm,
             "iters": r.iters, "converged": r.converged, "status": r.status} for r in rep.runs]
    return {"command": command, "param": rep.param, "best_point": rep.best_point, "best_value": rep.best_value,
            "reduced_grad_norm": rep.reduced_grad_norm, "iters": rep.iters, "converged": rep.converged,
            "oracle_gap": rep.oracle_gap, "oracle_point": rep.oracle_point, "runs": runs,
            "extras": rep.extras}


def _solve_cfg(args, opts):
    kw = {k: opts[k] for k in ("max_iters", "step_init", "backtrack_beta", "armijo_c", "grad_tol") if k in opts}
    return SolveConfig(restarts=args.restarts, seed=args.seed, oracle_grid=args.grid or 0,
                       record_trajectory=False, series=_series_cfg(args, opts), **kw)


def cmd_solve(args, overrides):
    inst = _load_instance(args, overrides)
    rep = projected_gd(args.param, inst, _solve_cfg(args, _options(overrides)))
    return _report_doc(rep, "solve")


def cmd_jackson(args, overrides):
    doc = _apply_dotted(_read_json(args.instance), overrides)
    try:
        econ = doc["econ"]
        econ = [econ_from_dict(e) for e in econ] if isinstance(econ, list) else econ_from_dict(econ)
        jinst = JacksonInstance(np.asarray(doc["routing"], dtype=float), econ, box_from_dict(doc["box"]),
                                float(doc.get("lambda_floor", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed Jackson instance: {exc}") from exc
    rep = solve_jackson(jinst, _solve_cfg(args, _options(overrides)), oracle_resolution=args.grid or 0)
    return _report_doc(rep, "jackson")


def _family_from_args(args, overrides):
    if args.instance is None:
        raise InputError("--instance is required for this command")
    doc = _apply_dotted(_read_json(args.instance), overrides)
    try:
        return family_from_dict(doc["queue"] if "queue" in doc else doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed queue family: {exc}") from exc


def cmd_certify(args, overrides):
    fam = _family_from_args(args, overrides)
    cert = certify_family_convexity(fam, args.grid or 201, _series_cfg(args, _options(overrides)), seed=args.seed)
    if args.format == "csv":
        rows = [("tau", "second_derivative")] + list(zip(cert.grid.tolist(), cert.second_derivative.tolist()))
        return _csv(rows)
    return {"command": "certify", "family": cert.family, "grid": cert.grid,
            "second_derivative": cert.second_derivative, "min_second_diff": cert.min_second_diff,
            "verdict": cert.verdict.value, "witness": cert.witness, "tolerance": cert.tolerance,
            "fd_points": cert.fd_points, "fd_rel_err": cert.fd_rel_err}


def cmd_counterexample(args, overrides):
    r = counterexample()
    return {"command": "counterexample", "tau1": r.tau1, "tau2": r.tau2,
            "lower_bound_at_tau1": r.lower_bound_at_tau1, "upper_bound_at_tau2": r.upper_bound_at_tau2,
            "separation": r.separation, "l1_prime_tau2": r.l1_prime_tau2, "tilted_mean": r.tilted_mean,
            "mgf_service": r.mgf_service, "mgf_interarrival": r.mgf_interarrival,
            "geometric_ratio": r.geometric_ratio, "rounded_upper_bound": r.rounded_upper_bound,
            "thresholds": r.thresholds, "checks": r.checks}


def cmd_simulate(args, overrides):
    inst = _load_instance(args, overrides)
    opts = _options(overrides)
    b = inst.box
    lam = args.lam if args.lam is not None else 0.5 * (b.lambda_lo + b.lambda_hi)
    mu = args.mu if args.mu is not None else 0.5 * (b.mu_lo + b.mu_hi)
    kw = {k: int(opts[k]) for k in ("horizon", "replications", "warmup") if k in opts}
    cfg = SimConfig(seed=args.seed, **kw)
    est = simulate_wait(inst.queue, lam, mu, cfg)
    return {"command": "simulate", "lambda": lam, "mu": mu, "mean_wait": est.mean_wait,
            "mean_queue": est.mean_queue, "ci_halfwidth": est.ci_halfwidth,
            "wait_halfwidth": est.wait_halfwidth, "replications": est.replications,
            "horizon": cfg.horizon, "warmup": cfg.effective_warmup, "seed": cfg.seed}


def _as_int_list(v, name):
    vals = v if isinstance(v, list) else [v]
    try:
        out = [int(x) for x in vals]
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must be a list of integers") from exc
    if any(x < 1 for x in out):
        raise InputError(f"{name} entries must be >= 1")
    return out


def cmd_figure1(args, overrides):
    opts = _options(overrides)
    k = m = 1.0
    if args.instance is not None:
        fam = _family_from_args(args, overrides)
        if not hasattr(fam, "k") and type(fam).__name__ != "MM1":
            raise InputError("figure1 needs an MM1 or GammaGamma family")
        k, m = getattr(fam, "k", 1.0), getattr(fam, "m", 1.0)
    terms = _as_int_list(opts.get("n", [1, 2, 3, 5]), "n")
    partial = _as_int_list(opts.get("N", [1, 2, 5, 10, 50]), "N")
    limit = (k / m) ** 2
    grid = endpoint_grid(0.0, limit, args.grid or 101, 1e-3 * limit)
    top = max(max(terms), max(partial))
    ns = np.arange(1, top + 1)
    rows = [("series", "tau", "n_or_N", "value")]
    for t in grid:
        vals = spitzer_terms_gamma(k, m, ns, float(t))[0]
        for n in terms:
            rows.append(("term", float(t), n, float(vals[n - 1])))
        csum = np.cumsum(vals)
        for big_n in partial:
            rows.append(("partial_sum", float(t), big_n, float(csum[big_n - 1])))
    if args.format == "json":
        return {"command": "figure1", "k": k, "m": m,
                "rows": [dict(zip(rows[0], r)) for r in rows[1:]]}
    return _csv(rows)


def _csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in r])
    return buf.getvalue()


HANDLERS = {
    "eval": cmd_eval, "solve": cmd_solve, "certify": cmd_certify, "counterexample": cmd_counterexample,
    "jackson": cmd_jackson, "simulate": cmd_simulate, "figure1": cmd_figure1,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhidden", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--instance", metavar="PATH")
    p.add_argument("--param", choices=("original", "r1", "r2"), default="original")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--grid", type=int, default=None,
                   help="oracle resolution (solve/jackson) or grid size (certify/figure1)")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                   help="dotted keys edit the instance (box.mu_hi=3); plain keys are command options")
    p.add_argument("--unit-mean", action="store_true",
                   help="read box rates as unit-mean rates and rescale for Gamma families")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return 0
        _error("UsageError", "invalid command-line arguments")
        return 2
    if args.format is None:
        args.format = "csv" if args.command == "figure1" else "json"
    try:
        if args.format == "csv" and args.command not in ("figure1", "certify"):
            raise InputError(f"{args.command} has no CSV output")
        overrides = parse_overrides(args.overrides)
        result = HANDLERS[args.command](args, overrides)
        if isinstance(result, dict):
            check_schema(result, args.command)
            result = dumps(result)
        _write(result, args.out)
        return 0
    except InputError as exc:
        _error(type(exc).__name__, str(exc), exc.violations)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 1
        _error(type(exc).__name__, str(exc))
        return 1


def _error(kind, message, violations=()):
    doc = {"error": kind, "message": message}
    if violations:
        doc["violations"] = list(violations)
    sys.stderr.write(dumps(doc))


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
