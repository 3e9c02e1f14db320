"""Experiment runner: JSON config in, CSV/JSON artifacts out.

Subcommands:
    run <config>      one experiment; writes trace.csv and summary.json
    sweep <config> --k0 1,5,10 --repeats 5    averages over seeded instances
    check <config>    run with every certified inequality asserted

Exit codes: 0 converged, 2 iteration budget exhausted, 1 runtime error or
failed assertion, 3 invalid configuration (nothing written).

Artifacts are reproducible byte-for-byte for a fixed config and seed: the
timing columns are written as 0.0 unless --timing is passed, since wall
clock is the one quantity a rerun cannot reproduce.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .analysis import theory_report
from .data import generate_regression, load_classification, partition
from .errors import ConfigError, FedAdmmError
from .losses import CurvatureMode, LeastSquares, Logistic
from .solvers import (
    ALGORITHMS,
    ExplicitSigmas,
    HyperParams,
    LogScaleRule,
    MultiplierRule,
    run,
)

TRACE_HEADER = (
    "k,in_K,f_y,F_X,L,phi,grad_f_sq,grad_F_sq,"
    "res_dual,res_primal,res_consensus,rounds,elapsed_s"
)

EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_CONFIG = 3


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


# ------------------------------ configuration ------------------------------ #


def _need(obj, field, path, kind=None):
    if field not in obj:
        raise ConfigError(f"{path}.{field}", "missing required field")
    value = obj[field]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(
            k.__name__ for k in kind
        )
        raise ConfigError(f"{path}.{field}", f"expected {names}")
    return value


def _opt(obj, field, default):
    return obj.get(field, default)


def parse_sigma(node, path):
    if node is None:
        return None
    if not isinstance(node, dict):
        raise ConfigError(path, "expected an object with a 'rule' field")
    rule = _need(node, "rule", path, str)
    if rule == "multiplier":
        return MultiplierRule(float(_need(node, "c", path, (int, float))))
    if rule == "log-scale":
        return LogScaleRule(float(_need(node, "a", path, (int, float))))
    if rule == "explicit":
        values = _need(node, "values", path, list)
        return ExplicitSigmas(tuple(float(v) for v in values))
    raise ConfigError(f"{path}.rule", f"unknown sigma rule {rule!r}")


def parse_curvature(node, path):
    if node is None:
        return CurvatureMode.scalar()
    mode = _need(node, "mode", path, str)
    if mode == "scalar":
        return CurvatureMode.scalar()
    if mode == "scaled-gram":
        return CurvatureMode.scaled_gram(float(_opt(node, "r", 6.0)))
    if mode == "gram":
        return CurvatureMode.gram()
    raise ConfigError(f"{path}.mode", f"unknown curvature mode {mode!r}")


def parse_config(cfg: dict):
    """Validate the raw config dict; returns (algorithm, problem, hp, options)."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    algorithm = _need(cfg, "algorithm", "<root>", str).lower()
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"unknown algorithm {algorithm!r}")

    problem = _need(cfg, "problem", "<root>", dict)
    kind = _need(problem, "kind", "problem", str)
    if kind == "synthetic-regression":
        m = _need(problem, "m", "problem", int)
        if m % 3 != 0:
            raise ConfigError("problem.m", "synthetic clients come in 3 equal groups")
        n = _need(problem, "n", "problem", int)
        d_range = _need(problem, "d_range", "problem", list)
        if len(d_range) != 2:
            raise ConfigError("problem.d_range", "expected [lo, hi]")
        seed = _need(problem, "seed", "problem", int)
        spec = {"kind": kind, "m": m, "n": n, "d_range": d_range, "seed": seed}
    elif kind == "file":
        spec = {
            "kind": kind,
            "path": _need(problem, "path", "problem", str),
            "format": _need(problem, "format", "problem", str),
            "m": _need(problem, "m", "problem", int),
            "seed": _need(problem, "seed", "problem", int),
            "mu": float(_opt(problem, "mu", 0.01)),
            "n": _opt(problem, "n", None),
        }
        if spec["format"] not in ("csv", "libsvm"):
            raise ConfigError("problem.format", f"unknown format {spec['format']!r}")
        if spec["n"] is not None and not isinstance(spec["n"], int):
            raise ConfigError("problem.n", "must be an integer or null")
    else:
        raise ConfigError("problem.kind", f"unknown problem kind {kind!r}")
    if spec["seed"] < 0:
        raise ConfigError("problem.seed", "seed must be non-negative")
    if spec["m"] < 1:
        raise ConfigError("problem.m", "client count must be >= 1")

    hp_node = _opt(cfg, "hyperparams", {})
    if not isinstance(hp_node, dict):
        raise ConfigError("hyperparams", "expected an object")
    k0 = _opt(hp_node, "k0", 1)
    if not isinstance(k0, int) or k0 < 1:
        raise ConfigError("hyperparams.k0", "k0 must be an integer >= 1")
    max_iters = _opt(hp_node, "max_iters", 10_000)
    if not isinstance(max_iters, int) or max_iters < 1:
        raise ConfigError("hyperparams.max_iters", "must be an integer >= 1")
    tol_scale = _opt(hp_node, "tol_scale", 1e-7)
    if not isinstance(tol_scale, (int, float)) or tol_scale <= 0:
        raise ConfigError("hyperparams.tol_scale", "must be positive")
    gamma = _opt(hp_node, "gamma", None)
    if gamma is not None and (not isinstance(gamma, (int, float)) or gamma <= 0):
        raise ConfigError("hyperparams.gamma", "must be positive or null")
    inner_tol = _opt(hp_node, "inner_tol", None)
    if inner_tol is not None and (
        not isinstance(inner_tol, (int, float)) or inner_tol <= 0
    ):
        raise ConfigError("hyperparams.inner_tol", "must be positive or null")
    dual_init = _opt(hp_node, "dual_init", "gradient")
    if dual_init not in ("gradient", "zero"):
        raise ConfigError("hyperparams.dual_init", "must be 'gradient' or 'zero'")
    hp = HyperParams(
        k0=k0,
        sigma_rule=parse_sigma(_opt(hp_node, "sigma", None), "hyperparams.sigma"),
        curvature=parse_curvature(
            _opt(hp_node, "curvature", None), "hyperparams.curvature"
        ),
        gamma=None if gamma is None else float(gamma),
        max_iters=max_iters,
        tol_scale=float(tol_scale),
        inner_tol=None if inner_tol is None else float(inner_tol),
        dual_init=dual_init,
    )

    emit = _opt(cfg, "emit", ["csv", "json"])
    if not isinstance(emit, list) or not set(emit) <= {"csv", "json"}:
        raise ConfigError("emit", "expected a list drawn from ['csv', 'json']")
    options = {
        "output_dir": _need(cfg, "output_dir", "<root>", str),
        "emit": emit,
        "theory_check": bool(_opt(cfg, "theory_check", False)),
    }
    return algorithm, spec, hp, options


def build_problem(spec):
    if spec["kind"] == "synthetic-regression":
        fed = generate_regression(
            spec["m"], spec["n"], tuple(spec["d_range"]), seed=spec["seed"]
        )
        return fed, LeastSquares()
    A, b = load_classification(spec["path"], spec["format"], n=spec["n"])
    fed = partition(A, b, spec["m"], seed=spec["seed"])
    return fed, Logistic(mu=spec["mu"])


# --------------------------------- artifacts -------------------------------- #


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path: str, trace, timing: bool):
    lines = [TRACE_HEADER]
    for rec in trace:
        elapsed = rec.elapsed_s if timing else 0.0
        lines.append(
            ",".join(
                [
                    str(rec.k),
                    "1" if rec.in_K else "0",
                    _fmt(rec.f_y),
                    _fmt(rec.F_X),
                    _fmt(rec.L),
                    _fmt(rec.phi),
                    _fmt(rec.grad_f_sq),
                    _fmt(rec.grad_F_sq),
                    _fmt(rec.residuals.dual),
                    _fmt(rec.residuals.primal),
                    _fmt(rec.residuals.consensus),
                    str(rec.rounds),
                    _fmt(elapsed),
                ]
            )
        )
    _write_atomic(path, "\n".join(lines) + "\n")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_summary(path: str, payload: dict):
    text = json.dumps(_json_ready(payload), indent=2, sort_keys=True)
    _write_atomic(path, text + "\n")


# --------------------------------- commands --------------------------------- #


def run_experiment(cfg: dict, timing: bool = False) -> int:
    """Run one configured experiment and write its artifacts.

    Returns the process exit code. Nothing is written when the config fails
    validation.
    """
    algorithm, spec, hp, options = parse_config(cfg)
    out_dir = options["output_dir"]
    fed, model = build_problem(spec)
    result = run(algorithm, fed, model, hp)

    report = None
    if options["theory_check"]:
        report = theory_report(result, fed, model)

    os.makedirs(out_dir, exist_ok=True)
    if "csv" in options["emit"]:
        write_trace_csv(os.path.join(out_dir, "trace.csv"), result.trace, timing)
    if "json" in options["emit"]:
        summary = {
            "algorithm": result.algorithm,
            "iterations": result.iterations,
            "rounds": result.rounds,
            "converged": result.converged,
            "final_objective": result.trace[-1].f_y,
            "uplink_vectors": result.ledger.uplink_vectors,
            "downlink_vectors": result.ledger.downlink_vectors,
            "rate_violations": None if report is None else report["rate_violations"],
            "theory": report,
        }
        write_summary(os.path.join(out_dir, "summary.json"), summary)

    if report is not None and report["violation_count"] > 0:
        print(
            f"theory check failed: {report['violation_count']} violation(s)",
            file=sys.stderr,
        )
        return EXIT_ERROR
    return EXIT_CONVERGED if result.converged else EXIT_MAX_ITERS


def sweep(cfg: dict, k0_values, repeats: int, timing: bool = False) -> int:
    """Average iterations/rounds/time over `repeats` seeded instances per k0.

    Each repeat r rebuilds the problem with seed base_seed + r. A failing
    cell is recorded and skipped, never fatal to the sweep.
    """
    algorithm, spec, hp_base, options = parse_config(cfg)
    if repeats < 1:
        raise ConfigError("repeats", "must be >= 1")
    out_dir = options["output_dir"]
    base_seed = spec["seed"]

    rows = []
    failures = []
    from dataclasses import replace as _replace

    for k0 in k0_values:
        iters, rounds, times = [], [], []
        for rep in range(repeats):
            cell_spec = dict(spec, seed=base_seed + rep)
            try:
                fed, model = build_problem(cell_spec)
                result = run(algorithm, fed, model, _replace(hp_base, k0=k0))
                iters.append(result.iterations)
                rounds.append(result.rounds)
                times.append(result.trace[-1].elapsed_s if timing else 0.0)
            except FedAdmmError as exc:
                failures.append({"k0": k0, "repeat": rep, "error": str(exc)})
        if iters:
            rows.append((k0, np.mean(iters), np.mean(rounds), np.mean(times)))
        else:
            rows.append((k0, float("nan"), float("nan"), float("nan")))

    os.makedirs(out_dir, exist_ok=True)
    lines = ["k0,mean_iterations,mean_rounds,mean_time_s"]
    for k0, mi, mr, mt in rows:
        lines.append(f"{k0},{_fmt(mi)},{_fmt(mr)},{_fmt(mt)}")
    _write_atomic(os.path.join(out_dir, "sweep.csv"), "\n".join(lines) + "\n")
    if failures:
        write_summary(os.path.join(out_dir, "sweep_errors.json"), {"failures": failures})
        print(f"sweep finished with {len(failures)} failed cell(s)", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_CONVERGED


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError("<config>", f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}") from exc


def _apply_overrides(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg.setdefault("problem", {})["seed"] = args.seed
    if args.out is not None:
        cfg["output_dir"] = args.out
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedadmm",
        description="Run consensus-ADMM federated-learning experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override problem.seed")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument(
            "--timing",
            action="store_true",
            help="emit measured wall-clock in artifacts (breaks byte reproducibility)",
        )

    add_common(sub.add_parser("run", help="run one experiment"))
    p_sweep = sub.add_parser("sweep", help="average runs over k0 values and repeats")
    add_common(p_sweep)
    p_sweep.add_argument(
        "--k0", required=True, help="comma-separated k0 values, e.g. 1,5,10"
    )
    p_sweep.add_argument("--repeats", type=int, default=1)
    add_common(sub.add_parser("check", help="run with all certified bounds asserted"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(_load_config_file(args.config), args)
        if args.command == "run":
            return run_experiment(cfg, timing=args.timing)
        if args.command == "sweep":
            try:
                k0_values = [int(v) for v in args.k0.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError("--k0", f"bad k0 list: {args.k0!r}") from exc
            if not k0_values:
                raise ConfigError("--k0", "empty k0 list")
            return sweep(cfg, k0_values, args.repeats, timing=args.timing)
        cfg["theory_check"] = True
        return run_experiment(cfg, timing=args.timing)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedAdmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
