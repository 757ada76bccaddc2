"""Command line front end.

Three subcommands, all driven by an INI config file:

``solve``
    build the model, run the multigrid solver, write the cycle history
    (``report.csv``), a machine readable report (``report.json``) and a
    human readable ``summary.txt`` into the output directory.

``validate``
    rebuild the generator by brute-force state enumeration, compare it
    entry by entry against the Kronecker construction, then solve and
    compare the stationary vector against a dense reference.  Only
    available while the state space is small enough for dense work.

``rank-study``
    truncate a high-accuracy reference solution to ranks 1..R and track
    truncation error and residual (``rank_study.csv``).

Exit codes: 0 success, 1 configuration problem, 2 solver did not
converge or validation failed, 3 state space too large for the
requested reference computation.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from .hierarchy import build_hierarchy
from .kron import assemble_dense, assemble_sparse
from .models import (
    ORACLE_STATE_LIMIT,
    KanbanParams,
    OracleSizeError,
    OverflowParams,
    build_kanban,
    build_overflow,
    oracle_generator,
    oracle_stationary,
    sparse_stationary,
)
from .solver import SolverConfig, residual_norm, solve_stationary
from .tt import TruncationPolicy, tt_add, tt_from_full, tt_norm, tt_round, tt_scale

#: rank studies use an exact sparse-direct reference up to this many
#: states and fall back to a tight multigrid solve beyond it
SPARSE_REFERENCE_LIMIT = 300_000


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------- config


def _floats(raw: str, count: int, label: str) -> tuple:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{label}: empty value")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{label}: {exc}") from None
    if len(values) == 1:
        values = values * count
    if len(values) != count:
        raise ConfigError(f"{label}: expected 1 or {count} values, got {len(values)}")
    return tuple(values)


def load_config(path: str, overrides: list[str] | None = None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, key = target.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), key.strip(), value.strip())
    return cp


def parse_model(cp: configparser.ConfigParser):
    """Returns (params, operator, strategy label)."""
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    sec = cp["model"]
    family = sec.get("family", "").strip().lower()
    try:
        if family == "overflow":
            j = sec.getint("queues")
            if j is None:
                raise ConfigError("overflow model needs queues = <int>")
            params = OverflowParams(
                _floats(sec.get("arrival", ""), j, "model.arrival"),
                _floats(sec.get("service", ""), j, "model.service"),
                tuple(int(c) for c in _floats(sec.get("capacity", ""), j, "model.capacity")),
            )
            synchronized = sec.getboolean("synchronized", fallback=True)
            op = build_overflow(params, synchronized=synchronized)
            return params, op, "overflow"
        if family == "kanban":
            j = sec.getint("machines")
            if j is None:
                raise ConfigError("kanban model needs machines = <int>")
            params = KanbanParams(
                _floats(sec.get("processing", ""), j, "model.processing"),
                _floats(sec.get("transfer", ""), max(j - 1, 1), "model.transfer")[: j - 1],
                sec.getint("tickets", fallback=0),
            )
            op = build_kanban(params)
            return params, op, "kanban"
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown model family {family!r} (overflow or kanban)")


_SOLVER_KEYS = {
    "smoother": str,
    "nu_pre": int,
    "nu_post": int,
    "tolerance": float,
    "max_cycles": int,
    "max_rank": int,
    "truncation_eps": float,
    "adapt_ranks": bool,
    "rank_growth": float,
    "max_rank_ceiling": int,
    "stall_ratio": float,
    "inner_steps": int,
    "inner_tol": float,
    "inner_restarts": int,
    "inner_rank_factor": float,
    "polish_cycles": int,
}


def parse_solver(cp: configparser.ConfigParser):
    """Returns (SolverConfig, interpolation, coarsest_max)."""
    kwargs = {}
    interpolation = "linear"
    coarsest_max = 1
    if cp.has_section("solver"):
        sec = cp["solver"]
        for key, typ in _SOLVER_KEYS.items():
            if key not in sec or not sec.get(key).strip():
                continue
            try:
                if typ is bool:
                    kwargs[key] = sec.getboolean(key)
                else:
                    kwargs[key] = typ(sec.get(key).strip())
            except ValueError as exc:
                raise ConfigError(f"solver.{key}: {exc}") from None
        interpolation = sec.get("interpolation", fallback="linear").strip()
        try:
            coarsest_max = sec.getint("coarsest_max", fallback=1)
        except ValueError as exc:
            raise ConfigError(f"solver.coarsest_max: {exc}") from None
    try:
        return SolverConfig(**kwargs), interpolation, coarsest_max
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _output_settings(cp: configparser.ConfigParser, args) -> tuple:
    directory = "out"
    formats = ("csv", "json", "summary")
    seed = None
    if cp.has_section("output"):
        sec = cp["output"]
        directory = sec.get("directory", fallback=directory).strip()
        raw = sec.get("formats", fallback=",".join(formats))
        formats = tuple(f.strip() for f in raw.split(",") if f.strip())
        if sec.get("seed", fallback="").strip():
            seed = sec.getint("seed")
    if args.out:
        directory = args.out
    if args.seed is not None:
        seed = args.seed
    unknown = set(formats) - {"csv", "json", "summary", "solution"}
    if unknown:
        raise ConfigError(f"unknown output formats: {sorted(unknown)}")
    return directory, formats, seed


# ------------------------------------------------------------- commands


def _model_blob(params, op, strategy) -> dict:
    blob = {"family": strategy, "dims": list(op.col_dims), "states": int(np.prod(op.col_dims))}
    if strategy == "overflow":
        blob.update(
            arrival=list(params.arrival),
            service=list(params.service),
            capacity=list(params.capacities),
        )
    else:
        blob.update(
            processing=list(params.processing),
            transfer=list(params.transfer),
            tickets=params.tickets,
        )
    return blob


def _write_outputs(outdir, formats, blob, report, x=None):
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "csv" in formats and report is not None:
        path = os.path.join(outdir, "report.csv")
        report.write_csv(path)
        written.append(path)
    if "json" in formats:
        path = os.path.join(outdir, "report.json")
        with open(path, "w") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    if "summary" in formats:
        path = os.path.join(outdir, "summary.txt")
        with open(path, "w") as fh:
            fh.write(_summary_text(blob))
        written.append(path)
    if "solution" in formats and x is not None:
        path = os.path.join(outdir, "solution.npz")
        np.savez(path, **{f"core_{k}": c for k, c in enumerate(x.cores)})
        written.append(path)
    return written


def _summary_text(blob) -> str:
    lines = [f"command: {blob['command']}", f"family: {blob['model']['family']}"]
    dims = "x".join(str(d) for d in blob["model"]["dims"])
    lines.append(f"state space: {blob['model']['states']} ({dims})")
    rep = blob.get("report")
    if rep:
        sizes = rep["hierarchy"]["level_sizes"]
        lines.append(
            f"levels: {rep['hierarchy']['levels']} ({' -> '.join(str(s) for s in sizes)})"
        )
        lines.append(f"termination: {rep['termination']}")
        lines.append(f"cycles to tolerance: {rep['cycles_to_tolerance']}")
        lines.append(f"total cycles: {rep['total_cycles']}")
        lines.append(f"final residual: {rep['final_residual']:.6e}")
        lines.append(f"final max rank: {rep['final_max_rank']}")
        lines.append(f"final effective rank: {rep['final_eff_rank']:.2f}")
    if "validation" in blob:
        val = blob["validation"]
        lines.append(f"generator max abs deviation: {val['generator_deviation']:.3e}")
        lines.append(f"solution error (2-norm): {val['solution_error']:.6e}")
        lines.append(f"validation: {'PASS' if val['passed'] else 'FAIL'}")
    if "elapsed_seconds" in blob:
        lines.append(f"elapsed: {blob['elapsed_seconds']:.2f} s")
    return "\n".join(lines) + "\n"


def cmd_solve(cp, args) -> int:
    params, op, strategy = parse_model(cp)
    config, interpolation, coarsest_max = parse_solver(cp)
    outdir, formats, seed = _output_settings(cp, args)
    t0 = time.perf_counter()
    hierarchy = build_hierarchy(
        op, strategy, coarsest_max=coarsest_max, interpolation=interpolation
    )
    x, report = solve_stationary(hierarchy, config)
    elapsed = time.perf_counter() - t0
    blob = {
        "command": "solve",
        "model": _model_blob(params, op, strategy),
        "solver": {
            "smoother": config.smoother,
            "nu_pre": config.nu_pre,
            "nu_post": config.nu_post,
            "tolerance": config.tolerance,
            "max_rank": config.max_rank,
            "interpolation": interpolation,
        },
        "report": report.to_json(),
        "elapsed_seconds": elapsed,
        "seed": seed,
    }
    for path in _write_outputs(outdir, formats, blob, report, x):
        print(f"wrote {path}")
    print(
        f"{report.termination}: residual {report.final_residual:.3e} "
        f"after {report.total_cycles} cycles"
    )
    return 0 if report.converged else 2


def cmd_validate(cp, args) -> int:
    params, op, strategy = parse_model(cp)
    config, interpolation, coarsest_max = parse_solver(cp)
    outdir, formats, seed = _output_settings(cp, args)
    n = int(np.prod(op.col_dims))
    if n > ORACLE_STATE_LIMIT:
        raise OracleSizeError(
            f"validation needs an enumeration oracle; {n} states exceed "
            f"the limit of {ORACLE_STATE_LIMIT}"
        )
    t0 = time.perf_counter()
    synchronized = cp["model"].getboolean("synchronized", fallback=True)
    if strategy == "overflow":
        reference = oracle_generator(params, synchronized=synchronized)
    else:
        reference = oracle_generator(params)
    deviation = float(np.max(np.abs(assemble_dense(op, dense_limit=n * n) - reference)))
    want = oracle_stationary(reference)

    hierarchy = build_hierarchy(
        op, strategy, coarsest_max=coarsest_max, interpolation=interpolation
    )
    x, report = solve_stationary(hierarchy, config)
    got = np.zeros(n)
    if report.converged:
        from .tt import tt_to_full

        got = tt_to_full(x).ravel()
    solution_error = float(np.linalg.norm(got - want))
    solution_tol = 1e-5
    if cp.has_section("validate") and cp["validate"].get("solution_tol", "").strip():
        solution_tol = cp["validate"].getfloat("solution_tol")
    passed = deviation <= 1e-12 and report.converged and solution_error <= solution_tol
    elapsed = time.perf_counter() - t0
    blob = {
        "command": "validate",
        "model": _model_blob(params, op, strategy),
        "report": report.to_json(),
        "validation": {
            "generator_deviation": deviation,
            "solution_error": solution_error,
            "solution_tol": solution_tol,
            "passed": bool(passed),
        },
        "elapsed_seconds": elapsed,
        "seed": seed,
    }
    for path in _write_outputs(outdir, formats, blob, report, x):
        print(f"wrote {path}")
    print(
        f"validation {'PASS' if passed else 'FAIL'}: generator deviation "
        f"{deviation:.3e}, solution error {solution_error:.3e}"
    )
    return 0 if passed else 2


def cmd_rank_study(cp, args) -> int:
    params, op, strategy = parse_model(cp)
    config, interpolation, coarsest_max = parse_solver(cp)
    outdir, formats, seed = _output_settings(cp, args)
    max_rank = 10
    factor = 100.0
    if cp.has_section("rank_study"):
        sec = cp["rank_study"]
        max_rank = sec.getint("max_rank", fallback=max_rank)
        factor = sec.getfloat("reference_tol_factor", fallback=factor)
    n = int(np.prod(op.col_dims))
    t0 = time.perf_counter()
    report = None
    if n <= SPARSE_REFERENCE_LIMIT:
        # exact reference: factorize the generator once, no truncation bias
        want = sparse_stationary(assemble_sparse(op))
        ref = tt_from_full(want.reshape(op.col_dims), TruncationPolicy(1e-14))
        reference = "sparse-direct"
    else:
        tight = SolverConfig(
            smoother=config.smoother,
            nu_pre=config.nu_pre,
            nu_post=config.nu_post,
            tolerance=config.tolerance / factor,
            max_cycles=config.max_cycles,
            max_rank=config.max_rank,
            polish_cycles=0,
        )
        hierarchy = build_hierarchy(
            op, strategy, coarsest_max=coarsest_max, interpolation=interpolation
        )
        ref, report = solve_stationary(hierarchy, tight)
        reference = "multigrid"
        if not report.converged:
            print(
                f"reference solve did not converge (residual "
                f"{report.final_residual:.3e})",
                file=sys.stderr,
            )
            return 2
    ref_norm = tt_norm(ref)
    rows = []
    for rank in range(1, max_rank + 1):
        trunc = tt_round(ref, TruncationPolicy(0.0, rank))
        err = tt_norm(tt_add(ref, tt_scale(trunc, -1.0))) / ref_norm
        res = residual_norm(op, trunc, max(config.max_rank, rank))
        rows.append((rank, err, res))
    elapsed = time.perf_counter() - t0

    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "rank_study.csv")
    with open(path, "w") as fh:
        fh.write("# schema=1\n")
        fh.write("rank,truncation_error,residual\n")
        for rank, err, res in rows:
            fh.write(f"{rank},{err:.17g},{res:.17g}\n")
    print(f"wrote {path}")
    if "json" in formats:
        blob = {
            "command": "rank-study",
            "model": _model_blob(params, op, strategy),
            "reference": reference,
            "rows": [
                {"rank": r, "truncation_error": e, "residual": s} for r, e, s in rows
            ],
            "elapsed_seconds": elapsed,
            "seed": seed,
        }
        jpath = os.path.join(outdir, "rank_study.json")
        with open(jpath, "w") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {jpath}")
    return 0


# ----------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttmg",
        description="Tensor-train multigrid for Kronecker-structured Markov chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("solve", cmd_solve),
        ("validate", cmd_validate),
        ("rank-study", cmd_rank_study),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI model/solver description")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="recorded in reports")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config entry (repeatable)",
        )
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cp = load_config(args.config, args.override)
        return args.fn(cp, args)
    except OracleSizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (configparser.Error, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
