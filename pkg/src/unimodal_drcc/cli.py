"""Command-line entry point: ``unimodal-drcc {solve,separate,reliability,gen-data}``.

Exit codes: 0 success, 1 unexpected package error, 2 bad input or config,
3 infeasible problem, 4 solver failure or iteration limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import errors
from .experiment import (
    ExperimentConfig,
    SyntheticSpec,
    evaluate_rows,
    generate_synthetic_pool,
    reliability_floor,
    run_experiment,
)
from .separation import SeparationInstance, brute_force_worst_case, tau_bracket, worst_case
from .uncertainty import ScenarioPool

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

_INPUT_ERRORS = (
    errors.ValidationError, errors.ParseError, errors.DimensionMismatch, errors.DomainError,
    errors.DegenerateMoments, errors.Assumption1Violated, errors.UnsupportedRegime,
    errors.InvalidTau, errors.SingularSusceptance,
)


def exit_code_for(exc_type: type) -> int:
    if issubclass(exc_type, errors.MasterInfeasible):
        return EXIT_INFEASIBLE
    if issubclass(exc_type, (errors.SolverFailure, errors.IterationLimitExceeded)):
        return EXIT_SOLVER
    if issubclass(exc_type, _INPUT_ERRORS + (FileNotFoundError, json.JSONDecodeError, KeyError, TypeError)):
        return EXIT_INPUT
    return EXIT_ERROR


def _code_for_name(name: str) -> int:
    exc_type = getattr(errors, name, None)
    if isinstance(exc_type, type) and issubclass(exc_type, Exception):
        return exit_code_for(exc_type)
    return EXIT_ERROR


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def cmd_solve(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.output_dir:
        cfg = ExperimentConfig(**{**cfg.__dict__, "output_dir": args.output_dir})
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    report = run_experiment(cfg)
    header = f"{'set':<16}{'status':<12}{'total':>12}{'gen':>11}{'reserve':>11}{'up MW':>8}{'dn MW':>8}{'iter':>6}{'rel avg %':>11}"
    print(header)
    for r in report.rows:
        print(f"{r.name:<16}{r.status:<12}{r.total_cost:>12.2f}{r.generation_cost:>11.2f}"
              f"{r.reserve_cost:>11.2f}{r.up_reserve:>8.2f}{r.down_reserve:>8.2f}"
              f"{r.iterations:>6d}{r.reliability_avg:>11.2f}")
    print(f"results written to {Path(cfg.output_dir).resolve()}")
    failed = [r for r in report.rows if r.error]
    if failed:
        for r in failed:
            print(f"{r.name}: {r.error}", file=sys.stderr)
        return _code_for_name(failed[0].error.split(":", 1)[0])
    return EXIT_OK


def cmd_separate(args) -> int:
    data = _read_json(args.instance)
    inst = SeparationInstance(
        alpha=float(data.get("alpha", 1.0)), epsilon=float(data.get("epsilon", 0.05)),
        R_tilde=float(data["R_tilde"]), c_tilde=float(data["c_tilde"]),
        h_lo=float(data["h_lo"]), h_hi=float(data["h_hi"]),
    )
    wc = worst_case(inst)
    out = {"tau_star": wc.tau_star, "h_star": wc.h_star, "violation": wc.violation,
           "case": wc.case, "at_supremum": wc.at_supremum,
           "tau_bracket": [float(t) for t in tau_bracket(inst)]}
    if args.brute_force:
        bf = brute_force_worst_case(inst, args.grid, args.grid)
        out["brute_force"] = {"tau_star": bf.tau_star, "h_star": bf.h_star, "violation": bf.violation}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_reliability(args) -> int:
    sol = _read_json(args.solution)
    rows = sol["rows"]
    A = np.array([r["a"] for r in rows], dtype=float)
    b = np.array([r["b"] for r in rows], dtype=float)
    names = [r.get("name") or f"row {k}" for k, r in enumerate(rows)]
    pool = ScenarioPool.from_csv(args.scenarios)
    rep = evaluate_rows(A, b, pool, args.batches, args.batch_size, names)
    floor = reliability_floor(float(sol.get("epsilon", 0.05)), args.batch_size)
    out = {"joint_reliability_percent": {"min": rep.min, "avg": rep.avg, "max": rep.max},
           "worst_row_frequency": rep.worst_row_frequency(),
           "row_frequency_floor": floor,
           "rows_above_floor": [n for k, n in enumerate(names) if rep.row_violation[:, k].max() > floor]}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec.from_dict(_read_json(args.spec))
    pool = generate_synthetic_pool(spec, args.seed, args.size)
    pool.to_csv(args.out)
    truth = {"samples": len(pool), "seed": args.seed, "mode": spec.true_mode.tolist(),
             "mean": spec.true_mean.tolist(), "covariance": spec.true_covariance.tolist()}
    print(json.dumps(truth, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unimodal-drcc", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the full pipeline from a JSON config")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("separate", help="worst-case search for one instance JSON")
    s.add_argument("instance")
    s.add_argument("--brute-force", action="store_true", help="also run the grid oracle")
    s.add_argument("--grid", type=int, default=2000)
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("reliability", help="out-of-sample check of a saved solution")
    s.add_argument("solution")
    s.add_argument("scenarios", help="header-less CSV, one scenario per line")
    s.add_argument("--batches", type=int, default=20)
    s.add_argument("--batch-size", type=int, default=5000)
    s.set_defaults(func=cmd_reliability)

    s = sub.add_parser("gen-data", help="draw a synthetic scenario pool")
    s.add_argument("spec")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int)
    s.add_argument("--out", default="pool.csv")
    s.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (errors.DrccError, FileNotFoundError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(type(exc))


if __name__ == "__main__":
    sys.exit(main())
