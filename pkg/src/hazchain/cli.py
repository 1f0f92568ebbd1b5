"""Command-line entry point ``hazchain``.

Exit codes: 0 success, 2 usage or input error, 3 model validation error,
4 solver failure.  Machine-readable outputs go to files and are
byte-identical for identical inputs, flags and seeds; stdout carries a
human-readable summary.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from hazchain import estimation, montecarlo, solver, studies
from hazchain.errors import ConfigError, HazchainError, ValidationError
from hazchain.model import Ctmc, build_ctmc, load_config, validate
from hazchain.solver import SolverOptions, TimeGrid

THREADS_ENV = "HAZCHAIN_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _solver_options(args) -> SolverOptions:
    return SolverOptions(truncation_epsilon=args.epsilon, method=args.solver_method)


def _grid(args) -> TimeGrid:
    if args.t is not None:
        return TimeGrid(tuple(args.t))
    return TimeGrid.regular(args.horizon, args.step)


def _load_chain(args) -> Ctmc:
    if (args.config is None) == (args.experiment is None):
        raise ConfigError("give exactly one of a config path or --experiment")
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = studies.find_experiment(args.experiment).config()
    ctmc = build_ctmc(config)
    report = validate(ctmc)
    if not report.ok:
        raise ValidationError("model validation failed:\n  " + "\n  ".join(report.violations()))
    return ctmc


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_estimate(args) -> int:
    est = estimation.estimate_dataset(args.dataset, args.estimator, meta_path=args.meta,
                                      aggregate=args.aggregate)
    out = Path(args.out)
    _write_json(out, est.to_rate_file())
    diag = Path(args.diagnostics) if args.diagnostics else out.with_suffix(".diagnostics.json")
    _write_json(diag, est.diagnostics())
    zero = est.zero_count()
    print(f"estimated {len(est.rates.rate)} rates with {args.estimator} from "
          f"{int(est.support.count.sum())} transitions -> {out}")
    print(f"{len(zero)} never-observed transitions (rate 0); {len(est.low_count())} observed "
          f"fewer than {estimation.LOW_COUNT} times; details in {diag}")
    return 0


def cmd_solve(args) -> int:
    ctmc = _load_chain(args)
    res = solver.uniformize(ctmc, _grid(args), _solver_options(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    res.write_curves(out)
    if args.occupancy:
        res.write_occupancy(args.occupancy)
    t = res.grid.points[-1]
    print(f"t={t:g}h p_serious={res.p_serious[-1]:.6g} p_minor={res.p_minor[-1]:.6g} "
          f"p_success={res.p_success[-1]:.6g} ({len(res.grid)} grid points, {res.method}) -> {out}")
    return 0


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    if not args.mission_hours > 0:
        raise ConfigError("--mission-hours must be > 0")
    ctmc = _load_chain(args)
    est = montecarlo.estimate(ctmc, args.mission_hours, args.n, args.seed, method=args.mc_method,
                              workers=worker_count(), keep_outcomes=bool(args.missions))
    out = Path(args.out)
    _write_json(out, est.to_dict())
    if args.missions:
        est.write_missions(args.missions)
    print(f"n={est.n} seed={est.seed} t={est.mission_hours:g}h "
          f"p_serious={est.p_serious:.6g}±{est.stderr_serious:.2g} "
          f"p_minor={est.p_minor:.6g}±{est.stderr_minor:.2g} -> {out}")
    return 0


def _study_method(args):
    if args.study_solver == "montecarlo":
        if args.n < 1:
            raise ConfigError("--n must be >= 1")
        return studies.MonteCarloSettings(args.n, args.seed, args.mc_method)
    return "uniformization"


def cmd_study(args) -> int:
    if args.study == "all":
        chosen = studies.builtin_studies()
    else:
        chosen = [studies.find_study(args.study)]
    method = _study_method(args)
    workers = worker_count()
    out_dir = Path(args.out_dir)
    failures = 0
    for spec in chosen:
        table = studies.run_study(spec, method, opts=_solver_options(args), workers=workers)
        studies.export(table, out_dir, args.formats)
        for line in table.summary_lines():
            print(line)
        failures += sum(r.failed for r in table.experiments.values())
    return 4 if failures else 0


def cmd_sweep(args) -> int:
    base = studies.find_experiment(args.experiment)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    table = studies.sensitivity_sweep(base, args.param, values, opts=_solver_options(args),
                                      workers=worker_count())
    stem = f"sweep_{base.id}_{args.param.replace('.', '_')}"
    studies.export(table, args.out_dir, args.formats, stem=stem)
    for line in table.summary_lines():
        print(line)
    for k, v in sorted(table.notes.items()):
        print(f"{k}: {v}")
    return 4 if any(r.failed for r in table.experiments.values()) else 0


def cmd_calibrate(args) -> int:
    res = studies.calibrate_study1(args.target_serious, args.target_minor)
    _write_json(Path(args.out), res.to_dict())
    if args.write_presets:
        Path(args.write_presets).write_text(studies.preset_text(res.rate))
    print(f"{studies.CALIBRATED_KEY} = {res.rate!r} 1/h after {res.iterations} bisection steps")
    print(f"exp10 at 9100h: p_serious={res.exp10[0]:.6g} p_minor={res.exp10[1]:.6g}")
    print(f"exp15 at 9100h: p_serious={res.exp15[0]:.6g} p_minor={res.exp15[1]:.6g}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_solver_flags(p) -> None:
    p.add_argument("--epsilon", type=float, default=1e-12, help="Poisson tail mass discarded")
    p.add_argument("--solver-method", choices=("auto", "direct", "squaring"), default="auto")


def _add_model_source(p) -> None:
    p.add_argument("config", nargs="?", help="model config JSON")
    p.add_argument("--experiment", help="use a built-in experiment, e.g. exp25")


def _add_mc_flags(p, default_n: int | None) -> None:
    p.add_argument("--n", type=int, default=default_n, required=default_n is None,
                   help="number of missions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-method", choices=("thinning", "race"), default="thinning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate transition rates from frame logs")
    p.add_argument("dataset", help="directory of per-vehicle CSV logs")
    p.add_argument("--meta", help="metadata JSON (default: <dataset>/meta.json)")
    p.add_argument("--estimator", choices=estimation.ESTIMATORS, default="per_transition")
    p.add_argument("--aggregate", choices=estimation.AGGREGATIONS, default="pooled")
    p.add_argument("--out", required=True, help="rate JSON to write")
    p.add_argument("--diagnostics", help="diagnostics JSON (default: next to --out)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("solve", help="transient accident probabilities over a time grid")
    _add_model_source(p)
    p.add_argument("--t", type=float, action="append", help="report only at these times (repeatable)")
    p.add_argument("--horizon", type=float, default=solver.DEFAULT_HORIZON_H)
    p.add_argument("--step", type=float, default=solver.DEFAULT_STEP_H)
    p.add_argument("--occupancy", help="also write per-state probabilities to this CSV")
    p.add_argument("--out", required=True, help="curves CSV to write")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of mission outcomes")
    _add_model_source(p)
    _add_mc_flags(p, None)
    p.add_argument("--mission-hours", type=float, default=solver.DEFAULT_HORIZON_H)
    p.add_argument("--out", required=True, help="summary JSON to write")
    p.add_argument("--missions", help="also write per-mission outcomes to this CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a built-in study (or 'all')")
    p.add_argument("study", help="study1..study5, 1..5 or all")
    p.add_argument("--solver", dest="study_solver", choices=("uniformization", "montecarlo"),
                   default="uniformization")
    _add_mc_flags(p, 100_000)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--formats", nargs="+", choices=("csv", "json", "svg"), default=["csv", "json", "svg"])
    _add_solver_flags(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("sweep", help="vary one hazard parameter of a built-in experiment")
    p.add_argument("--experiment", required=True)
    p.add_argument("--param", required=True, help="FIELD or STATE.FIELD, e.g. F_S_B.p_overlook")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--formats", nargs="+", choices=("csv", "json", "svg"), default=["csv", "json", "svg"])
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate-study1", help="fit the shared late-detection accident rate")
    p.add_argument("--target-serious", type=float, default=1e-3)
    p.add_argument("--target-minor", type=float, default=1.2e-3)
    p.add_argument("--out", required=True, help="calibration report JSON")
    p.add_argument("--write-presets", help="write a regenerated studies.json here")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except HazchainError as exc:
        print(f"hazchain {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hazchain {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
