"""Built-in hazard studies, sweeps and result export.

Each experiment is the built-in rate chain plus per-braking-state hazard
parameters.  Experiments come in groups of five: the first applies its values
to all four braking states, the next four to one state each, in the order
F_F_B, F_S_B, IS_F_B, IS_S_B.

The presets live in ``data/studies.json``.  ``preset_document`` regenerates
that file from the parameter tables below; the only fitted number in it, the
accident rate after late detection used by Study 1, is produced by
``calibrate_study1`` and stored under ``calibrated``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

import hazchain
from hazchain import montecarlo, solver
from hazchain.errors import CalibrationError, ConfigError, HazchainError
from hazchain.model import (
    BRAKING_STATES,
    HAZARD_FIELDS,
    SCHEMA_VERSION,
    HazardParams,
    HighLevelState,
    ModelConfig,
    RateTable,
    build_ctmc,
    check_schema,
    default_hazard,
    load_rate_file,
    parse_high_level,
    table6_rates,
)
from hazchain.solver import SolverOptions, TimeGrid, default_grid

BUILTIN_RATES = "builtin:table6"
CALIBRATED_KEY = "study1_rate_policy_fail_late"
CALIBRATED_REF = "calibrated:" + CALIBRATED_KEY
STATE_ORDER = ("F_F_B", "F_S_B", "IS_F_B", "IS_S_B")
MISSION_H = 9100.0


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    overrides: Mapping[HighLevelState, Mapping[str, float]] = field(default_factory=dict)
    base_rates: str = BUILTIN_RATES
    grid: TimeGrid = field(default_factory=default_grid)
    description: str = ""

    def __post_init__(self):
        for state, fields in self.overrides.items():
            if state not in BRAKING_STATES:
                raise ConfigError(f"{self.id}: override targets non-braking state {state.name}")
            unknown = set(fields) - set(HAZARD_FIELDS)
            if unknown:
                raise ConfigError(f"{self.id}: unknown hazard fields {sorted(unknown)}")

    def hazard(self) -> dict[HighLevelState, HazardParams]:
        out = default_hazard()
        for state, fields in self.overrides.items():
            out[state] = replace(out[state], **fields)
        return out

    def config(self, base_dir: Path | None = None) -> ModelConfig:
        return ModelConfig(rates=resolve_rates(self.base_rates, base_dir), hazard=self.hazard())

    def value(self, state: HighLevelState, name: str) -> float:
        return getattr(self.hazard()[state], name)


@dataclass(frozen=True)
class StudySpec:
    id: str
    experiments: tuple[ExperimentSpec, ...]
    description: str = ""

    def __post_init__(self):
        ids = [e.id for e in self.experiments]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"{self.id}: duplicate experiment ids")


_RATE_CACHE: dict[str, RateTable] = {}


def resolve_rates(ref: str, base_dir: Path | None = None) -> RateTable:
    if ref == BUILTIN_RATES:
        if ref not in _RATE_CACHE:
            _RATE_CACHE[ref] = table6_rates()
        return _RATE_CACHE[ref]
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return load_rate_file(path)


def rates_digest(ref: str, base_dir: Path | None = None) -> str:
    rates = resolve_rates(ref, base_dir).to_named()
    return hashlib.sha256(json.dumps(rates, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# preset tables
# --------------------------------------------------------------------------

def _group(first: int, shared: dict, scoped: dict) -> list[dict]:
    """Five experiments: ``scoped`` fields on all states, then on one state each."""
    out = []
    targets = [STATE_ORDER] + [(s,) for s in STATE_ORDER]
    for k, chosen in enumerate(targets):
        hz = {}
        for s in STATE_ORDER:
            fields = dict(shared)
            if s in chosen:
                fields.update(scoped)
            fields = {f: v for f, v in fields.items() if v != 0}
            if fields:
                hz[s] = fields
        scope = "all" if len(chosen) > 1 else chosen[0]
        out.append({"id": f"exp{first + k}", "scope": scope, "hazard": hz})
    return out


def _study5() -> list[dict]:
    timely = {50: 1e-6, 51: 1e-6, 52: 1e-6, 53: 1e-6, 54: 1e-6,
              55: 1e-5, 56: 1e-5, 57: 1e-5, 58: 1e-5, 59: 1e-5}
    late = {50: 1e-5, 52: 1e-5, 59: 1e-5, 51: 1e-4, 53: 1e-4, 56: 1e-4,
            57: 2e-4, 58: 5e-4, 54: 1e-3, 55: 1e-3}
    p_overlook = {50: 1e-6, 51: 1e-6, 52: 1e-5, 53: 1e-5, 54: 1e-5,
                  55: 1e-4, 56: 1e-4, 57: 1e-4, 58: 1e-4, 59: 1e-4}
    out = []
    for k in range(50, 60):
        fields = {"p_overlook": p_overlook[k], "rate_policy_fail_timely": timely[k],
                  "rate_policy_fail_late": late[k]}
        out.append({"id": f"exp{k}", "scope": "all", "hazard": {s: dict(fields) for s in STATE_ORDER}})
    return out


def preset_document(calibrated_late: float) -> dict:
    """The full preset file contents."""
    late = CALIBRATED_REF
    studies = [
        {
            "id": "study1",
            "description": "Perception failures: hazards overlooked on entry, detected late",
            "experiments": (
                [{"id": "exp1", "scope": "none", "hazard": {}}]
                + _group(10, {"rate_policy_fail_late": late}, {"p_overlook": 1e-3})
                + _group(15, {"rate_policy_fail_late": late}, {"p_overlook": 1e-4})
            ),
        },
        {
            "id": "study2",
            "description": "Driving policy failures on timely detected hazards",
            "experiments": (_group(20, {}, {"rate_policy_fail_timely": 1e-6})
                            + _group(25, {}, {"rate_policy_fail_timely": 1e-5})),
        },
        {
            "id": "study3",
            "description": "Policy failures after timely and late detection, accidents while overlooked",
            "experiments": (
                _group(30, {"rate_accident_during_overlook": 1e-5},
                       {"rate_policy_fail_timely": 1e-5, "rate_policy_fail_late": 2e-5,
                        "p_overlook": 1e-4})
                + _group(35, {"rate_accident_during_overlook": 1e-5},
                         {"rate_policy_fail_timely": 1e-6, "rate_policy_fail_late": 2e-6,
                          "p_overlook": 1e-4})
            ),
        },
        {
            "id": "study4",
            "description": "Policy failures only after late detection",
            "experiments": (_group(40, {"p_overlook": 1e-4}, {"rate_policy_fail_late": 1e-4})
                            + _group(45, {"p_overlook": 1e-4}, {"rate_policy_fail_late": 1e-3})),
        },
        {
            "id": "study5",
            "description": "Combined perception and policy failures in all braking states",
            "experiments": _study5(),
        },
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "base_rates": BUILTIN_RATES,
        "grid": {"horizon_hours": solver.DEFAULT_HORIZON_H, "step_hours": solver.DEFAULT_STEP_H},
        "state_order": list(STATE_ORDER),
        "calibrated": {
            CALIBRATED_KEY: {
                "value": calibrated_late,
                "provenance": "calibrated, not a measured or published value",
                "how": "calibrate-study1: exp10 p_serious at 9100 h matched to 1e-3",
            }
        },
        "studies": studies,
    }


def preset_text(calibrated_late: float) -> str:
    return json.dumps(preset_document(calibrated_late), indent=2, sort_keys=True) + "\n"


def studies_from_document(doc: Mapping, base_dir: Path | None = None) -> list[StudySpec]:
    check_schema(doc, "studies")
    calibrated = {k: float(v["value"]) for k, v in (doc.get("calibrated") or {}).items()}
    g = doc.get("grid") or {}
    grid = TimeGrid.regular(float(g.get("horizon_hours", solver.DEFAULT_HORIZON_H)),
                            float(g.get("step_hours", solver.DEFAULT_STEP_H)))
    base = doc.get("base_rates", BUILTIN_RATES)
    out = []
    for st in doc["studies"]:
        exps = []
        for e in st["experiments"]:
            overrides = {}
            for name, fields in e.get("hazard", {}).items():
                resolved = {}
                for f, v in fields.items():
                    if isinstance(v, str):
                        if not v.startswith("calibrated:") or v.split(":", 1)[1] not in calibrated:
                            raise ConfigError(f"{e['id']}: unresolved value {v!r}")
                        v = calibrated[v.split(":", 1)[1]]
                    resolved[f] = float(v)
                overrides[parse_high_level(name)] = resolved
            exps.append(ExperimentSpec(e["id"], overrides, base, grid, e.get("scope", "")))
        out.append(StudySpec(st["id"], tuple(exps), st.get("description", "")))
    return out


def load_preset_document() -> dict:
    return json.loads(resources.files("hazchain.data").joinpath("studies.json").read_text())


def builtin_studies() -> list[StudySpec]:
    return studies_from_document(load_preset_document())


def find_study(study_id: str) -> StudySpec:
    studies = builtin_studies()
    for s in studies:
        if s.id == study_id or s.id == f"study{study_id}":
            return s
    raise ConfigError(f"unknown study {study_id!r}; valid: {', '.join(s.id for s in studies)}, all")


def find_experiment(exp_id: str) -> ExperimentSpec:
    key = exp_id if exp_id.startswith("exp") else f"exp{exp_id}"
    for s in builtin_studies():
        for e in s.experiments:
            if e.id == key:
                return e
    raise ConfigError(f"unknown experiment {exp_id!r}")


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    p_serious: np.ndarray | None
    p_minor: np.ndarray | None
    error: str | None = None

    @property
    def p_success(self) -> np.ndarray | None:
        if self.p_serious is None:
            return None
        return 1.0 - self.p_serious - self.p_minor

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ResultTable:
    study: str
    grid: TimeGrid
    experiments: dict[str, ExperimentResult]
    provenance: dict
    notes: dict = field(default_factory=dict)

    def at(self, exp_id: str, t: float = MISSION_H) -> tuple[float, float, float]:
        k = self.grid.points.index(float(t))
        r = self.experiments[exp_id]
        if r.failed:
            raise KeyError(f"{exp_id} failed: {r.error}")
        return float(r.p_serious[k]), float(r.p_minor[k]), float(r.p_success[k])

    def summary_lines(self) -> list[str]:
        t_end = self.grid.points[-1]
        lines = []
        for exp_id, r in self.experiments.items():
            if r.failed:
                lines.append(f"{self.study} {exp_id}: FAILED {r.error}")
            else:
                ps, pm, pz = self.at(exp_id, t_end)
                lines.append(f"{self.study} {exp_id} t={t_end:g}h p_serious={ps:.6g} "
                             f"p_minor={pm:.6g} p_success={pz:.6g}")
        return lines

    def to_dict(self) -> dict:
        exps = {}
        for k, r in self.experiments.items():
            if r.failed:
                exps[k] = {"error": r.error}
            else:
                exps[k] = {"p_serious": [float(x) for x in r.p_serious],
                           "p_minor": [float(x) for x in r.p_minor]}
        return {"schema_version": SCHEMA_VERSION, "study": self.study,
                "t_hours": list(self.grid.points), "experiments": exps,
                "provenance": self.provenance, "notes": self.notes}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ResultTable":
        check_schema(doc, "result table")
        exps = {}
        for k, v in doc["experiments"].items():
            if "error" in v:
                exps[k] = ExperimentResult(None, None, v["error"])
            else:
                exps[k] = ExperimentResult(np.array(v["p_serious"], dtype=float),
                                           np.array(v["p_minor"], dtype=float))
        return cls(doc["study"], TimeGrid(tuple(doc["t_hours"])), exps,
                   dict(doc.get("provenance", {})), dict(doc.get("notes", {})))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResultTable):
            return NotImplemented
        return json.dumps(self.to_dict(), sort_keys=True) == json.dumps(other.to_dict(), sort_keys=True)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["study", "experiment", "t_hours", "p_serious", "p_minor", "p_success"])
            for exp_id, r in self.experiments.items():
                for k, t in enumerate(self.grid.points):
                    if r.failed:
                        w.writerow([self.study, exp_id, repr(t), "", "", ""])
                    else:
                        w.writerow([self.study, exp_id, repr(t), repr(float(r.p_serious[k])),
                                    repr(float(r.p_minor[k])), repr(float(r.p_success[k]))])

    def write_svg(self, path: str | Path, accident_class: str) -> None:
        Path(path).write_text(render_svg(self, accident_class))


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloSettings:
    n: int
    seed: int
    method: str = "thinning"


def _solve_one(exp: ExperimentSpec, method, opts: SolverOptions, base_dir, mc_workers: int,
               stream_offset: int) -> ExperimentResult:
    try:
        ctmc = build_ctmc(exp.config(base_dir))
        if isinstance(method, MonteCarloSettings):
            est = montecarlo.estimate(ctmc, exp.grid.points[-1], method.n, method.seed + stream_offset,
                                      method=method.method, workers=mc_workers, keep_outcomes=True)
            ps, pm = est.curves(exp.grid.points)
            return ExperimentResult(ps, pm)
        res = solver.uniformize(ctmc, exp.grid, opts)
        return ExperimentResult(res.p_serious, res.p_minor)
    except HazchainError as exc:
        return ExperimentResult(None, None, f"{type(exc).__name__}: {exc}")


def _run(study_id: str, experiments: Sequence[ExperimentSpec], method, opts, workers, base_dir,
         extra_provenance: dict | None = None) -> ResultTable:
    if not experiments:
        return ResultTable(study_id, default_grid(), {}, _provenance(method, opts, BUILTIN_RATES, base_dir))
    grids = {e.grid for e in experiments}
    if len(grids) != 1:
        raise ConfigError(f"{study_id}: experiments use different grids")
    grid = experiments[0].grid
    mc_workers = workers if isinstance(method, MonteCarloSettings) else 1
    exp_workers = 1 if isinstance(method, MonteCarloSettings) else workers

    def one(item):
        k, exp = item
        return _solve_one(exp, method, opts, base_dir, mc_workers, _exp_number(exp.id, k))

    items = list(enumerate(experiments))
    if exp_workers > 1:
        with ThreadPoolExecutor(max_workers=exp_workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(i) for i in items]
    prov = _provenance(method, opts, experiments[0].base_rates, base_dir)
    if extra_provenance:
        prov.update(extra_provenance)
    return ResultTable(study_id, grid, {e.id: r for e, r in zip(experiments, results)}, prov)


def _exp_number(exp_id: str, fallback: int) -> int:
    digits = "".join(ch for ch in exp_id if ch.isdigit())
    return int(digits) if digits and digits == exp_id[3:] else fallback


def _provenance(method, opts: SolverOptions, base_rates: str, base_dir) -> dict:
    prov = {"code_version": hazchain.__version__, "base_rates": base_rates}
    try:
        prov["rates_sha256"] = rates_digest(base_rates, base_dir)
    except HazchainError:
        prov["rates_sha256"] = None
    if isinstance(method, MonteCarloSettings):
        prov["solver"] = {"kind": "montecarlo", "n": method.n, "seed": method.seed,
                          "method": method.method}
    else:
        prov["solver"] = {"kind": "uniformization", **opts.as_dict()}
    return prov


def run_study(study: StudySpec, method: str | MonteCarloSettings = "uniformization", *,
              opts: SolverOptions | None = None, workers: int = 1,
              base_dir: Path | None = None) -> ResultTable:
    """Solve every experiment of a study over its grid.

    ``method`` is ``"uniformization"`` or a :class:`MonteCarloSettings`; in the
    latter case experiment ``expN`` uses seed ``seed + N`` and reports the
    empirical absorption-time distribution at the grid points.  A failing
    experiment is recorded with its error and the others still run.
    """
    if not (isinstance(method, MonteCarloSettings) or method == "uniformization"):
        raise ConfigError(f"unknown study solver {method!r}")
    return _run(study.id, study.experiments, method, opts or SolverOptions(), workers, base_dir)


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationResult:
    rate: float
    target_serious: float
    target_minor: float | None
    exp10: tuple[float, float]
    exp15: tuple[float, float]
    iterations: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            CALIBRATED_KEY: self.rate,
            "target": {"p_serious": self.target_serious, "p_minor": self.target_minor},
            "exp10": {"p_serious": self.exp10[0], "p_minor": self.exp10[1]},
            "exp15": {"p_serious": self.exp15[0], "p_minor": self.exp15[1]},
            "iterations": self.iterations,
        }


def _with_late(exp: ExperimentSpec, rate: float) -> ExperimentSpec:
    overrides = {}
    for s, fields in exp.overrides.items():
        f = dict(fields)
        f["rate_policy_fail_late"] = rate
        overrides[s] = f
    return replace(exp, overrides=overrides)


def _study1_template() -> dict[str, ExperimentSpec]:
    doc = preset_document(1.0)
    specs = studies_from_document(doc)
    return {e.id: e for e in specs[0].experiments}


def p_at_mission(exp: ExperimentSpec, opts: SolverOptions | None = None) -> tuple[float, float]:
    ps, pm, _ = solver.mission_outcome_probs(build_ctmc(exp.config()), MISSION_H, opts)
    return ps, pm


def calibrate_study1(target_serious: float = 1e-3, target_minor: float | None = 1.2e-3, *,
                     lo: float = 1e-8, hi: float = 1e2, rel_tol: float = 1e-6,
                     max_iter: int = 200) -> CalibrationResult:
    """Shared late-detection accident rate giving Exp 10 the target p_serious at 9100 h.

    Bisection on log(rate); p_serious is increasing in the rate.  The target
    minor probability is only reported, not fitted.
    """
    if not target_serious > 0 or (target_minor is not None and not target_minor > 0):
        raise CalibrationError("calibration targets must be positive")
    base = _study1_template()
    exp10, exp15 = base["exp10"], base["exp15"]

    def f(rate: float) -> float:
        return p_at_mission(_with_late(exp10, rate))[0]

    f_lo, f_hi = f(lo), f(hi)
    if not f_lo <= target_serious <= f_hi:
        raise CalibrationError(
            f"target p_serious {target_serious:g} not bracketed: rate {lo:g} gives {f_lo:.6g}, "
            f"rate {hi:g} gives {f_hi:.6g}")
    a, b = math.log(lo), math.log(hi)
    it = 0
    mid = math.exp(0.5 * (a + b))
    while it < max_iter:
        it += 1
        mid = math.exp(0.5 * (a + b))
        val = f(mid)
        if abs(val / target_serious - 1.0) <= rel_tol:
            break
        if val < target_serious:
            a = math.log(mid)
        else:
            b = math.log(mid)
    else:
        raise CalibrationError(f"bisection did not converge in {max_iter} iterations")
    return CalibrationResult(
        rate=mid, target_serious=target_serious, target_minor=target_minor,
        exp10=p_at_mission(_with_late(exp10, mid)), exp15=p_at_mission(_with_late(exp15, mid)),
        iterations=it,
    )


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

def parse_parameter_path(path: str) -> tuple[tuple[HighLevelState, ...], str]:
    """``field`` (all braking states) or ``STATE.field``."""
    if "." in path:
        state_name, name = path.split(".", 1)
        try:
            states = (parse_high_level(state_name),)
        except (ConfigError, ValueError, KeyError) as exc:
            raise ConfigError(f"unknown state in parameter path {path!r}") from exc
        if states[0] not in BRAKING_STATES:
            raise ConfigError(f"parameter path {path!r} names a non-braking state")
    else:
        states, name = tuple(BRAKING_STATES), path
    if name not in HAZARD_FIELDS or name == "overlooked_self_resolve":
        raise ConfigError(f"unknown parameter {name!r}; choose from {', '.join(HAZARD_FIELDS[:5])}")
    return states, name


def sweep_experiments(base: ExperimentSpec, path: str, values: Sequence[float]) -> list[ExperimentSpec]:
    states, name = parse_parameter_path(path)
    out = []
    for v in values:
        overrides = {s: dict(f) for s, f in base.overrides.items()}
        for s in states:
            overrides.setdefault(s, {})[name] = float(v)
        out.append(replace(base, id=f"{base.id}[{path}={float(v)!r}]", overrides=overrides))
    return out


def sensitivity_sweep(base: ExperimentSpec, path: str, values: Sequence[float], *,
                      opts: SolverOptions | None = None, workers: int = 1,
                      base_dir: Path | None = None) -> ResultTable:
    """One experiment per value; notes record whether p(end) is monotone in the values."""
    exps = sweep_experiments(base, path, values)
    table = _run(f"sweep:{base.id}:{path}", exps, "uniformization", opts or SolverOptions(), workers,
                 base_dir, {"parameter": path, "values": [float(v) for v in values]})
    ok = [e.id for e in exps if not table.experiments[e.id].failed]
    notes = {}
    if ok:
        for cls, attr in (("serious", "p_serious"), ("minor", "p_minor")):
            ends = [float(getattr(table.experiments[k], attr)[-1]) for k in ok]
            notes[f"{cls}_nondecreasing"] = all(b >= a for a, b in zip(ends, ends[1:]))
            notes[f"{cls}_nonincreasing"] = all(b <= a for a, b in zip(ends, ends[1:]))
    table.notes = notes
    return table


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#000000")
_DASHES = ("", "6,3", "2,2", "8,3,2,3", "1,3")


def render_svg(table: ResultTable, accident_class: str) -> str:
    """Log-scale probability against mission time, one labelled series per experiment."""
    if accident_class not in ("serious", "minor"):
        raise ConfigError("accident_class must be 'serious' or 'minor'")
    width, height = 760, 480
    left, right, top, bottom = 80, 150, 40, 60
    pw, ph = width - left - right, height - top - bottom
    t = np.array(table.grid.points)
    series = []
    for exp_id, r in table.experiments.items():
        if r.failed:
            continue
        y = r.p_serious if accident_class == "serious" else r.p_minor
        series.append((exp_id, np.asarray(y, dtype=float)))
    positive = np.concatenate([y[y > 0] for _, y in series]) if series else np.zeros(0)
    if positive.size:
        lo_dec = math.floor(math.log10(positive.min()))
        hi_dec = math.ceil(math.log10(positive.max()))
        if hi_dec == lo_dec:
            hi_dec += 1
    else:
        lo_dec, hi_dec = -6, 0
    t_max = float(t[-1])

    def px(x: float) -> float:
        return left + pw * x / t_max

    def py(y: float) -> float:
        return top + ph * (hi_dec - math.log10(y)) / (hi_dec - lo_dec)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
        f'{table.study}: P({accident_class} accident by t)</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in range(lo_dec, hi_dec + 1):
        y = py(10.0 ** d)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    n_ticks = 7
    for k in range(n_ticks + 1):
        tv = t_max * k / n_ticks
        x = px(tv)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">{tv:.0f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 18}" text-anchor="middle">mission time [h]</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">probability</text>')
    for k, (exp_id, y) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        dash = _DASHES[(k // len(_PALETTE)) % len(_DASHES)]
        pts = [f"{px(tv):.2f},{py(yv):.2f}" for tv, yv in zip(t, y) if yv > 0]
        ly = top + 14 + 16 * k
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        if len(pts) >= 2:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} '
                       f'points="{" ".join(pts)}"/>')
        elif len(pts) == 1:
            x, yy = pts[0].split(",")
            out.append(f'<circle cx="{x}" cy="{yy}" r="2" fill="{color}"/>')
        label = exp_id if pts else f"{exp_id} (zero)"
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export(table: ResultTable, out_dir: str | Path, formats: Sequence[str] = ("csv", "json", "svg"),
           stem: str | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or table.study
    written = []
    for fmt in formats:
        if fmt == "csv":
            p = out_dir / f"{stem}.csv"
            table.write_csv(p)
            written.append(p)
        elif fmt == "json":
            p = out_dir / f"{stem}.json"
            table.write_json(p)
            written.append(p)
        elif fmt == "svg":
            for cls in ("serious", "minor"):
                p = out_dir / f"{stem}_{cls}.svg"
                table.write_svg(p, cls)
                written.append(p)
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    return written
