import json
import math
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest

from hazchain import studies
from hazchain.errors import CalibrationError, ConfigError
from hazchain.model import BRAKING_STATES, HighLevelState as H, overlook_exit_rates
from hazchain.solver import TimeGrid
from hazchain.studies import (ExperimentSpec, MonteCarloSettings, ResultTable, builtin_studies,
                              find_experiment, find_study, run_study)

FAST_STATES = {H.F_F_B, H.IS_F_B}


@pytest.fixture(scope="module")
def study1():
    return run_study(find_study("study1"))


@pytest.fixture(scope="module")
def all_tables():
    return {s.id: run_study(s, workers=4) for s in builtin_studies()}


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def test_builtin_counts():
    specs = builtin_studies()
    assert [s.id for s in specs] == [f"study{k}" for k in range(1, 6)]
    assert sum(len(s.experiments) for s in specs) == 51
    ids = [e.id for s in specs for e in s.experiments]
    assert ids == ["exp1"] + [f"exp{k}" for k in range(10, 60)]


def test_exp12_targets_only_the_free_slow_state():
    exp = find_experiment("exp12")
    for s in BRAKING_STATES:
        assert (exp.value(s, "p_overlook") > 0) == (s is H.F_S_B)
    assert exp.value(H.F_S_B, "p_overlook") == 1e-3


def test_exp55_values():
    exp = find_experiment("55")
    for s in BRAKING_STATES:
        assert exp.value(s, "rate_policy_fail_timely") == 1e-5
        assert exp.value(s, "rate_policy_fail_late") == 1e-3
        assert exp.value(s, "p_overlook") == 1e-4
        assert exp.value(s, "rate_accident_during_overlook") == 0


@pytest.mark.parametrize("exp_id,field,values", [
    ("exp25", "rate_policy_fail_timely", {1e-5}),
    ("exp23", "rate_policy_fail_timely", {0.0, 1e-6}),
    ("exp30", "rate_policy_fail_late", {2e-5}),
    ("exp36", "rate_accident_during_overlook", {1e-5}),
    ("exp47", "p_overlook", {1e-4}),
    ("exp47", "rate_policy_fail_late", {0.0, 1e-3}),
    ("exp47", "rate_policy_fail_timely", {0.0}),
    ("exp58", "rate_policy_fail_late", {5e-4}),
    ("exp50", "p_overlook", {1e-6}),
])
def test_preset_values(exp_id, field, values):
    exp = find_experiment(exp_id)
    assert {exp.value(s, field) for s in BRAKING_STATES} == values


def test_overlook_exit_rates_are_from_sojourn_table():
    exp = find_experiment("exp10")
    assert {s: exp.value(s, "rate_overlook_exit") for s in BRAKING_STATES} == overlook_exit_rates()
    assert [overlook_exit_rates()[s] for s in BRAKING_STATES] == [4500, 2250, 2250, 1225]


def test_study1_shares_one_calibrated_late_rate():
    doc = studies.load_preset_document()
    r = doc["calibrated"][studies.CALIBRATED_KEY]
    assert r["provenance"] == "calibrated, not a measured or published value"
    for exp in find_study("1").experiments[1:]:
        assert {exp.value(s, "rate_policy_fail_late") for s in BRAKING_STATES} == {r["value"]}


def test_shipped_preset_file_is_generated_text():
    shipped = resources.files("hazchain.data").joinpath("studies.json").read_text()
    value = json.loads(shipped)["calibrated"][studies.CALIBRATED_KEY]["value"]
    assert shipped == studies.preset_text(value)


@pytest.mark.parametrize("bad", ["study6", "exp2", "exp60", "foo"])
def test_unknown_ids(bad):
    with pytest.raises(ConfigError):
        find_study(bad) if bad.startswith("study") or bad == "foo" else find_experiment(bad)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec("x", {H.F_F_NB: {"p_overlook": 0.1}})
    with pytest.raises(ConfigError):
        ExperimentSpec("x", {H.F_F_B: {"p_overlok": 0.1}})
    e = ExperimentSpec("x")
    with pytest.raises(ConfigError):
        studies.StudySpec("s", (e, e))


def test_unresolved_calibrated_reference():
    doc = studies.preset_document(1e-3)
    del doc["calibrated"]
    with pytest.raises(ConfigError):
        studies.studies_from_document(doc)


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

def test_exp1_rows(study1):
    r = study1.experiments["exp1"]
    assert np.all(r.p_serious == 0) and np.all(r.p_minor == 0) and np.all(r.p_success == 1)


def test_study1_structural_zeros(study1):
    for k in (12, 14, 17, 19):
        assert np.all(study1.experiments[f"exp{k}"].p_serious == 0)
        assert study1.experiments[f"exp{k}"].p_minor[-1] > 0
    for k in (11, 13, 16, 18):
        assert np.all(study1.experiments[f"exp{k}"].p_minor == 0)
        assert study1.experiments[f"exp{k}"].p_serious[-1] > 0


def test_single_state_structural_zeros_everywhere(all_tables):
    for study in builtin_studies():
        table = all_tables[study.id]
        for exp in study.experiments:
            if exp.description not in {s.name for s in BRAKING_STATES}:
                continue
            r = table.experiments[exp.id]
            if H[exp.description] in FAST_STATES:
                assert np.all(r.p_minor == 0), exp.id
            else:
                assert np.all(r.p_serious == 0), exp.id


def test_scope_dominance(all_tables):
    # siblings differ only in accident arcs, so rounding can not flip the order
    for study in builtin_studies():
        if study.id == "study5":
            continue
        table = all_tables[study.id]
        exps = [e for e in study.experiments if e.id != "exp1"]
        for g in range(0, len(exps), 5):
            top = table.experiments[exps[g].id]
            for sib in exps[g + 1:g + 5]:
                r = table.experiments[sib.id]
                assert np.all(top.p_serious >= r.p_serious - 1e-12), sib.id
                assert np.all(top.p_minor >= r.p_minor - 1e-12), sib.id


def test_study2_order_of_magnitude(all_tables):
    t = all_tables["study2"]
    for k in range(5):
        lo, hi = t.at(f"exp{20 + k}"), t.at(f"exp{25 + k}")
        for c in (0, 1):
            if hi[c] > 0:
                assert 8 <= hi[c] / lo[c] <= 12


def test_failed_experiment_is_marked_and_others_run(tmp_path):
    bad = ExperimentSpec("exp900", base_rates=str(tmp_path / "missing.json"))
    good = find_experiment("exp25")
    table = run_study(studies.StudySpec("mixed", (bad, good)))
    assert table.experiments["exp900"].failed
    assert not table.experiments["exp25"].failed
    assert "FAILED" in table.summary_lines()[0]
    table.write_csv(tmp_path / "m.csv")
    row = (tmp_path / "m.csv").read_text().splitlines()[1]
    assert row.endswith(",,,")
    assert ResultTable.from_dict(json.loads(json.dumps(table.to_dict()))) == table


def test_monte_carlo_study_seeds_by_experiment_number():
    study = studies.StudySpec("s", (find_experiment("exp25"), find_experiment("exp26")))
    t = run_study(study, MonteCarloSettings(n=20_000, seed=5))
    alone = run_study(studies.StudySpec("s", (find_experiment("exp26"),)), MonteCarloSettings(n=20_000, seed=5))
    assert np.array_equal(t.experiments["exp26"].p_serious, alone.experiments["exp26"].p_serious)
    assert t.provenance["solver"] == {"kind": "montecarlo", "n": 20_000, "seed": 5, "method": "thinning"}


def test_provenance(study1):
    p = study1.provenance
    assert p["base_rates"] == studies.BUILTIN_RATES
    assert len(p["rates_sha256"]) == 64
    assert p["solver"]["kind"] == "uniformization"


def test_unknown_study_solver():
    with pytest.raises(ConfigError):
        run_study(find_study("2"), "gillespie")


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def calibration():
    return studies.calibrate_study1()


def test_calibration_self_check(calibration):
    assert calibration.rate > 0
    assert abs(calibration.exp10[0] / 1e-3 - 1) <= 0.01
    ps, _ = studies.p_at_mission(studies._with_late(find_experiment("exp10"), calibration.rate))
    assert ps == pytest.approx(calibration.exp10[0], rel=1e-12)


def test_shipped_value_matches_calibration(calibration):
    shipped = studies.load_preset_document()["calibrated"][studies.CALIBRATED_KEY]["value"]
    assert shipped == pytest.approx(calibration.rate, rel=1e-5)


def test_exp15_is_an_order_of_magnitude_lower(calibration):
    ratio = calibration.exp10[0] / calibration.exp15[0]
    assert 7.5 <= ratio <= 12.5


def test_doubling_the_rate_raises_p_serious(calibration):
    exp10 = find_experiment("exp10")
    a = studies.p_at_mission(studies._with_late(exp10, calibration.rate))[0]
    b = studies.p_at_mission(studies._with_late(exp10, 2 * calibration.rate))[0]
    assert b > a


def test_calibration_bracketing_failure():
    with pytest.raises(CalibrationError):
        studies.calibrate_study1(target_serious=0.5)
    with pytest.raises(CalibrationError):
        studies.calibrate_study1(target_serious=-1.0)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

def test_sweep_p_overlook_is_strictly_increasing():
    t = studies.sensitivity_sweep(find_experiment("exp10"), "p_overlook", [0.0, 1e-4, 1e-3])
    ends = [t.experiments[k].p_serious[-1] for k in t.experiments]
    assert ends[0] < ends[1] < ends[2]
    assert t.notes["serious_nondecreasing"] and t.notes["minor_nondecreasing"]
    assert t.provenance["parameter"] == "p_overlook"


def test_sweep_per_state_path():
    t = studies.sensitivity_sweep(find_experiment("exp20"), "IS_S_B.rate_policy_fail_timely", [0.0, 1e-5])
    first, second = t.experiments.values()
    # a slow state feeds minor accidents only; the new sink takes mass from serious paths
    assert np.all(second.p_serious <= first.p_serious)
    assert second.p_minor[-1] > first.p_minor[-1]


def test_empty_sweep():
    t = studies.sensitivity_sweep(find_experiment("exp10"), "p_overlook", [])
    assert t.experiments == {}


def test_single_value_sweep_matches_experiment():
    base = find_experiment("exp25")
    t = studies.sensitivity_sweep(base, "rate_policy_fail_timely", [1e-5])
    direct = run_study(studies.StudySpec("x", (base,)))
    (r,) = t.experiments.values()
    assert np.array_equal(r.p_serious, direct.experiments["exp25"].p_serious)
    assert np.array_equal(r.p_minor, direct.experiments["exp25"].p_minor)


@pytest.mark.parametrize("path", ["p_overlok", "F_F_NB.p_overlook", "XX.p_overlook",
                                  "overlooked_self_resolve", "F_F_B."])
def test_unknown_parameter_path(path):
    with pytest.raises(ConfigError):
        studies.parse_parameter_path(path)


@pytest.mark.parametrize("field", ["p_overlook", "rate_policy_fail_timely", "rate_policy_fail_late",
                                   "rate_accident_during_overlook"])
def test_accident_parameters_are_monotone(field):
    base = find_experiment("exp55")
    values = [0.0, 1e-5, 1e-4, 1e-3]
    t = studies.sensitivity_sweep(base, field, values)
    total = [r.p_serious + r.p_minor for r in t.experiments.values()]
    for a, b in zip(total, total[1:]):
        assert np.all(b >= a - 1e-12)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def test_study1_csv_shape(study1, tmp_path):
    studies.export(study1, tmp_path, ["csv"])
    lines = (tmp_path / "study1.csv").read_text().splitlines()
    assert lines[0] == "study,experiment,t_hours,p_serious,p_minor,p_success"
    assert len(lines) == 1 + 11 * 91
    assert {ln.split(",")[1] for ln in lines[1:]} == {e.id for e in find_study("1").experiments}


def test_json_round_trip(study1, tmp_path):
    studies.export(study1, tmp_path, ["json"])
    back = ResultTable.from_dict(json.loads((tmp_path / "study1.json").read_text()))
    assert back == study1
    assert back.grid == study1.grid


def test_svg_has_one_labeled_series_per_experiment(all_tables, tmp_path):
    paths = studies.export(all_tables["study5"], tmp_path, ["svg"])
    assert [p.name for p in paths] == ["study5_serious.svg", "study5_minor.svg"]
    svg = paths[0].read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert svg.count("<polyline") == 10
    for k in range(50, 60):
        assert f"exp{k}" in svg


def test_svg_of_curves_with_zeros_renders(study1):
    svg = studies.render_svg(study1, "minor")
    assert "exp1" in svg and "nan" not in svg.lower()


def test_unknown_export_format(study1, tmp_path):
    with pytest.raises(ConfigError):
        studies.export(study1, tmp_path, ["png"])


def test_custom_grid_is_respected():
    exp = replace(find_experiment("exp25"), grid=TimeGrid.regular(300, 100))
    t = run_study(studies.StudySpec("g", (exp,)))
    assert t.grid.points == (100.0, 200.0, 300.0)
    assert t.at("exp25", 300.0)[0] > 0
    assert math.isclose(sum(t.at("exp25", 300.0)), 1.0, abs_tol=1e-12)
