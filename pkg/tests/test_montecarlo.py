import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazchain import montecarlo as mc
from hazchain import rng, solver
from hazchain.errors import ModelError, ValidationError
from hazchain.model import ModelConfig, build_ctmc, table6_rates
from hazchain.studies import find_experiment

from helpers import A, B, chain, competing, single_exit


def exp_chain(exp_id):
    return build_ctmc(find_experiment(exp_id).config())


# --------------------------------------------------------------------------
# counter-based streams
# --------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(-(2 ** 70), 2 ** 70), st.integers(0, 2 ** 40), st.integers(0, 10 ** 6))
def test_numpy_and_compiled_uniforms_identical(seed, index, draw):
    key = rng.seed_key(seed)
    s_np = rng.stream_keys(key, np.array([index]))
    s_nb = rng.stream_key_scalar(np.uint64(key), index)
    assert int(s_np[0]) == int(s_nb)
    u_np = rng.uniforms(s_np, draw)[0]
    u_nb = rng.uniform_scalar(np.uint64(s_nb), draw)
    assert u_np == u_nb
    assert 0.0 < u_np < 1.0


def test_uniforms_look_uniform():
    u = rng.uniforms(rng.stream_keys(rng.seed_key(1), np.arange(200_000)), 3)
    hist, _ = np.histogram(u, bins=20, range=(0, 1))
    expected = len(u) / 20
    chi2 = ((hist - expected) ** 2 / expected).sum()
    assert chi2 < 50  # 19 dof; p ~ 1e-4
    v = rng.uniforms(rng.stream_keys(rng.seed_key(1), np.arange(200_000)), 4)
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.01


def test_streams_differ_by_seed_and_index():
    a = rng.stream_keys(rng.seed_key(1), np.arange(1000))
    b = rng.stream_keys(rng.seed_key(2), np.arange(1000))
    assert len(set(a.tolist()) | set(b.tolist())) == 2000


# --------------------------------------------------------------------------
# single missions
# --------------------------------------------------------------------------

def test_experiment_one_always_succeeds():
    ctmc = build_ctmc(ModelConfig(table6_rates()))
    for seed in range(3):
        out = mc.simulate_mission(ctmc, 50.0, seed)
        assert out.value is mc.Outcome.SUCCESS and out.time_of_absorption is None
        assert out.events > 0


def test_mission_is_deterministic_with_trajectory():
    ctmc = exp_chain("exp55")
    a = mc.simulate_mission(ctmc, 5.0, 11, replication=4, trajectory=True)
    b = mc.simulate_mission(ctmc, 5.0, 11, replication=4, trajectory=True)
    assert a == b
    assert a.trajectory[0] == (0.0, "F_F_NB")
    times = [t for t, _ in a.trajectory]
    assert times == sorted(times) and times[-1] <= 5.0
    assert len(a.trajectory) == a.events + 1


def test_trajectory_is_capped():
    ctmc = exp_chain("exp25")
    out = mc.simulate_mission(ctmc, 500.0, 1, trajectory=True)
    assert out.events > mc.TRAJECTORY_CAP
    assert len(out.trajectory) == mc.TRAJECTORY_CAP


def test_absorption_time_present_iff_accident():
    ctmc = single_exit(50.0)
    out = mc.simulate_mission(ctmc, 1.0, 0)
    assert out.value is mc.Outcome.SERIOUS and 0 < out.time_of_absorption <= 1.0
    with pytest.raises(ValueError):
        mc.MissionOutcome(mc.Outcome.SUCCESS, 0.5)
    with pytest.raises(ValueError):
        mc.MissionOutcome(mc.Outcome.MINOR, None)


def test_dead_state_is_model_error():
    ctmc = chain([(A, B, 1.0)])
    with pytest.raises(ModelError):
        mc.simulate_mission(ctmc, 10.0, 0)
    with pytest.raises(ModelError):
        mc.estimate(ctmc, 10.0, 10, 0)
    with pytest.raises(ModelError):
        mc.estimate(ctmc, 10.0, 10, 0, method="race")


def test_bad_arguments():
    with pytest.raises(ValidationError):
        mc.estimate(single_exit(1.0), 1.0, 0, 0)
    with pytest.raises(ValidationError):
        mc.estimate(single_exit(1.0), 0.0, 10, 0)
    with pytest.raises(ValidationError):
        mc.estimate(single_exit(1.0), 1.0, 10, 0, method="importance")


# --------------------------------------------------------------------------
# estimates against closed forms and the solver
# --------------------------------------------------------------------------

@pytest.mark.parametrize("method", ["race", "thinning"])
def test_two_state_chain_fraction(method):
    est = mc.estimate(single_exit(1.0), 1.0, 1_000_000, 5, method=method)
    p = 1 - math.exp(-1)
    assert abs(est.p_serious - p) <= 3 * est.stderr_serious
    assert est.n_minor == 0


@pytest.mark.parametrize("method", ["race", "thinning"])
def test_competing_split(method):
    est = mc.estimate(competing(1.0, 3.0), 5.0, 200_000, 9, method=method)
    ps, pm, _ = solver.mission_outcome_probs(competing(1.0, 3.0), 5.0)
    assert abs(est.p_serious - ps) <= 3 * est.stderr_serious
    assert abs(est.p_minor - pm) <= 3 * est.stderr_minor


def test_race_and_thinning_agree_with_solver_on_stiff_short_mission():
    # large hazard rates so that many candidates fall inside the mixing horizon
    from dataclasses import replace
    from hazchain.model import default_hazard
    hz = {s: replace(h, p_overlook=0.3, rate_policy_fail_timely=50.0, rate_accident_during_overlook=100.0,
                     rate_policy_fail_late=20.0) for s, h in default_hazard().items()}
    ctmc = build_ctmc(ModelConfig(table6_rates(), hazard=hz))
    ps, pm, _ = solver.mission_outcome_probs(ctmc, 0.05)
    for method in ("race", "thinning"):
        est = mc.estimate(ctmc, 0.05, 100_000, 3, method=method)
        assert abs(est.p_serious - ps) <= 3.5 * est.stderr_serious
        assert abs(est.p_minor - pm) <= 3.5 * est.stderr_minor


def test_exp25_against_solver():
    ctmc = exp_chain("exp25")
    ps, pm, _ = solver.mission_outcome_probs(ctmc, 9100.0)
    est = mc.estimate(ctmc, 9100.0, 1_000_000, 25, workers=2)
    assert abs(est.p_serious - ps) <= 3 * est.stderr_serious
    assert abs(est.p_minor - pm) <= 3 * est.stderr_minor


def test_absorption_time_cdf_within_dkw_band():
    ctmc = exp_chain("exp55")
    grid = solver.default_grid()
    exact = solver.uniformize(ctmc, grid)
    n = 200_000
    est = mc.estimate(ctmc, 9100.0, n, 77, keep_outcomes=True)
    ps, pm = est.curves(grid.points)
    band = math.sqrt(math.log(2 / 0.01) / (2 * n))
    assert np.abs(ps - exact.p_serious).max() <= band
    assert np.abs(pm - exact.p_minor).max() <= band


# --------------------------------------------------------------------------
# seeding contract
# --------------------------------------------------------------------------

def test_counts_partition_n():
    est = mc.estimate(exp_chain("exp55"), 9100.0, 50_000, 1)
    assert est.n_serious + est.n_minor + est.n_success == est.n
    assert est.p_serious + est.p_minor + est.p_success == pytest.approx(1.0, abs=1e-15)
    assert est.stderr_serious == math.sqrt(est.p_serious * (1 - est.p_serious) / est.n)


def test_n_one_on_experiment_one():
    est = mc.estimate(build_ctmc(ModelConfig(table6_rates())), 9100.0, 1, 0)
    assert est.p_success == 1.0


@pytest.mark.parametrize("method,mission", [("thinning", 9100.0), ("race", 0.5)])
def test_doubling_n_keeps_prefix(method, mission):
    ctmc = exp_chain("exp55") if method == "thinning" else single_exit(2.0)
    a = mc.run_replications(ctmc, mission, 70_000, 4, method=method)
    b = mc.run_replications(ctmc, mission, 140_000, 4, method=method)
    assert np.array_equal(a[0], b[0][:70_000])
    assert np.array_equal(a[1], b[1][:70_000], equal_nan=True)


def test_worker_count_does_not_change_results():
    ctmc = exp_chain("exp45")
    base = mc.run_replications(ctmc, 9100.0, 150_000, 8, workers=1)
    for w in (2, 5):
        other = mc.run_replications(ctmc, 9100.0, 150_000, 8, workers=w)
        assert np.array_equal(base[0], other[0])
        assert np.array_equal(base[1], other[1], equal_nan=True)


def test_single_mission_matches_race_replication():
    ctmc = single_exit(1.5)
    codes, times = mc.run_replications(ctmc, 1.0, 20, 6, method="race")
    for i in range(20):
        out = mc.simulate_mission(ctmc, 1.0, 6, replication=i)
        assert (out.value is mc.Outcome.SERIOUS) == (codes[i] == mc.SERIOUS_CODE)
        if codes[i]:
            assert out.time_of_absorption == times[i]


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def test_json_and_mission_csv(tmp_path):
    est = mc.estimate(single_exit(1.0), 1.0, 100, 3, keep_outcomes=True)
    est.write_json(tmp_path / "s.json")
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["n"] == 100 and doc["seed"] == 3
    assert doc["counts"]["serious"] == est.n_serious
    est.write_missions(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "replication,outcome,t_absorb_hours"
    assert len(lines) == 101
    for line in lines[1:]:
        _, outcome, t = line.split(",")
        assert (outcome == "Success") == (t == "")
