import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import poisson
import mpmath as mp

from hazchain import solver
from hazchain.errors import SolverError, ValidationError
from hazchain.model import MINOR, SERIOUS, ModelConfig, build_ctmc, table6_rates
from hazchain.solver import SolverOptions, TimeGrid, default_grid, mission_outcome_probs, uniformize
from hazchain.studies import find_experiment

from helpers import A, B, chain, competing, single_exit


def exp_chain(exp_id):
    return build_ctmc(find_experiment(exp_id).config())


def expm_oracle(ctmc, times):
    q = ctmc.generator()
    p0 = np.asarray(ctmc.initial)
    return np.array([p0 @ expm(q * t) for t in times])


# --------------------------------------------------------------------------
# grid and options
# --------------------------------------------------------------------------

def test_default_grid():
    g = default_grid()
    assert len(g) == 91
    assert g.points[0] == 100.0 and g.points[-1] == 9100.0
    assert TimeGrid.regular(250, 100).points == (100.0, 200.0, 250.0)


@pytest.mark.parametrize("pts", [(), (0.0, 1.0), (2.0, 1.0), (1.0, 1.0), (float("inf"),)])
def test_bad_grids(pts):
    with pytest.raises(ValidationError):
        TimeGrid(pts)


@pytest.mark.parametrize("eps", [0.0, 1e-3, 0.5, -1e-12])
def test_epsilon_range(eps):
    with pytest.raises(ValidationError):
        SolverOptions(truncation_epsilon=eps)


# --------------------------------------------------------------------------
# Poisson weights
# --------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 1e-3, 0.7, 5.0, 80.0, 1234.5, 4.0e5])
def test_poisson_window_against_independent_oracles(lam):
    left, w = solver.poisson_window(lam, 1e-12)
    right = left + len(w) - 1
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # discarded mass from the distribution function, not from summing the pmf
    assert poisson.cdf(left - 1, lam) + poisson.sf(right, lam) <= 1e-12
    mp.mp.dps = 30
    for k in {left, (left + right) // 2, right}:
        exact = mp.e ** (-mp.mpf(lam)) if k == 0 else mp.exp(
            -mp.mpf(lam) + k * mp.log(mp.mpf(lam)) - mp.loggamma(k + 1))
        assert float(abs(w[k - left] - exact)) <= 1e-12 * float(exact) + 1e-13


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def test_single_exit_closed_form():
    res = uniformize(single_exit(1.0), [1.0])
    assert abs(res.p_serious[0] - (1 - math.exp(-1))) <= 1e-10
    assert res.p_minor[0] == 0.0


def test_competing_exits_limit():
    ps, pm, pz = mission_outcome_probs(competing(1.0, 3.0), 50.0)
    assert ps == pytest.approx(0.25, abs=1e-10)
    assert pm == pytest.approx(0.75, abs=1e-10)
    assert pz == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("a,b", [(1.0, 2.0), (3.0, 0.5), (1e3, 7.0)])
def test_two_stage_hypoexponential(a, b):
    ctmc = chain([(A, B, a), (B, SERIOUS, b)])
    t = np.array([0.01, 0.3, 1.0, 4.0])
    expected = 1 - (b * np.exp(-a * t) - a * np.exp(-b * t)) / (b - a)
    res = uniformize(ctmc, t)
    assert np.abs(res.p_serious - expected).max() <= 1e-10


# --------------------------------------------------------------------------
# full model against a dense matrix exponential
# --------------------------------------------------------------------------

def mpmath_oracle(ctmc, t, digits=40):
    mp.mp.dps = digits
    e = mp.expm(mp.matrix(ctmc.generator().tolist()) * t)
    return np.array([float(x) for x in mp.matrix([list(ctmc.initial)]) * e])


@pytest.mark.parametrize("exp_id", ["exp10", "exp25", "exp58"])
def test_matches_high_precision_reference(exp_id):
    # rounding accumulated over ~7e7 uniformized steps stays far below 1e-9
    ctmc = exp_chain(exp_id)
    res = uniformize(ctmc, [100.0, 9100.0])
    for k, t in enumerate((100.0, 9100.0)):
        assert np.abs(res.occupancy[k] - mpmath_oracle(ctmc, t)).max() <= 1e-9


@pytest.mark.parametrize("exp_id", ["exp10", "exp25", "exp33", "exp47", "exp58"])
def test_matches_dense_expm_on_grid(exp_id):
    ctmc = exp_chain(exp_id)
    times = [100.0, 1000.0, 4500.0, 9100.0]
    res = uniformize(ctmc, times)
    assert np.abs(res.occupancy - expm_oracle(ctmc, times)).max() <= 1e-9


def test_direct_and_squaring_agree():
    ctmc = exp_chain("exp55")
    times = [0.5, 1.0, 2.0, 3.5]
    a = uniformize(ctmc, times, SolverOptions(method="direct"))
    b = uniformize(ctmc, times, SolverOptions(method="squaring"))
    assert a.method == "direct" and b.method == "squaring"
    assert np.abs(a.occupancy - b.occupancy).max() <= 1e-12
    assert np.abs(a.occupancy - expm_oracle(ctmc, times)).max() <= 1e-12


def test_direct_route_respects_step_cap():
    ctmc = exp_chain("exp25")
    with pytest.raises(SolverError, match="F_"):
        uniformize(ctmc, [9100.0], SolverOptions(method="direct", max_uniformization_steps=1000))


def test_negative_rate_is_solver_error():
    ctmc = single_exit(1.0).with_transitions([(0, 2, -1.0)])
    with pytest.raises(SolverError):
        uniformize(ctmc, [1.0])


def test_overflowing_rates_are_solver_errors():
    with pytest.raises(SolverError):
        uniformize(single_exit(1e308), [1e10])


def test_halving_epsilon_moves_results_less_than_epsilon():
    ctmc = exp_chain("exp30")
    grid = default_grid()
    a = uniformize(ctmc, grid, SolverOptions(truncation_epsilon=1e-8)).occupancy
    b = uniformize(ctmc, grid, SolverOptions(truncation_epsilon=5e-9)).occupancy
    assert np.abs(a - b).max() < 1e-8


def test_mission_outcome_probs_sum_to_one():
    ps, pm, pz = mission_outcome_probs(exp_chain("exp25"), 9100.0)
    assert abs(ps + pm + pz - 1) <= 1e-9
    assert 0.006 <= ps <= 0.018
    with pytest.raises(ValidationError):
        mission_outcome_probs(exp_chain("exp25"), 0.0)


def test_experiment_one_is_accident_free():
    assert mission_outcome_probs(build_ctmc(ModelConfig(table6_rates())), 9100.0) == (0.0, 0.0, 1.0)


def test_curves_and_occupancy_csv(tmp_path):
    res = uniformize(exp_chain("exp25"), [10.0, 9100.0])
    res.write_curves(tmp_path / "c.csv")
    res.write_occupancy(tmp_path / "o.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t_hours,p_serious,p_minor,p_success"
    assert len(lines) == 3
    header = (tmp_path / "o.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t_hours" and header[-2:] == [SERIOUS.name, MINOR.name]
    assert float(lines[2].split(",")[1]) == res.p_serious[1]


# --------------------------------------------------------------------------
# properties on random chains
# --------------------------------------------------------------------------

@st.composite
def random_chain(draw):
    from hazchain.model import enumerate_states
    states = enumerate_states()[:4] + (SERIOUS, MINOR)
    n = len(states)
    arcs = []
    for i in range(4):
        for j in range(n):
            if i != j and draw(st.booleans()):
                arcs.append((states[i], states[j], draw(st.floats(1e-3, 50.0))))
    return chain(arcs, states=states)


@settings(max_examples=40, deadline=None)
@given(random_chain(), st.lists(st.floats(0.01, 20.0), min_size=1, max_size=5, unique=True),
       st.sampled_from(["direct", "squaring"]))
def test_random_chains_match_expm(ctmc, times, method):
    times = sorted(times)
    res = uniformize(ctmc, times, SolverOptions(method=method))
    assert np.abs(res.occupancy - expm_oracle(ctmc, times)).max() <= 1e-9
    assert np.abs(res.occupancy.sum(axis=1) - 1).max() <= 1e-9
    assert np.all(np.diff(res.p_serious) >= 0)
    assert np.all(np.diff(res.p_minor) >= 0)


@settings(max_examples=25, deadline=None)
@given(random_chain(), st.floats(0.05, 5.0), st.floats(0.01, 100.0))
def test_time_rescaling_invariance(ctmc, t, c):
    a = uniformize(ctmc, [t]).occupancy
    b = uniformize(ctmc.scaled(c), [t / c]).occupancy
    assert np.abs(a - b).max() <= 1e-9
