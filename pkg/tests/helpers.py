"""Small hand-built chains shared by the tests."""

import numpy as np

from hazchain.model import MINOR, SERIOUS, Ctmc, FlatState, HighLevelState, SubState

A = FlatState(SubState.NON_BRAKING, HighLevelState.F_F_NB)
B = FlatState(SubState.NON_BRAKING, HighLevelState.F_S_NB)


def chain(transitions, states=(A, B, SERIOUS, MINOR), start=0) -> Ctmc:
    """Chain on ``states`` with arcs given by state objects."""
    idx = {s: k for k, s in enumerate(states)}
    arcs = tuple((idx[a], idx[b], float(r)) for a, b, r in transitions)
    init = np.zeros(len(states))
    init[start] = 1.0
    absorbing = frozenset(idx[s] for s in (SERIOUS, MINOR))
    return Ctmc(tuple(states), arcs, init, absorbing)


def single_exit(rate: float) -> Ctmc:
    """A -> Serious at ``rate``."""
    return chain([(A, SERIOUS, rate)])


def competing(rate_serious: float, rate_minor: float) -> Ctmc:
    return chain([(A, SERIOUS, rate_serious), (A, MINOR, rate_minor)])
