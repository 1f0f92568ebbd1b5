"""Discrete-event simulation of missions over the flattened chain.

Two exact samplers of the same process are provided.

``race``
    The textbook jump-by-jump simulation: holding time ~ Exp(total rate),
    destination chosen proportionally to the arc rates.  A 9100 h mission
    of the intersection model makes about 2e7 jumps, so this is used for
    single trajectories and short missions.

``thinning``
    Accident arcs act as a killing rate ``a(x)`` on the chain ``X0`` obtained
    by deleting them.  Absorption is the first point of a Poisson process of
    intensity ``a(X0_t)``, generated by thinning a homogeneous process of
    rate ``a_max``: candidate times are ``Exp(a_max)`` apart, the state of
    ``X0`` at a candidate is drawn from its exact transition law given the
    state at the previous candidate, and the candidate is accepted with
    probability ``a(x) / a_max``.  Transition laws come from a spectral
    factorisation of ``Q0`` that is kept only if it reproduces
    ``scipy.linalg.expm`` to 1e-12 (else from ``expm`` itself); once the
    gap exceeds the horizon ``h_mix`` at which every row of
    ``exp(Q0 h_mix)`` agrees to 1e-15, the common row is used.
    The cost is proportional to ``a_max * mission``, not to the number of
    jumps.

Both consume the counter-based streams of :mod:`hazchain.rng`, so
replication ``i`` gives the same outcome whatever ``n`` and worker count.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit
from scipy.linalg import expm

from hazchain import rng
from hazchain.errors import ModelError, ValidationError
from hazchain.model import MINOR, SCHEMA_VERSION, SERIOUS, Ctmc

TRAJECTORY_CAP = 100_000
CHUNK = 1 << 16
MIX_TOLERANCE = 1e-15

SUCCESS_CODE, SERIOUS_CODE, MINOR_CODE, DEAD_CODE = 0, 1, 2, -1


class Outcome(enum.Enum):
    SUCCESS = "Success"
    SERIOUS = "SeriousAccident"
    MINOR = "MinorAccident"


_CODE_TO_OUTCOME = {SUCCESS_CODE: Outcome.SUCCESS, SERIOUS_CODE: Outcome.SERIOUS,
                    MINOR_CODE: Outcome.MINOR}


@dataclass(frozen=True)
class MissionOutcome:
    value: Outcome
    time_of_absorption: float | None = None
    events: int = 0
    trajectory: tuple[tuple[float, str], ...] | None = None

    def __post_init__(self):
        if (self.value is Outcome.SUCCESS) != (self.time_of_absorption is None):
            raise ValueError("absorption time is present iff the mission ended in an accident")


@dataclass
class SimEstimate:
    n: int
    seed: int
    mission_hours: float
    method: str
    n_serious: int
    n_minor: int
    n_success: int
    codes: np.ndarray | None = field(default=None, repr=False)
    times: np.ndarray | None = field(default=None, repr=False)

    @property
    def p_serious(self) -> float:
        return self.n_serious / self.n

    @property
    def p_minor(self) -> float:
        return self.n_minor / self.n

    @property
    def p_success(self) -> float:
        return self.n_success / self.n

    def stderr(self, p: float) -> float:
        return math.sqrt(p * (1.0 - p) / self.n)

    @property
    def stderr_serious(self) -> float:
        return self.stderr(self.p_serious)

    @property
    def stderr_minor(self) -> float:
        return self.stderr(self.p_minor)

    @property
    def stderr_success(self) -> float:
        return self.stderr(self.p_success)

    def curves(self, times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Empirical P(absorbed in each class by t) at the given times."""
        if self.codes is None:
            raise ValueError("per-replication outcomes were not kept")
        t = np.asarray(times, dtype=float)
        out = []
        for code in (SERIOUS_CODE, MINOR_CODE):
            hit = np.sort(self.times[self.codes == code])
            out.append(np.searchsorted(hit, t, side="right") / self.n)
        return out[0], out[1]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "seed": self.seed,
            "mission_hours": self.mission_hours,
            "method": self.method,
            "counts": {"serious": self.n_serious, "minor": self.n_minor, "success": self.n_success},
            "p_serious": self.p_serious,
            "p_minor": self.p_minor,
            "p_success": self.p_success,
            "stderr": {"serious": self.stderr_serious, "minor": self.stderr_minor,
                       "success": self.stderr_success},
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_missions(self, path: str | Path) -> None:
        if self.codes is None:
            raise ValueError("per-replication outcomes were not kept")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "outcome", "t_absorb_hours"])
            for i, (c, t) in enumerate(zip(self.codes, self.times)):
                outcome = _CODE_TO_OUTCOME[int(c)]
                w.writerow([i, outcome.value, "" if outcome is Outcome.SUCCESS else repr(float(t))])


# --------------------------------------------------------------------------
# chain preprocessing
# --------------------------------------------------------------------------

def _absorb_codes(ctmc: Ctmc) -> np.ndarray:
    codes = np.zeros(ctmc.n, dtype=np.int64)
    codes[ctmc.states.index(SERIOUS)] = SERIOUS_CODE
    codes[ctmc.states.index(MINOR)] = MINOR_CODE
    for i in ctmc.absorbing:
        if codes[i] == 0:
            raise ModelError(f"absorbing state {ctmc.states[i].name} is not an accident class")
    return codes


def _check_live(ctmc: Ctmc) -> None:
    """Reject chains where a reachable non-absorbing state has no exits."""
    init = np.asarray(ctmc.initial, dtype=float)
    if init.shape != (ctmc.n,) or (init < 0).any() or abs(init.sum() - 1.0) > 1e-12:
        raise ValidationError("initial vector is not a probability vector")
    for i in ctmc.absorbing:
        if init[i] > 0:
            raise ValidationError("initial vector puts mass on an absorbing state")
    succ: list[list[int]] = [[] for _ in ctmc.states]
    for i, j, r in ctmc.transitions:
        if not r >= 0:
            raise ValidationError(f"negative rate {ctmc.states[i].name} -> {ctmc.states[j].name}")
        if i in ctmc.absorbing and r > 0:
            raise ValidationError(f"arc leaves absorbing state {ctmc.states[i].name}")
        if r > 0:
            succ[i].append(j)
    seen = set(int(i) for i in np.flatnonzero(init > 0))
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in succ[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    for i in sorted(seen):
        if i not in ctmc.absorbing and not succ[i]:
            raise ModelError(f"non-absorbing state {ctmc.states[i].name} has no outgoing transitions")


def _csr(ctmc: Ctmc):
    rates = ctmc.rate_matrix()
    indptr = [0]
    dest: list[int] = []
    cum: list[float] = []
    for i in range(ctmc.n):
        acc = 0.0
        for j in np.flatnonzero(rates[i] > 0):
            acc += rates[i, j]
            dest.append(int(j))
            cum.append(acc)
        indptr.append(len(dest))
    return (np.array(indptr, dtype=np.int64), np.array(dest, dtype=np.int64),
            np.array(cum, dtype=np.float64), rates.sum(axis=1))


# --------------------------------------------------------------------------
# race sampler
# --------------------------------------------------------------------------

@njit(cache=True)
def _pick(cdf, u):
    total = cdf[-1]
    x = u * total
    for k in range(cdf.shape[0]):
        if x < cdf[k]:
            return k
    return cdf.shape[0] - 1


@njit(cache=True)
def _race_one(indptr, dest, cum, exits, absorb, init_cdf, stream, mission, record, traj_t, traj_s):
    draw = 0
    state = _pick(init_cdf, rng.uniform_scalar(stream, draw))
    draw += 1
    t = 0.0
    events = 0
    nrec = 0
    if record:
        traj_t[0] = 0.0
        traj_s[0] = state
        nrec = 1
    while True:
        if absorb[state] != 0:
            return absorb[state], t, events, nrec
        total = exits[state]
        if total <= 0.0:
            return -1, t, events, nrec
        t += -math.log(rng.uniform_scalar(stream, draw)) / total
        draw += 1
        if t > mission:
            return 0, math.nan, events, nrec
        lo = indptr[state]
        hi = indptr[state + 1]
        state = dest[lo + _pick(cum[lo:hi], rng.uniform_scalar(stream, draw))]
        draw += 1
        events += 1
        if record and nrec < traj_t.shape[0]:
            traj_t[nrec] = t
            traj_s[nrec] = state
            nrec += 1


@njit(cache=True)
def _race_many(indptr, dest, cum, exits, absorb, init_cdf, key, start, count, mission):
    codes = np.zeros(count, dtype=np.int8)
    times = np.full(count, np.nan)
    dummy_t = np.zeros(1)
    dummy_s = np.zeros(1, dtype=np.int64)
    for r in range(count):
        stream = rng.stream_key_scalar(key, start + r)
        code, t, _, _ = _race_one(indptr, dest, cum, exits, absorb, init_cdf, stream, mission,
                                  False, dummy_t, dummy_s)
        codes[r] = code
        if code > 0:
            times[r] = t
    return codes, times


def simulate_mission(ctmc: Ctmc, mission_hours: float, seed: int, *, replication: int = 0,
                     trajectory: bool = False) -> MissionOutcome:
    """One mission by the exponential race, deterministic in (seed, replication)."""
    if not mission_hours > 0:
        raise ValidationError("mission_hours must be > 0")
    _check_live(ctmc)
    indptr, dest, cum, exits = _csr(ctmc)
    absorb = _absorb_codes(ctmc)
    init_cdf = np.cumsum(ctmc.initial)
    stream = np.uint64(rng.stream_key_scalar(np.uint64(rng.seed_key(seed)), replication))
    cap = TRAJECTORY_CAP if trajectory else 1
    traj_t = np.zeros(cap)
    traj_s = np.zeros(cap, dtype=np.int64)
    code, t, events, nrec = _race_one(indptr, dest, cum, exits, absorb, init_cdf, stream,
                                      float(mission_hours), trajectory, traj_t, traj_s)
    if code == DEAD_CODE:
        raise ModelError("simulation reached a non-absorbing state with no exits")
    path = None
    if trajectory:
        path = tuple((float(traj_t[k]), ctmc.states[int(traj_s[k])].name) for k in range(nrec))
    value = _CODE_TO_OUTCOME[int(code)]
    return MissionOutcome(value, None if value is Outcome.SUCCESS else float(t), int(events), path)


# --------------------------------------------------------------------------
# thinning sampler
# --------------------------------------------------------------------------

@dataclass
class _KilledChain:
    q0: np.ndarray          # generator of the chain without accident arcs
    kill_serious: np.ndarray
    kill_minor: np.ndarray
    init: np.ndarray
    a_max: float
    mixed_row: np.ndarray | None
    h_mix: float
    eig: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def transition_rows(self, cur: np.ndarray, dt: np.ndarray) -> np.ndarray:
        """Rows ``cur[k]`` of ``exp(Q0 dt[k])``."""
        if self.eig is not None:
            w, v, vinv = self.eig
            rows = ((v[cur] * np.exp(np.outer(dt, w))) @ vinv).real
        else:
            rows = expm(self.q0[None] * dt[:, None, None])[np.arange(cur.size), cur]
        return np.clip(rows, 0.0, None)


def _killed_chain(ctmc: Ctmc, mission_hours: float) -> _KilledChain:
    live = [i for i in range(ctmc.n) if i not in ctmc.absorbing]
    pos = {i: k for k, i in enumerate(live)}
    s_idx, m_idx = ctmc.states.index(SERIOUS), ctmc.states.index(MINOR)
    n = len(live)
    q0 = np.zeros((n, n))
    ks = np.zeros(n)
    km = np.zeros(n)
    for i, j, r in ctmc.transitions:
        if j == s_idx:
            ks[pos[i]] += r
        elif j == m_idx:
            km[pos[i]] += r
        else:
            q0[pos[i], pos[j]] += r
    q0[np.diag_indices(n)] = -q0.sum(axis=1)
    init = np.asarray(ctmc.initial)[live]
    a_max = float((ks + km).max()) if n else 0.0

    mixed_row, h_mix = None, math.inf
    speed = float(-q0.diagonal().min()) if n else 0.0
    if a_max > 0 and speed > 0:
        h = 1.0 / speed
        while h <= mission_hours:
            e = expm(q0 * h)
            if np.ptp(e, axis=0).max() <= MIX_TOLERANCE:
                mixed_row, h_mix = e.mean(axis=0), h
                break
            h *= 2.0
    return _KilledChain(q0, ks, km, init, a_max, mixed_row, h_mix, _eigen_route(q0, h_mix, speed))


def _eigen_route(q0: np.ndarray, h_mix: float, speed: float):
    """Spectral factors of Q0, kept only if they reproduce expm to 1e-12."""
    if q0.size == 0 or speed == 0:
        return None
    try:
        w, v = np.linalg.eig(q0)
        vinv = np.linalg.inv(v)
    except np.linalg.LinAlgError:
        return None
    top = min(h_mix, 1e3 / speed)
    for t in np.geomspace(1e-3 / speed, top, 12):
        approx = ((v * np.exp(w * t)) @ vinv).real
        if not np.abs(approx - expm(q0 * t)).max() <= 1e-12:
            return None
    return w, v, vinv


def _sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    if probs.ndim == 1:
        return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1)
    x = u * cdf[:, -1]
    return np.minimum((cdf <= x[:, None]).sum(axis=1), probs.shape[1] - 1)


def _thinning_block(kc: _KilledChain, key: int, start: int, count: int, mission: float):
    idx = np.arange(start, start + count, dtype=np.uint64)
    streams = rng.stream_keys(key, idx)
    codes = np.zeros(count, dtype=np.int8)
    times = np.full(count, np.nan)
    if kc.a_max == 0:
        return codes, times
    state = _sample_rows(kc.init, rng.uniforms(streams, 0))
    clock = np.zeros(count)
    alive = np.arange(count)
    rnd = 0
    while alive.size:
        s = streams[alive]
        gap = -np.log(rng.uniforms(s, 1 + 3 * rnd)) / kc.a_max
        clock[alive] += gap
        inside = clock[alive] <= mission
        alive, gap, s = alive[inside], gap[inside], s[inside]
        if not alive.size:
            break
        u_state = rng.uniforms(s, 2 + 3 * rnd)
        cur = state[alive]
        nxt = np.empty_like(cur)
        far = gap >= kc.h_mix
        if far.any():
            nxt[far] = _sample_rows(kc.mixed_row, u_state[far])
        near = np.flatnonzero(~far)
        for lo in range(0, near.size, 4096):
            k = near[lo:lo + 4096]
            nxt[k] = _sample_rows(kc.transition_rows(cur[k], gap[k]), u_state[k])
        state[alive] = nxt
        v = rng.uniforms(s, 3 + 3 * rnd) * kc.a_max
        serious = v < kc.kill_serious[nxt]
        minor = ~serious & (v < kc.kill_serious[nxt] + kc.kill_minor[nxt])
        codes[alive[serious]] = SERIOUS_CODE
        codes[alive[minor]] = MINOR_CODE
        hit = serious | minor
        times[alive[hit]] = clock[alive[hit]]
        alive = alive[~hit]
        rnd += 1
    return codes, times


# --------------------------------------------------------------------------
# replications
# --------------------------------------------------------------------------

def run_replications(ctmc: Ctmc, mission_hours: float, n: int, seed: int, *,
                     method: str = "thinning", workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Outcome codes (0 success, 1 serious, 2 minor) and absorption times."""
    if not mission_hours > 0:
        raise ValidationError("mission_hours must be > 0")
    if n < 1:
        raise ValidationError("n must be >= 1")
    _check_live(ctmc)
    key = rng.seed_key(seed)
    mission = float(mission_hours)
    blocks = [(s, min(CHUNK, n - s)) for s in range(0, n, CHUNK)]

    if method == "thinning":
        kc = _killed_chain(ctmc, mission)

        def work(block):
            return _thinning_block(kc, key, block[0], block[1], mission)
    elif method == "race":
        indptr, dest, cum, exits = _csr(ctmc)
        absorb = _absorb_codes(ctmc)
        init_cdf = np.cumsum(ctmc.initial)

        def work(block):
            return _race_many(indptr, dest, cum, exits, absorb, init_cdf, np.uint64(key),
                              block[0], block[1], mission)
    else:
        raise ValidationError(f"unknown simulation method {method!r}")

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    codes = np.concatenate([p[0] for p in parts])
    times = np.concatenate([p[1] for p in parts])
    if (codes == DEAD_CODE).any():
        raise ModelError("simulation reached a non-absorbing state with no exits")
    return codes, times


def estimate(ctmc: Ctmc, mission_hours: float, n: int, seed: int, *, method: str = "thinning",
             workers: int = 1, keep_outcomes: bool = False) -> SimEstimate:
    """Aggregate ``n`` independent missions."""
    codes, times = run_replications(ctmc, mission_hours, n, seed, method=method, workers=workers)
    counts = np.bincount(codes.astype(np.int64), minlength=3)
    return SimEstimate(
        n=n, seed=seed, mission_hours=float(mission_hours), method=method,
        n_serious=int(counts[SERIOUS_CODE]), n_minor=int(counts[MINOR_CODE]),
        n_success=int(counts[SUCCESS_CODE]),
        codes=codes if keep_outcomes else None,
        times=times if keep_outcomes else None,
    )
