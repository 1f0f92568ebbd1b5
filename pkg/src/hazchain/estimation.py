"""Rate estimation from run-length encoded driving logs.

A log is a sequence of rows ``frame, driving_type, speed, braking, duration``
where each row is a run of frames spent in one high-level state.  Speed and
braking are either categorical (``fast``/``slow``, ``brake``/``nobrake``) or
raw measurements, in which case the CSV header reads ``speed_mps`` and
``decel_mps2`` and rows are classified with the dataset thresholds.

Pipeline: rows -> sojourns (maximal runs of one state, durations in seconds,
final sojourn censored) -> per-pair counts and durations -> rates in 1/h.

Two estimators are offered:

* ``per_transition``: ``count(f, t) / duration(f, t)`` where ``duration`` sums
  the sojourns in ``f`` that ended by moving to ``t``.  This treats every
  transition as its own timed activity.
* ``competing_risks``: ``count(f, t) / exposure(f)`` with ``exposure`` the
  total uncensored time spent in ``f``.  This is the maximum likelihood
  estimate when destinations race.

``generate_synthetic_log`` produces logs from known rates in either regime,
so both estimators can be checked against the rates that generated the data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from numba import njit

from hazchain import rng
from hazchain.errors import ConfigError, FormatError
from hazchain.model import (
    ALL_PAIRS,
    DEFAULT_DECEL_THRESHOLD_MPS2,
    DEFAULT_SPEED_THRESHOLD_MPS,
    HIGH_LEVEL_STATES,
    SCHEMA_VERSION,
    BrakingFlag,
    HighLevelState,
    RateTable,
    RoadCondition,
    SpeedBand,
    rate_name,
)

ESTIMATORS = ("per_transition", "competing_risks")
AGGREGATIONS = ("pooled", "per_vehicle_mean")
GENERATOR_MODES = ("race", "per_transition")
LOW_COUNT = 5
SECONDS_PER_HOUR = 3600.0

CATEGORICAL_HEADER = ("frame", "driving_type", "speed", "braking", "duration")
RAW_HEADER = ("frame", "driving_type", "speed_mps", "decel_mps2", "duration")

_INDEX = {s: k for k, s in enumerate(HIGH_LEVEL_STATES)}
_ROADS = {r.value: r for r in RoadCondition}
_SPEEDS = {s.value: s for s in SpeedBand}
_BRAKES = {b.value: b for b in BrakingFlag}


@dataclass(frozen=True)
class DatasetMeta:
    frame_rate_hz: float
    speed_threshold_mps: float = DEFAULT_SPEED_THRESHOLD_MPS
    decel_threshold_mps2: float = DEFAULT_DECEL_THRESHOLD_MPS2
    vehicle_id: str = ""

    def __post_init__(self):
        fr = self.frame_rate_hz
        if isinstance(fr, bool) or not isinstance(fr, (int, float)) or not math.isfinite(fr) or fr <= 0:
            raise ConfigError(f"frame_rate_hz must be a positive number, got {fr!r}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatasetMeta":
        if "frame_rate_hz" not in doc:
            raise ConfigError("dataset metadata lacks the required frame_rate_hz")
        return cls(
            frame_rate_hz=doc["frame_rate_hz"],
            speed_threshold_mps=float(doc.get("speed_threshold_mps", DEFAULT_SPEED_THRESHOLD_MPS)),
            decel_threshold_mps2=float(doc.get("decel_threshold_mps2", DEFAULT_DECEL_THRESHOLD_MPS2)),
            vehicle_id=str(doc.get("vehicle_id", "")),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "frame_rate_hz": self.frame_rate_hz,
            "speed_threshold_mps": self.speed_threshold_mps,
            "decel_threshold_mps2": self.decel_threshold_mps2,
            "vehicle_id": self.vehicle_id,
        }


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    driving_type: RoadCondition
    speed: SpeedBand | float
    braking: BrakingFlag | float
    duration_frames: int

    def state(self, meta: DatasetMeta) -> HighLevelState:
        speed = self.speed
        braking = self.braking
        if isinstance(speed, SpeedBand) and isinstance(braking, BrakingFlag):
            return HighLevelState.of(self.driving_type, speed, braking)
        if isinstance(speed, SpeedBand) or isinstance(braking, BrakingFlag):
            raise FormatError("speed and braking must both be categorical or both be raw")
        return classify_frame(speed, braking, self.driving_type, meta)


def classify_frame(speed_mps: float, decel_mps2: float, road: RoadCondition,
                   meta: DatasetMeta) -> HighLevelState:
    """Fast iff strictly above the speed threshold; braking iff at or above the decel threshold."""
    if not speed_mps >= 0:
        raise FormatError(f"speed must be >= 0, got {speed_mps}")
    if not math.isfinite(decel_mps2):
        raise FormatError(f"deceleration must be finite, got {decel_mps2}")
    speed = SpeedBand.FAST if speed_mps > meta.speed_threshold_mps else SpeedBand.SLOW
    brake = BrakingFlag.BRAKING if decel_mps2 >= meta.decel_threshold_mps2 else BrakingFlag.NON_BRAKING
    return HighLevelState.of(road, speed, brake)


# --------------------------------------------------------------------------
# columnar containers (synthetic logs reach millions of rows)
# --------------------------------------------------------------------------

@dataclass
class StateLog:
    """Run-length rows already reduced to high-level state indices."""

    frame: np.ndarray      # int64 start frame of each row
    state: np.ndarray      # int64 index into HIGH_LEVEL_STATES
    duration: np.ndarray   # int64 frames

    def __len__(self) -> int:
        return len(self.state)

    def records(self) -> Iterator[FrameRecord]:
        for f, s, d in zip(self.frame.tolist(), self.state.tolist(), self.duration.tolist()):
            hl = HIGH_LEVEL_STATES[s]
            yield FrameRecord(f, hl.road, hl.speed, hl.braking, d)

    @classmethod
    def from_records(cls, frames: Iterable[FrameRecord], meta: DatasetMeta) -> "StateLog":
        fi, st, du = [], [], []
        for rec in frames:
            fi.append(rec.frame_index)
            st.append(_INDEX[rec.state(meta)])
            du.append(rec.duration_frames)
        return cls(np.array(fi, dtype=np.int64), np.array(st, dtype=np.int64),
                   np.array(du, dtype=np.int64))


@dataclass(frozen=True)
class SojournRecord:
    state: HighLevelState
    duration_s: float
    next_state: HighLevelState | None  # None marks the end of the trace

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("sojourn duration must be positive")
        if self.next_state is self.state:
            raise ValueError("a sojourn cannot end in its own state")


@dataclass
class Sojourns:
    state: np.ndarray
    duration_s: np.ndarray
    next_state: np.ndarray  # -1 at end of trace

    def __len__(self) -> int:
        return len(self.state)

    def __iter__(self) -> Iterator[SojournRecord]:
        for s, d, n in zip(self.state.tolist(), self.duration_s.tolist(), self.next_state.tolist()):
            yield SojournRecord(HIGH_LEVEL_STATES[s], d, None if n < 0 else HIGH_LEVEL_STATES[n])

    def __getitem__(self, k: int) -> SojournRecord:
        n = int(self.next_state[k])
        return SojournRecord(HIGH_LEVEL_STATES[int(self.state[k])], float(self.duration_s[k]),
                             None if n < 0 else HIGH_LEVEL_STATES[n])


def segment_sojourns(frames: StateLog | Sequence[FrameRecord], meta: DatasetMeta) -> Sojourns:
    """Merge runs of equal state; durations in seconds; last sojourn ends the trace."""
    log = frames if isinstance(frames, StateLog) else StateLog.from_records(frames, meta)
    if len(log) == 0:
        return Sojourns(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))
    if (log.duration < 1).any():
        raise FormatError("every row must last at least one frame")
    if log.frame[0] < 0:
        raise FormatError("frame indices must be >= 0")
    expected = log.frame[:-1] + log.duration[:-1]
    bad = np.flatnonzero(log.frame[1:] != expected)
    if bad.size:
        k = int(bad[0]) + 1
        raise FormatError(f"row {k}: frame {int(log.frame[k])} does not follow "
                          f"frame {int(log.frame[k - 1])} + duration {int(log.duration[k - 1])}")
    starts = np.r_[0, np.flatnonzero(np.diff(log.state) != 0) + 1]
    frames_per = np.add.reduceat(log.duration, starts)
    state = log.state[starts]
    nxt = np.r_[state[1:], -1]
    return Sojourns(state, frames_per / float(meta.frame_rate_hz), nxt)


@dataclass
class TransitionCounts:
    count: np.ndarray = field(default_factory=lambda: np.zeros((8, 8), dtype=np.int64))
    total_duration_s: np.ndarray = field(default_factory=lambda: np.zeros((8, 8)))

    def __add__(self, other: "TransitionCounts") -> "TransitionCounts":
        return TransitionCounts(self.count + other.count, self.total_duration_s + other.total_duration_s)

    def of(self, src: HighLevelState, dst: HighLevelState) -> int:
        return int(self.count[_INDEX[src], _INDEX[dst]])

    def duration_of(self, src: HighLevelState, dst: HighLevelState) -> float:
        return float(self.total_duration_s[_INDEX[src], _INDEX[dst]])

    def exposure_s(self) -> np.ndarray:
        """Uncensored time spent in each source state."""
        return self.total_duration_s.sum(axis=1)

    def to_named(self) -> dict[str, int]:
        return {rate_name(a, b): self.of(a, b) for a, b in ALL_PAIRS}


def merge_counts(parts: Iterable[TransitionCounts]) -> TransitionCounts:
    out = TransitionCounts()
    for p in parts:
        out = out + p
    return out


def count_transitions(sojourns: Sojourns | Iterable[SojournRecord]) -> TransitionCounts:
    """Count completed sojourns per (state, next state); end-of-trace ones are dropped."""
    if not isinstance(sojourns, Sojourns):
        recs = list(sojourns)
        sojourns = Sojourns(
            np.array([_INDEX[r.state] for r in recs], dtype=np.int64),
            np.array([r.duration_s for r in recs], dtype=float),
            np.array([-1 if r.next_state is None else _INDEX[r.next_state] for r in recs], dtype=np.int64),
        )
    done = sojourns.next_state >= 0
    src = sojourns.state[done]
    dst = sojourns.next_state[done]
    flat = src * 8 + dst
    count = np.bincount(flat, minlength=64).reshape(8, 8).astype(np.int64)
    dur = np.bincount(flat, weights=sojourns.duration_s[done], minlength=64).reshape(8, 8)
    return TransitionCounts(count, dur)


@dataclass
class RateEstimates:
    rates: RateTable
    estimator: str
    support: TransitionCounts

    def zero_count(self) -> list[str]:
        return [rate_name(a, b) for a, b in ALL_PAIRS if self.support.of(a, b) == 0]

    def low_count(self) -> list[str]:
        return [rate_name(a, b) for a, b in ALL_PAIRS if 0 < self.support.of(a, b) < LOW_COUNT]

    def to_rate_file(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "unit": "1/h",
            "estimator": self.estimator,
            "rates": self.rates.to_named(),
            "counts": self.support.to_named(),
        }

    def diagnostics(self) -> dict:
        exposure = self.support.exposure_s()
        return {
            "schema_version": SCHEMA_VERSION,
            "estimator": self.estimator,
            "transitions_observed": int(self.support.count.sum()),
            "zero_count": self.zero_count(),
            "low_count": {n: self.support.to_named()[n] for n in self.low_count()},
            "low_count_threshold": LOW_COUNT,
            "exposure_hours": {s.name: float(exposure[k]) / SECONDS_PER_HOUR
                               for k, s in enumerate(HIGH_LEVEL_STATES)},
        }


def _rate_matrix(counts: TransitionCounts, estimator: str) -> np.ndarray:
    hours = counts.total_duration_s / SECONDS_PER_HOUR
    if estimator == "per_transition":
        denom = hours
    elif estimator == "competing_risks":
        denom = np.broadcast_to(hours.sum(axis=1, keepdims=True), hours.shape)
    else:
        raise ConfigError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
    out = np.zeros((8, 8))
    seen = counts.count > 0
    out[seen] = counts.count[seen] / denom[seen]
    return out


def _table(matrix: np.ndarray) -> RateTable:
    return RateTable({(a, b): float(matrix[_INDEX[a], _INDEX[b]]) for a, b in ALL_PAIRS})


def estimate_rates(counts: TransitionCounts, estimator: str = "per_transition") -> RateEstimates:
    return RateEstimates(_table(_rate_matrix(counts, estimator)), estimator, counts)


def estimate_per_vehicle_mean(parts: Sequence[TransitionCounts],
                              estimator: str = "per_transition") -> RateEstimates:
    """Average of per-vehicle estimates; support is the pooled counts."""
    if not parts:
        raise ConfigError("no vehicle logs to estimate from")
    mean = np.mean([_rate_matrix(p, estimator) for p in parts], axis=0)
    return RateEstimates(_table(mean), estimator, merge_counts(parts))


# --------------------------------------------------------------------------
# synthetic logs
# --------------------------------------------------------------------------

@njit(cache=True)
def _generate(rates, race, start, stream, total_s, frame_rate):
    exits = rates.sum(axis=1)
    cap = 1024
    states = np.empty(cap, dtype=np.int64)
    frames = np.empty(cap, dtype=np.int64)
    n = 0
    t = 0.0
    state = start
    draw = 0
    total_frames = int(math.floor(total_s * frame_rate))
    used = 0
    while used < total_frames:
        u = rng.uniform_scalar(stream, draw) * exits[state]
        draw += 1
        nxt = 7
        acc = 0.0
        for j in range(8):
            acc += rates[state, j]
            if u < acc:
                nxt = j
                break
        while rates[state, nxt] <= 0.0:
            nxt -= 1
        lam = exits[state] if race else rates[state, nxt]
        d = -math.log(rng.uniform_scalar(stream, draw)) / lam * 3600.0
        draw += 1
        k = max(1, int(math.floor(d * frame_rate + 0.5)))
        if used + k > total_frames:
            k = total_frames - used
        if n == cap:
            cap *= 2
            states = np.concatenate((states, np.empty(cap - n, dtype=np.int64)))
            frames = np.concatenate((frames, np.empty(cap - n, dtype=np.int64)))
        states[n] = state
        frames[n] = k
        n += 1
        used += k
        state = nxt
    return states[:n], frames[:n]


def generate_synthetic_log(rates: RateTable, total_hours: float, seed: int, meta: DatasetMeta, *,
                           mode: str = "race",
                           initial: HighLevelState = HighLevelState.F_F_NB,
                           vehicle: int = 0) -> StateLog:
    """Sample a high-level trajectory and quantize sojourns to whole frames (>= 1).

    ``race``: holding time ~ Exp(exit rate), destination ~ rates / exit rate.
    ``per_transition``: destination ~ rates / exit rate, then holding time
    ~ Exp(rate of the chosen transition).  The last row is cut at
    ``total_hours``.  ``vehicle`` selects an independent stream under ``seed``.
    """
    if mode not in GENERATOR_MODES:
        raise ConfigError(f"unknown generator mode {mode!r}; choose from {', '.join(GENERATOR_MODES)}")
    if not total_hours >= 0:
        raise ConfigError("total_hours must be >= 0")
    m = rates.matrix()
    reach = {_INDEX[initial]}
    frontier = [_INDEX[initial]]
    while frontier:
        i = frontier.pop()
        if m[i].sum() <= 0:
            raise ConfigError(f"{HIGH_LEVEL_STATES[i].name} has no outgoing rate")
        for j in np.flatnonzero(m[i] > 0):
            if int(j) not in reach:
                reach.add(int(j))
                frontier.append(int(j))
    stream = np.uint64(rng.stream_key_scalar(np.uint64(rng.seed_key(seed)), vehicle))
    states, durs = _generate(m, mode == "race", _INDEX[initial], stream,
                             float(total_hours) * SECONDS_PER_HOUR, float(meta.frame_rate_hz))
    starts = np.r_[0, np.cumsum(durs)[:-1]].astype(np.int64) if len(durs) else np.zeros(0, np.int64)
    return StateLog(starts, states, durs)


def synthetic_counts(rates: RateTable, total_hours: float, seed: int, meta: DatasetMeta, *,
                     mode: str = "race", pieces: int = 1) -> TransitionCounts:
    """Counts of ``pieces`` independent logs of ``total_hours / pieces`` each."""
    each = total_hours / pieces
    return merge_counts(
        count_transitions(segment_sojourns(generate_synthetic_log(rates, each, seed, meta, mode=mode,
                                                                  vehicle=k), meta))
        for k in range(pieces)
    )


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def read_log_csv(path: str | Path, meta: DatasetMeta) -> StateLog:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header == CATEGORICAL_HEADER:
            raw = False
        elif header == RAW_HEADER:
            raw = True
        else:
            raise FormatError(f"{path}: header must be {','.join(CATEGORICAL_HEADER)} "
                              f"or {','.join(RAW_HEADER)}")
        fi, st, du = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                frame, road, speed, braking, duration = (c.strip() for c in row)
                road_v = _ROADS[road]
                if raw:
                    hl = classify_frame(float(speed), float(braking), road_v, meta)
                else:
                    hl = HighLevelState.of(road_v, _SPEEDS[speed], _BRAKES[braking])
                fi.append(int(frame))
                du.append(int(duration))
            except (ValueError, KeyError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed row {row!r}") from exc
            st.append(_INDEX[hl])
    return StateLog(np.array(fi, dtype=np.int64), np.array(st, dtype=np.int64),
                    np.array(du, dtype=np.int64))


def write_log_csv(log: StateLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CATEGORICAL_HEADER)
        for rec in log.records():
            w.writerow([rec.frame_index, rec.driving_type.value, rec.speed.value,
                        rec.braking.value, rec.duration_frames])


def read_meta(path: str | Path) -> DatasetMeta:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read dataset metadata {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: metadata must be a JSON object")
    if "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {doc['schema_version']!r}")
    return DatasetMeta.from_dict(doc)


def load_dataset(directory: str | Path, meta_path: str | Path | None = None
                 ) -> tuple[DatasetMeta, list[tuple[str, StateLog]]]:
    """Per-vehicle CSV logs of a dataset directory, in file-name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory} is not a directory")
    meta = read_meta(meta_path if meta_path is not None else directory / "meta.json")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise ConfigError(f"{directory} contains no .csv logs")
    return meta, [(f.stem, read_log_csv(f, meta)) for f in files]


def estimate_dataset(directory: str | Path, estimator: str = "per_transition", *,
                     meta_path: str | Path | None = None, aggregate: str = "pooled") -> RateEstimates:
    meta, logs = load_dataset(directory, meta_path)
    parts = [count_transitions(segment_sojourns(log, meta)) for _, log in logs]
    if aggregate == "pooled":
        return estimate_rates(merge_counts(parts), estimator)
    if aggregate == "per_vehicle_mean":
        return estimate_per_vehicle_mean(parts, estimator)
    raise ConfigError(f"unknown aggregation {aggregate!r}; choose from {', '.join(AGGREGATIONS)}")


def write_synthetic_dataset(out_dir: str | Path, rates: RateTable, *, vehicles: int, hours_each: float,
                            seed: int, meta: DatasetMeta, mode: str = "per_transition") -> list[Path]:
    """Per-vehicle CSV logs plus ``meta.json`` recording how they were generated."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(vehicles):
        path = out_dir / f"vehicle_{k:02d}.csv"
        write_log_csv(generate_synthetic_log(rates, hours_each, seed, meta, mode=mode, vehicle=k), path)
        written.append(path)
    doc = meta.to_dict()
    doc["generator"] = {"mode": mode, "seed": seed, "vehicles": vehicles, "hours_each": hours_each,
                        "rates": "builtin:table6"}
    (out_dir / "meta.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(out_dir / "meta.json")
    return written
