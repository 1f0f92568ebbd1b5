"""State space and flattened CTMC of the intersection hazard model.

The vehicle moves between 8 high-level driving states (road condition x
speed band x braking flag).  Each braking state is refined into three
substates:

    Detected      hazard perceived on entry; the driving policy may still fail
    Overlooked    hazard missed on entry; resolves into LateDetected
    LateDetected  hazard perceived after a delay; elevated policy failure

plus two absorbing accident classes.  Serious accidents can only follow a
fast braking state, minor accidents a slow one.

Construction rules used by :func:`build_ctmc`:

1. a high-level arc X -> Y with rate r leaves every exit-capable substate of
   X (NonBraking, Detected, LateDetected, and Overlooked only when
   ``overlooked_self_resolve`` is set);
2. entry into a braking Y is split into ``r * p_overlook`` towards
   Overlooked(Y) and the remainder towards Detected(Y);
3. Detected(X) -> Accident at ``rate_policy_fail_timely``;
4. Overlooked(X) -> LateDetected(X) at ``rate_overlook_exit`` and
   Overlooked(X) -> Accident at ``rate_accident_during_overlook``;
5. LateDetected(X) -> Accident at ``rate_policy_fail_late``;
6. accident states have no outgoing arcs.  Zero-rate arcs are dropped.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from hazchain.errors import ConfigError, ValidationError

SCHEMA_VERSION = 1

DEFAULT_SPEED_THRESHOLD_MPS = 15.0
DEFAULT_DECEL_THRESHOLD_MPS2 = 2.0


class RoadCondition(enum.Enum):
    FREE = "free"
    INTERSECTION = "intersection"


class SpeedBand(enum.Enum):
    FAST = "fast"
    SLOW = "slow"


class BrakingFlag(enum.Enum):
    BRAKING = "brake"
    NON_BRAKING = "nobrake"


class AccidentClass(enum.Enum):
    SERIOUS = "Serious"
    MINOR = "Minor"


_ROAD_CODE = {RoadCondition.FREE: "F", RoadCondition.INTERSECTION: "IS"}
_SPEED_CODE = {SpeedBand.FAST: "F", SpeedBand.SLOW: "S"}
_BRAKE_CODE = {BrakingFlag.BRAKING: "B", BrakingFlag.NON_BRAKING: "NB"}


class HighLevelState(enum.Enum):
    """The 8 driving states, in canonical order."""

    F_F_NB = (RoadCondition.FREE, SpeedBand.FAST, BrakingFlag.NON_BRAKING)
    F_F_B = (RoadCondition.FREE, SpeedBand.FAST, BrakingFlag.BRAKING)
    F_S_NB = (RoadCondition.FREE, SpeedBand.SLOW, BrakingFlag.NON_BRAKING)
    F_S_B = (RoadCondition.FREE, SpeedBand.SLOW, BrakingFlag.BRAKING)
    IS_F_NB = (RoadCondition.INTERSECTION, SpeedBand.FAST, BrakingFlag.NON_BRAKING)
    IS_F_B = (RoadCondition.INTERSECTION, SpeedBand.FAST, BrakingFlag.BRAKING)
    IS_S_NB = (RoadCondition.INTERSECTION, SpeedBand.SLOW, BrakingFlag.NON_BRAKING)
    IS_S_B = (RoadCondition.INTERSECTION, SpeedBand.SLOW, BrakingFlag.BRAKING)

    @property
    def road(self) -> RoadCondition:
        return self.value[0]

    @property
    def speed(self) -> SpeedBand:
        return self.value[1]

    @property
    def braking(self) -> BrakingFlag:
        return self.value[2]

    @property
    def hazardous(self) -> bool:
        return self.braking is BrakingFlag.BRAKING

    @property
    def accident_class(self) -> AccidentClass:
        return AccidentClass.SERIOUS if self.speed is SpeedBand.FAST else AccidentClass.MINOR

    @classmethod
    def of(cls, road: RoadCondition, speed: SpeedBand, braking: BrakingFlag) -> "HighLevelState":
        return cls[f"{_ROAD_CODE[road]}_{_SPEED_CODE[speed]}_{_BRAKE_CODE[braking]}"]

    def __repr__(self) -> str:
        return self.name


HIGH_LEVEL_STATES: tuple[HighLevelState, ...] = tuple(HighLevelState)
BRAKING_STATES: tuple[HighLevelState, ...] = tuple(s for s in HighLevelState if s.hazardous)
NON_BRAKING_STATES: tuple[HighLevelState, ...] = tuple(s for s in HighLevelState if not s.hazardous)


def parse_high_level(name: str) -> HighLevelState:
    try:
        return HighLevelState[name]
    except KeyError:
        raise ConfigError(f"unknown high-level state {name!r}") from None


# --------------------------------------------------------------------------
# rate tables
# --------------------------------------------------------------------------

def rate_name(src: HighLevelState, dst: HighLevelState) -> str:
    return f"rate_{src.name}2{dst.name}"


def parse_rate_name(name: str) -> tuple[HighLevelState, HighLevelState]:
    if not name.startswith("rate_") or "2" not in name:
        raise ConfigError(f"malformed rate name {name!r}")
    src, _, dst = name[len("rate_"):].partition("2")
    pair = parse_high_level(src), parse_high_level(dst)
    if pair[0] is pair[1]:
        raise ConfigError(f"self-transition {name!r} is not a rate")
    return pair


ALL_PAIRS: tuple[tuple[HighLevelState, HighLevelState], ...] = tuple(
    (a, b) for a in HIGH_LEVEL_STATES for b in HIGH_LEVEL_STATES if a is not b
)


@dataclass(frozen=True)
class RateTable:
    """The 56 directed high-level rates in 1/h.  Missing pairs are 0."""

    rate: Mapping[tuple[HighLevelState, HighLevelState], float] = field(default_factory=dict)

    def __post_init__(self):
        full = {pair: 0.0 for pair in ALL_PAIRS}
        for (a, b), r in dict(self.rate).items():
            if a is b:
                raise ValidationError(f"self-transition {a.name} has a rate")
            r = float(r)
            if not math.isfinite(r) or r < 0:
                raise ValidationError(f"{rate_name(a, b)} = {r} is not a non-negative rate")
            full[(a, b)] = r
        object.__setattr__(self, "rate", full)

    def __getitem__(self, pair: tuple[HighLevelState, HighLevelState]) -> float:
        return self.rate[pair]

    def exit_rate(self, src: HighLevelState) -> float:
        return sum(self.rate[(src, dst)] for dst in HIGH_LEVEL_STATES if dst is not src)

    def matrix(self) -> np.ndarray:
        """8x8 rate matrix in canonical state order (zero diagonal)."""
        out = np.zeros((8, 8))
        for (a, b), r in self.rate.items():
            out[HIGH_LEVEL_STATES.index(a), HIGH_LEVEL_STATES.index(b)] = r
        return out

    def scaled(self, factor: float) -> "RateTable":
        return RateTable({k: v * factor for k, v in self.rate.items()})

    def to_named(self) -> dict[str, float]:
        return {rate_name(a, b): self.rate[(a, b)] for a, b in ALL_PAIRS}

    @classmethod
    def from_named(cls, named: Mapping[str, float]) -> "RateTable":
        return cls({parse_rate_name(k): v for k, v in named.items()})


def _load_data_json(filename: str) -> dict:
    text = resources.files("hazchain.data").joinpath(filename).read_text()
    return json.loads(text)


def check_schema(doc: Mapping, what: str) -> None:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{what}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")


def table6_rates() -> RateTable:
    """Rates transcribed from the naturalistic dataset summary (56 transitions)."""
    doc = _load_data_json("table6_rates.json")
    check_schema(doc, "table6_rates.json")
    return RateTable.from_named(doc["rates"])


def table6_counts() -> dict[tuple[HighLevelState, HighLevelState], int]:
    doc = _load_data_json("table6_rates.json")
    return {parse_rate_name(k): int(v) for k, v in doc["counts"].items()}


def overlook_exit_rates() -> dict[HighLevelState, float]:
    """Per-braking-state exit rate of the overlooked substate (1/h)."""
    doc = _load_data_json("table3_sojourn.json")
    check_schema(doc, "table3_sojourn.json")
    return {parse_high_level(k): float(v) for k, v in doc["rate_overlook_exit"].items()}


def load_rate_file(path: str | Path) -> RateTable:
    """Read a rate JSON file (the format written by the estimator)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read rate file {path}: {exc}") from exc
    check_schema(doc, str(path))
    return RateTable.from_named(doc["rates"])


# --------------------------------------------------------------------------
# hazard parameters and config
# --------------------------------------------------------------------------

HAZARD_FIELDS = (
    "p_overlook",
    "rate_overlook_exit",
    "rate_accident_during_overlook",
    "rate_policy_fail_timely",
    "rate_policy_fail_late",
    "overlooked_self_resolve",
)


@dataclass(frozen=True)
class HazardParams:
    p_overlook: float = 0.0
    rate_overlook_exit: float = 0.0
    rate_accident_during_overlook: float = 0.0
    rate_policy_fail_timely: float = 0.0
    rate_policy_fail_late: float = 0.0
    overlooked_self_resolve: bool = False

    def check(self, where: str = "") -> None:
        prefix = f"{where}: " if where else ""
        p = self.p_overlook
        if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
            raise ValidationError(f"{prefix}p_overlook = {p} outside [0, 1]")
        for name in HAZARD_FIELDS[1:5]:
            r = getattr(self, name)
            if not math.isfinite(r) or r < 0:
                raise ValidationError(f"{prefix}{name} = {r} is not a non-negative rate")


def default_hazard() -> dict[HighLevelState, HazardParams]:
    """Hazard-free parameters: only the overlook exit rates are set."""
    return {s: HazardParams(rate_overlook_exit=r) for s, r in overlook_exit_rates().items()}


class SubState(enum.Enum):
    NON_BRAKING = "NonBraking"
    DETECTED = "Detected"
    OVERLOOKED = "Overlooked"
    LATE_DETECTED = "LateDetected"
    ACCIDENT = "Accident"


@dataclass(frozen=True)
class FlatState:
    """A node of the flattened chain."""

    kind: SubState
    high_level: HighLevelState | None = None
    accident: AccidentClass | None = None

    def __post_init__(self):
        if self.kind is SubState.ACCIDENT:
            if self.accident is None or self.high_level is not None:
                raise ValueError("Accident states carry an accident class only")
            return
        if self.high_level is None:
            raise ValueError(f"{self.kind.value} needs a high-level state")
        if (self.kind is SubState.NON_BRAKING) == self.high_level.hazardous:
            raise ValueError(f"{self.kind.value} cannot wrap {self.high_level.name}")

    @property
    def absorbing(self) -> bool:
        return self.kind is SubState.ACCIDENT

    @property
    def name(self) -> str:
        if self.kind is SubState.ACCIDENT:
            return f"Accident_{self.accident.value}"
        suffix = {SubState.OVERLOOKED: "_O", SubState.LATE_DETECTED: "_L"}.get(self.kind, "")
        return self.high_level.name + suffix

    def __repr__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, name: str) -> "FlatState":
        if name.startswith("Accident_"):
            try:
                return cls(SubState.ACCIDENT, accident=AccidentClass(name[len("Accident_"):]))
            except ValueError:
                raise ConfigError(f"unknown accident state {name!r}") from None
        kind = SubState.DETECTED
        base = name
        for suffix, k in (("_O", SubState.OVERLOOKED), ("_L", SubState.LATE_DETECTED)):
            if name.endswith(suffix):
                base, kind = name[: -len(suffix)], k
        hl = parse_high_level(base)
        if not hl.hazardous:
            if kind is not SubState.DETECTED:
                raise ConfigError(f"{name!r}: non-braking states have no substates")
            kind = SubState.NON_BRAKING
        return cls(kind, hl)


SERIOUS = FlatState(SubState.ACCIDENT, accident=AccidentClass.SERIOUS)
MINOR = FlatState(SubState.ACCIDENT, accident=AccidentClass.MINOR)
QUASI_STATIONARY = "quasi_stationary"


def entry_state(hl: HighLevelState) -> FlatState:
    return FlatState(SubState.DETECTED if hl.hazardous else SubState.NON_BRAKING, hl)


@dataclass(frozen=True)
class ModelConfig:
    rates: RateTable
    hazard: Mapping[HighLevelState, HazardParams] = field(default_factory=default_hazard)
    initial_state: FlatState | str = field(default_factory=lambda: entry_state(HighLevelState.F_F_NB))
    speed_threshold_mps: float = DEFAULT_SPEED_THRESHOLD_MPS
    decel_threshold_mps2: float = DEFAULT_DECEL_THRESHOLD_MPS2

    def check(self) -> None:
        if set(self.hazard) != set(BRAKING_STATES):
            raise ValidationError("hazard parameters must be given for exactly the 4 braking states")
        for s, h in self.hazard.items():
            h.check(s.name)
        if isinstance(self.initial_state, str):
            if self.initial_state != QUASI_STATIONARY:
                raise ValidationError(f"unknown initial_state {self.initial_state!r}")
        elif self.initial_state.absorbing:
            raise ValidationError("initial_state must not be absorbing")

    def with_hazard(self, **changes: Mapping[HighLevelState, HazardParams]) -> "ModelConfig":
        return replace(self, **changes)


def enumerate_states(config: ModelConfig | None = None) -> tuple[FlatState, ...]:
    """Canonical flat state order.

    Non-braking states first, then Detected/Overlooked/LateDetected for each
    braking state, then Accident(Serious), Accident(Minor).  The order does
    not depend on the parameter values.
    """
    states = [FlatState(SubState.NON_BRAKING, s) for s in NON_BRAKING_STATES]
    for s in BRAKING_STATES:
        states += [FlatState(k, s) for k in (SubState.DETECTED, SubState.OVERLOOKED, SubState.LATE_DETECTED)]
    states += [SERIOUS, MINOR]
    return tuple(states)


# --------------------------------------------------------------------------
# the chain
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ctmc:
    states: tuple[FlatState, ...]
    transitions: tuple[tuple[int, int, float], ...]
    initial: np.ndarray
    absorbing: frozenset[int]

    def __post_init__(self):
        initial = np.array(self.initial, dtype=float)
        initial.setflags(write=False)
        object.__setattr__(self, "initial", initial)

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state: FlatState | str) -> int:
        if isinstance(state, str):
            state = FlatState.parse(state)
        return self.states.index(state)

    def rate_matrix(self) -> np.ndarray:
        """Off-diagonal rate matrix R[i, j] (parallel arcs summed)."""
        out = np.zeros((self.n, self.n))
        for i, j, r in self.transitions:
            out[i, j] += r
        return out

    def generator(self) -> np.ndarray:
        q = self.rate_matrix()
        q[np.diag_indices(self.n)] = -q.sum(axis=1)
        return q

    def exit_rates(self) -> np.ndarray:
        return self.rate_matrix().sum(axis=1)

    def accident_index(self, cls: AccidentClass) -> int:
        return self.states.index(SERIOUS if cls is AccidentClass.SERIOUS else MINOR)

    def scaled(self, factor: float) -> "Ctmc":
        return Ctmc(self.states, tuple((i, j, r * factor) for i, j, r in self.transitions),
                    self.initial, self.absorbing)

    def with_transitions(self, transitions: Iterable[tuple[int, int, float]]) -> "Ctmc":
        return Ctmc(self.states, tuple(transitions), self.initial, self.absorbing)


def _quasi_stationary(states, transitions, absorbing) -> np.ndarray:
    # Stationary law of the embedded jump chain over non-absorbing states,
    # ignoring accident arcs.
    idx = [i for i in range(len(states)) if i not in absorbing]
    pos = {i: k for k, i in enumerate(idx)}
    m = np.zeros((len(idx), len(idx)))
    for i, j, r in transitions:
        if i in pos and j in pos:
            m[pos[i], pos[j]] += r
    out = m.sum(axis=1)
    live = out > 0
    jump = np.zeros_like(m)
    jump[live] = m[live] / out[live, None]
    jump[~live, np.flatnonzero(~live)] = 1.0
    vals, vecs = np.linalg.eig(jump.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    v = np.abs(np.real(vecs[:, k]))
    v /= v.sum()
    full = np.zeros(len(states))
    full[idx] = v
    return full


def build_ctmc(config: ModelConfig) -> Ctmc:
    """Flatten the high-level model and its hazard submodels into one CTMC."""
    config.check()
    states = enumerate_states(config)
    index = {s: i for i, s in enumerate(states)}
    arcs: list[tuple[int, int, float]] = []

    def arc(src: FlatState, dst: FlatState, rate: float) -> None:
        if rate > 0:
            arcs.append((index[src], index[dst], rate))

    def exit_capable(hl: HighLevelState) -> list[FlatState]:
        if not hl.hazardous:
            return [FlatState(SubState.NON_BRAKING, hl)]
        out = [FlatState(SubState.DETECTED, hl), FlatState(SubState.LATE_DETECTED, hl)]
        if config.hazard[hl].overlooked_self_resolve:
            out.insert(1, FlatState(SubState.OVERLOOKED, hl))
        return out

    for src_hl in HIGH_LEVEL_STATES:
        sources = exit_capable(src_hl)
        for dst_hl in HIGH_LEVEL_STATES:
            if dst_hl is src_hl or config.rates[(src_hl, dst_hl)] == 0:
                continue
            r = config.rates[(src_hl, dst_hl)]
            if dst_hl.hazardous:
                missed = r * config.hazard[dst_hl].p_overlook
                targets = [(FlatState(SubState.DETECTED, dst_hl), r - missed),
                           (FlatState(SubState.OVERLOOKED, dst_hl), missed)]
            else:
                targets = [(FlatState(SubState.NON_BRAKING, dst_hl), r)]
            for src in sources:
                for dst, rate in targets:
                    arc(src, dst, rate)

    for hl in BRAKING_STATES:
        h = config.hazard[hl]
        crash = SERIOUS if hl.accident_class is AccidentClass.SERIOUS else MINOR
        detected = FlatState(SubState.DETECTED, hl)
        overlooked = FlatState(SubState.OVERLOOKED, hl)
        late = FlatState(SubState.LATE_DETECTED, hl)
        arc(detected, crash, h.rate_policy_fail_timely)
        arc(overlooked, late, h.rate_overlook_exit)
        arc(overlooked, crash, h.rate_accident_during_overlook)
        arc(late, crash, h.rate_policy_fail_late)

    absorbing = frozenset(index[s] for s in (SERIOUS, MINOR))
    if isinstance(config.initial_state, str):
        initial = _quasi_stationary(states, arcs, absorbing)
    else:
        initial = np.zeros(len(states))
        initial[index[config.initial_state]] = 1.0
    return Ctmc(states, tuple(arcs), initial, absorbing)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    negative_rates: list[tuple[str, str, float]] = field(default_factory=list)
    absorbing_violations: list[tuple[str, str, float]] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)
    accident_reachable: dict[str, bool] = field(default_factory=dict)
    dead_states: list[str] = field(default_factory=list)
    initial_problems: list[str] = field(default_factory=list)
    max_exit_rate: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.negative_rates or self.absorbing_violations
                    or self.dead_states or self.initial_problems)

    def violations(self) -> list[str]:
        out = [f"negative rate {a} -> {b}: {r}" for a, b, r in self.negative_rates]
        out += [f"arc out of absorbing state {a} -> {b}: {r}" for a, b, r in self.absorbing_violations]
        out += [f"reachable non-absorbing state {s} has no exits" for s in self.dead_states]
        out += self.initial_problems
        return out


def validate(ctmc: Ctmc) -> ValidationReport:
    """Report-only structural checks on a chain."""
    rep = ValidationReport()
    names = [s.name for s in ctmc.states]
    succ: list[list[int]] = [[] for _ in ctmc.states]
    for i, j, r in ctmc.transitions:
        if not (r >= 0):
            rep.negative_rates.append((names[i], names[j], r))
        if i in ctmc.absorbing:
            rep.absorbing_violations.append((names[i], names[j], r))
        if r > 0:
            succ[i].append(j)

    init = np.asarray(ctmc.initial)
    if init.shape != (ctmc.n,) or abs(init.sum() - 1.0) > 1e-12 or (init < 0).any():
        rep.initial_problems.append("initial vector is not a probability vector")
    elif any(init[i] > 0 for i in ctmc.absorbing):
        rep.initial_problems.append("initial vector puts mass on an absorbing state")

    seen = set(int(i) for i in np.flatnonzero(init > 0)) if init.shape == (ctmc.n,) else set()
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in succ[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    rep.unreachable = [names[i] for i in range(ctmc.n) if i not in seen]
    for cls in AccidentClass:
        idx = ctmc.states.index(SERIOUS if cls is AccidentClass.SERIOUS else MINOR)
        rep.accident_reachable[cls.value] = idx in seen
    rep.dead_states = [names[i] for i in sorted(seen)
                       if i not in ctmc.absorbing and not succ[i]]
    exits = np.zeros(ctmc.n)
    for i, _, r in ctmc.transitions:
        exits[i] += r
    rep.max_exit_rate = float(exits.max()) if ctmc.n else 0.0
    return rep


# --------------------------------------------------------------------------
# config files
# --------------------------------------------------------------------------

def _resolve_rates(spec, base_dir: Path | None) -> RateTable:
    if spec is None or spec == "builtin:table6":
        return table6_rates() if spec else RateTable()
    if isinstance(spec, str):
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_rate_file(path)
    if isinstance(spec, Mapping):
        return RateTable.from_named(spec)
    raise ConfigError("'rates' must be an object, a file path or 'builtin:table6'")


def config_from_dict(doc: Mapping, base_dir: Path | None = None) -> ModelConfig:
    """Build a config from its JSON form.

    ``rates`` is an object of ``rate_<FROM>2<TO>`` entries (omitted entries
    are 0), a path to a rate file, or ``"builtin:table6"``.  Omitted hazard
    fields are 0 except ``rate_overlook_exit``, which defaults to the
    built-in per-state value.
    """
    check_schema(doc, "model config")
    rates = _resolve_rates(doc.get("rates"), base_dir)
    hazard = default_hazard()
    for name, fields in (doc.get("hazard") or {}).items():
        state = parse_high_level(name)
        if state not in hazard:
            raise ConfigError(f"hazard section for non-braking state {name}")
        unknown = set(fields) - set(HAZARD_FIELDS)
        if unknown:
            raise ConfigError(f"unknown hazard fields for {name}: {sorted(unknown)}")
        hazard[state] = replace(hazard[state], **fields)
    init = doc.get("initial_state", "F_F_NB")
    initial = init if init == QUASI_STATIONARY else FlatState.parse(init)
    thresholds = doc.get("thresholds") or {}
    return ModelConfig(
        rates=rates,
        hazard=hazard,
        initial_state=initial,
        speed_threshold_mps=float(thresholds.get("speed_mps", DEFAULT_SPEED_THRESHOLD_MPS)),
        decel_threshold_mps2=float(thresholds.get("decel_mps2", DEFAULT_DECEL_THRESHOLD_MPS2)),
    )


def config_to_dict(config: ModelConfig) -> dict:
    init = config.initial_state
    return {
        "schema_version": SCHEMA_VERSION,
        "rates": config.rates.to_named(),
        "hazard": {s.name: {f: getattr(config.hazard[s], f) for f in HAZARD_FIELDS}
                   for s in BRAKING_STATES},
        "initial_state": init if isinstance(init, str) else init.name,
        "thresholds": {"speed_mps": config.speed_threshold_mps,
                       "decel_mps2": config.decel_threshold_mps2},
    }


def load_config(path: str | Path) -> ModelConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model config {path}: {exc}") from exc
    return config_from_dict(doc, base_dir=path.parent)
