"""Identities, failure patterns, detector histories and parameter sets."""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

ClusterId = str

_NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")
_NODE_RE = re.compile(r"^([A-Za-z0-9_-]+)\.([pd])(\d+)$")

DEFAULT_DELTA = 0.001


def valid_cluster_name(name: str) -> bool:
    return bool(name) and bool(_NAME_RE.match(name))


@dataclass(frozen=True, order=True)
class ProcessId:
    cluster: ClusterId
    index: int
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self) -> None:
        # ids are hashed constantly by the simulator; compute once
        object.__setattr__(self, "_hash", hash(("p", self.cluster, self.index)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def name(self) -> str:
        return f"{self.cluster}.p{self.index}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class DetectorId:
    cluster: ClusterId
    index: int
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self) -> None:
        # ids are hashed constantly by the simulator; compute once
        object.__setattr__(self, "_hash", hash(("d", self.cluster, self.index)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def name(self) -> str:
        return f"{self.cluster}.d{self.index}"

    def __str__(self) -> str:
        return self.name


def parse_node(name: str) -> ProcessId | DetectorId:
    """Parse ``"A.p3"`` / ``"A.d0"`` into a typed identity."""
    m = _NODE_RE.match(name)
    if not m:
        raise ValueError(f"malformed node id {name!r}")
    cluster, role, index = m.group(1), m.group(2), int(m.group(3))
    if role == "p":
        return ProcessId(cluster, index)
    return DetectorId(cluster, index)


def cluster_of(name: str) -> ClusterId:
    return name.rsplit(".", 1)[0]


@dataclass(frozen=True)
class FailurePattern:
    """Ground truth: permanent crash times and transient silent intervals."""

    processes: frozenset[ProcessId]
    crash_times: dict[ProcessId, float] = field(default_factory=dict)
    transient_intervals: dict[ProcessId, tuple[tuple[float, float], ...]] = field(
        default_factory=dict
    )

    def __post_init__(self) -> None:
        for p in self.crash_times:
            if p not in self.processes:
                raise ValueError(f"crash for unknown process {p}")
        for p, intervals in self.transient_intervals.items():
            if p not in self.processes:
                raise ValueError(f"transient interval for unknown process {p}")
            prev_end = -math.inf
            for start, end in intervals:
                if not start < end:
                    raise ValueError(f"empty transient interval for {p}")
                if start < prev_end:
                    raise ValueError(f"overlapping transient intervals for {p}")
                prev_end = end

    def crash_time(self, p: ProcessId) -> Optional[float]:
        return self.crash_times.get(p)

    def is_silent(self, p: ProcessId, t: float) -> bool:
        """True when *p* sends nothing at *t* (crashed or transiently overloaded)."""
        crash = self.crash_times.get(p)
        if crash is not None and t >= crash:
            return True
        for start, end in self.transient_intervals.get(p, ()):
            if start <= t < end:
                return True
        return False


def correct_set(pattern: FailurePattern, t: float | None = None) -> set[ProcessId]:
    # faulty means "crashes at some point"; independent of t
    return {p for p in pattern.processes if p not in pattern.crash_times}


def faulty_set(pattern: FailurePattern) -> set[ProcessId]:
    return set(pattern.crash_times)


def failed_at(pattern: FailurePattern, t: float) -> set[ProcessId]:
    """F(t): processes crashed before or at *t*."""
    return {p for p, c in pattern.crash_times.items() if c <= t}


@dataclass(frozen=True)
class HistoryRecord:
    detector: DetectorId
    process: ProcessId
    time: float
    value: float


class DetectorHistory:
    """Sampled accrual output H(q, t)(p), stored per (detector, process) pair."""

    def __init__(self) -> None:
        self._times: dict[tuple[DetectorId, ProcessId], list[float]] = {}
        self._values: dict[tuple[DetectorId, ProcessId], list[float]] = {}
        self._local: dict[tuple[DetectorId, ProcessId], list[float]] = {}

    def add(self, q: DetectorId, p: ProcessId, t: float, value: float,
            local: float | None = None) -> None:
        if value < 0:
            raise ValueError("suspicion values are non-negative")
        key = (q, p)
        times = self._times.setdefault(key, [])
        if times and t <= times[-1]:
            raise ValueError(f"query times must increase for {q}/{p}")
        times.append(t)
        self._values.setdefault(key, []).append(value)
        self._local.setdefault(key, []).append(value if local is None else local)

    def pairs(self) -> list[tuple[DetectorId, ProcessId]]:
        return sorted(self._times)

    def times(self, q: DetectorId, p: ProcessId) -> list[float]:
        return self._times[(q, p)]

    def values(self, q: DetectorId, p: ProcessId) -> list[float]:
        return self._values[(q, p)]

    def local_values(self, q: DetectorId, p: ProcessId) -> list[float]:
        return self._local[(q, p)]

    def __contains__(self, key: object) -> bool:
        return key in self._times

    def records(self) -> Iterable[HistoryRecord]:
        for key in self.pairs():
            q, p = key
            for t, v in zip(self._times[key], self._values[key]):
                yield HistoryRecord(q, p, t, v)

    def value_at(self, q: DetectorId, p: ProcessId, t: float) -> tuple[float, float]:
        """Nearest sample to *t*; returns ``(sample_time, value)``."""
        times = self._times[(q, p)]
        i = bisect.bisect_left(times, t)
        candidates = [j for j in (i - 1, i) if 0 <= j < len(times)]
        j = min(candidates, key=lambda j: (abs(times[j] - t), j))
        return times[j], self._values[(q, p)][j]


class PredictorKind(str, Enum):
    SMA = "sma"
    RESTRICTED_MA = "restricted_ma"
    WMA = "wma"
    EMA = "ema"


@dataclass(frozen=True)
class DetectorParams:
    heartbeat_period: float = 5.0
    window_size: int = 5
    predictor: PredictorKind = PredictorKind.SMA
    ema_alpha: float = 0.25
    threshold_tv: float = 1.0
    gossip_fanout: int = 2
    gossip_period: float = 10.0
    freeze_timeout: Optional[float] = None
    remote_value_ttl: Optional[float] = None
    contribution_cap: Optional[float] = 1.0
    check_interval: Optional[float] = None
    query_deadline: Optional[float] = None

    def __post_init__(self) -> None:
        # derived defaults scale with the heartbeat period
        period = self.heartbeat_period
        if self.freeze_timeout is None:
            object.__setattr__(self, "freeze_timeout", 2.0 * period)
        if self.remote_value_ttl is None:
            object.__setattr__(self, "remote_value_ttl", 4.0 * period)
        if self.check_interval is None:
            object.__setattr__(self, "check_interval", period / 10.0)
        if self.query_deadline is None:
            object.__setattr__(self, "query_deadline", 10.0 * period)
        object.__setattr__(self, "predictor", PredictorKind(self.predictor))

    def problems(self) -> list[str]:
        errs = []
        for name in ("heartbeat_period", "gossip_period", "freeze_timeout",
                     "remote_value_ttl", "check_interval", "query_deadline"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be > 0")
        if self.window_size < 2:
            errs.append("window_size must be >= 2")
        if self.gossip_fanout < 1:
            errs.append("gossip_fanout must be >= 1")
        if not 0.0 < self.ema_alpha < 1.0:
            errs.append("ema_alpha must lie in (0, 1)")
        if not self.threshold_tv > 0:
            errs.append("threshold_tv must be > 0")
        if self.contribution_cap not in (None, 1.0):
            errs.append("contribution_cap must be 1.0 or none")
        return errs

    @property
    def capped(self) -> bool:
        return self.contribution_cap is not None
