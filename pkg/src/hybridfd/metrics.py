"""QoS metrics and eventually-perfect verdicts over a sampled detector history.

The binary view is the accrual output thresholded at a report threshold.
Each sample stands for the interval up to the next sample (the last one
up to the horizon), so all durations are multiples of the sampling
cadence except where a crash splits an interval.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from . import kernels
from .core import DetectorHistory, DetectorId, FailurePattern, ProcessId, correct_set


class NotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class Run:
    start: float
    end: float
    suspected: bool

    @property
    def length(self) -> float:
        return self.end - self.start


def binary_runs(times: list[float], values: list[float], threshold: float,
                horizon: float) -> list[Run]:
    out = []
    for lo, hi, suspected in kernels.threshold_runs(values, threshold):
        end = times[hi] if hi < len(times) else horizon
        out.append(Run(times[lo], end, suspected))
    return out


def transitions(times: list[float], values: list[float],
                threshold: float) -> list[tuple[float, str]]:
    """S/T transitions of the thresholded view, starting from 'trusted'."""
    out = []
    for lo, _, suspected in kernels.threshold_runs(values, threshold):
        if suspected:
            out.append((times[lo], "S"))
        elif lo > 0:
            out.append((times[lo], "T"))
    return out


def _runs(history: DetectorHistory, q: DetectorId, p: ProcessId, threshold: float,
          horizon: float) -> list[Run]:
    return binary_runs(history.times(q, p), history.values(q, p), threshold, horizon)


def detection_time(history: DetectorHistory, pattern: FailurePattern, q: DetectorId,
                   p: ProcessId, threshold: float, horizon: float) -> Optional[float]:
    """Crash-to-permanent-suspicion delay, or None if never permanently suspected."""
    crash = pattern.crash_time(p)
    if crash is None:
        raise NotApplicable(f"{p} is not faulty")
    runs = _runs(history, q, p, threshold, horizon)
    if not runs or not runs[-1].suspected:
        return None
    return max(0.0, runs[-1].start - crash)


@dataclass
class MistakeStats:
    recurrence: list[float]
    durations: list[float]
    rate: float
    good_periods: list[float]


def mistake_stats(history: DetectorHistory, pattern: FailurePattern, q: DetectorId,
                  p: ProcessId, threshold: float, horizon: float) -> MistakeStats:
    if pattern.crash_time(p) is not None:
        raise NotApplicable(f"{p} is faulty; mistakes concern correct processes")
    runs = _runs(history, q, p, threshold, horizon)
    mistakes = [r for r in runs if r.suspected]
    starts = [r.start for r in mistakes]
    return MistakeStats(
        recurrence=[b - a for a, b in zip(starts, starts[1:])],
        durations=[r.length for r in mistakes],
        rate=len(mistakes) / horizon,
        good_periods=[r.length for r in runs if not r.suspected],
    )


def query_accuracy(history: DetectorHistory, pattern: FailurePattern, q: DetectorId,
                   p: ProcessId, threshold: float, since: float = -math.inf) -> float:
    crash = pattern.crash_time(p)
    hits = total = 0
    for t, v in zip(history.times(q, p), history.values(q, p)):
        if t < since:
            continue
        total += 1
        failed = crash is not None and crash <= t
        hits += (v >= threshold) == failed
    if total == 0:
        raise ValueError("no samples in the requested window")
    return hits / total


def time_partition(history: DetectorHistory, pattern: FailurePattern, q: DetectorId,
                   p: ProcessId, threshold: float, horizon: float) -> tuple[float, float, float]:
    """Split the horizon into (mistaken, good, suspected-while-crashed) time."""
    crash = pattern.crash_time(p)
    mistaken = good = faulty_suspected = 0.0
    for r in _runs(history, q, p, threshold, horizon):
        if not r.suspected:
            good += r.length
        elif crash is None or r.end <= crash:
            mistaken += r.length
        elif r.start >= crash:
            faulty_suspected += r.length
        else:
            mistaken += crash - r.start
            faulty_suspected += r.end - crash
    return mistaken, good, faulty_suspected


@dataclass
class DiamondPVerdict:
    strong_completeness: bool
    eventual_strong_accuracy: bool
    stabilization_time: Optional[float]
    detection_times: dict[str, Optional[float]] = field(default_factory=dict)
    completeness_violations: list[str] = field(default_factory=list)
    accuracy_violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["semantics"] = "finite-horizon: verdicts hold over the simulated horizon only"
        return d


def _pair_key(q: DetectorId, p: ProcessId) -> str:
    return f"{q.name}->{p.name}"


def check_diamond_p(history: DetectorHistory, pattern: FailurePattern, threshold: float,
                    horizon: float) -> DiamondPVerdict:
    """Strong completeness and eventual strong accuracy over a finite run.

    Detectors never crash in the simulator, so every detector counts as a
    correct observer of the processes it monitors.
    """
    correct = correct_set(pattern)
    det_times: dict[str, Optional[float]] = {}
    c_viol, a_viol = [], []
    stabilization = 0.0
    for q, p in history.pairs():
        runs = _runs(history, q, p, threshold, horizon)
        key = _pair_key(q, p)
        if p not in correct:
            td = detection_time(history, pattern, q, p, threshold, horizon)
            det_times[key] = td
            if td is None:
                c_viol.append(key)
        else:
            if runs and runs[-1].suspected:
                a_viol.append(key)
            for r in runs:
                if r.suspected:
                    stabilization = max(stabilization, r.end)
    return DiamondPVerdict(
        strong_completeness=not c_viol,
        eventual_strong_accuracy=not a_viol,
        stabilization_time=None if a_viol else stabilization,
        detection_times=det_times,
        completeness_violations=c_viol,
        accuracy_violations=a_viol,
    )


@dataclass
class Summary:
    count: int
    mean: Optional[float]
    min: Optional[float]
    max: Optional[float]

    @classmethod
    def of(cls, values: Iterable[float]) -> "Summary":
        v = list(values)
        if not v:
            return cls(0, None, None, None)
        return cls(len(v), math.fsum(v) / len(v), min(v), max(v))


@dataclass
class PairMetrics:
    detector: str
    process: str
    faulty: bool
    detection_time: Optional[float]
    mistakes: int
    mistake_time: float
    good_time: float
    faulty_suspected_time: float
    mistake_rate: Optional[float]
    query_accuracy: float


@dataclass
class QosReport:
    scenario: str
    horizon: float
    cadence: float
    threshold: float
    detection_time: Summary
    undetected: int
    mistake_recurrence: Summary
    mistake_duration: Summary
    mistake_rate: Summary
    query_accuracy: Summary
    good_period: Summary
    pairs: list[PairMetrics]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QosReport":
        d = dict(d)
        for k in ("detection_time", "mistake_recurrence", "mistake_duration",
                  "mistake_rate", "query_accuracy", "good_period"):
            d[k] = Summary(**d[k])
        d["pairs"] = [PairMetrics(**p) for p in d["pairs"]]
        return cls(**d)

    def shape(self) -> tuple:
        return tuple((p.detector, p.process, p.faulty) for p in self.pairs) + (self.horizon,)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in PairMetrics.__dataclass_fields__.values()]
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for p in self.pairs:
            w.writerow(asdict(p))
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"QoS report: {self.scenario} (horizon {self.horizon}, cadence {self.cadence},"
                 f" threshold {self.threshold})"]
        for label, s in (("T_D  detection time", self.detection_time),
                         ("T_MR mistake recurrence", self.mistake_recurrence),
                         ("T_M  mistake duration", self.mistake_duration),
                         ("L_M  mistake rate", self.mistake_rate),
                         ("P_A  query accuracy", self.query_accuracy),
                         ("T_G  good period", self.good_period)):
            if s.count:
                lines.append(f"  {label:26s} n={s.count:<5d} mean={s.mean:.6g} "
                             f"min={s.min:.6g} max={s.max:.6g}")
            else:
                lines.append(f"  {label:26s} n=0")
        if self.undetected:
            lines.append(f"  undetected crashes: {self.undetected}")
        for p in self.pairs:
            if p.faulty:
                td = "undetected" if p.detection_time is None else f"{p.detection_time:.6g}"
                lines.append(f"  T_D {p.detector} -> {p.process}: {td}")
        return "\n".join(lines) + "\n"


def qos_report(history: DetectorHistory, pattern: FailurePattern, threshold: float,
               horizon: float, cadence: float, scenario: str = "") -> QosReport:
    pairs = []
    tds, tmr, tm, rates, pas, tgs = [], [], [], [], [], []
    undetected = 0
    for q, p in history.pairs():
        faulty = pattern.crash_time(p) is not None
        mistaken, good, faulty_suspected = time_partition(history, pattern, q, p, threshold,
                                                          horizon)
        pa = query_accuracy(history, pattern, q, p, threshold)
        pas.append(pa)
        td = None
        rate = None
        n_mistakes = 0
        if faulty:
            td = detection_time(history, pattern, q, p, threshold, horizon)
            if td is None:
                undetected += 1
            else:
                tds.append(td)
        else:
            ms = mistake_stats(history, pattern, q, p, threshold, horizon)
            tmr += ms.recurrence
            tm += ms.durations
            tgs += ms.good_periods
            rates.append(ms.rate)
            rate = ms.rate
            n_mistakes = len(ms.durations)
        pairs.append(PairMetrics(q.name, p.name, faulty, td, n_mistakes, mistaken, good,
                                 faulty_suspected, rate, pa))
    return QosReport(
        scenario=scenario, horizon=horizon, cadence=cadence, threshold=threshold,
        detection_time=Summary.of(tds), undetected=undetected,
        mistake_recurrence=Summary.of(tmr), mistake_duration=Summary.of(tm),
        mistake_rate=Summary.of(rates), query_accuracy=Summary.of(pas),
        good_period=Summary.of(tgs), pairs=pairs,
    )


COMPARED = (("T_D mean", "detection_time"), ("T_M mean", "mistake_duration"),
            ("L_M mean", "mistake_rate"), ("P_A mean", "query_accuracy"))


class ShapeMismatch(ValueError):
    pass


def compare(a: QosReport, b: QosReport) -> list[tuple[str, Optional[float], Optional[float],
                                                       Optional[float]]]:
    """Rows of ``(metric, a, b, b - a)`` for two reports over the same scenario shape."""
    if a.shape() != b.shape():
        raise ShapeMismatch("reports cover different topologies or horizons")
    rows = []
    for label, attr in COMPARED:
        va, vb = getattr(a, attr).mean, getattr(b, attr).mean
        delta = None if va is None or vb is None else vb - va
        rows.append((label, va, vb, delta))
    return rows
