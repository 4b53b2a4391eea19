"""Deterministic discrete-event network simulator with fault injection.

Events are processed in ``(time, seq)`` order, where ``seq`` is assigned
at scheduling time. All randomness comes from named substreams of one
scenario seed, so a scenario and seed fully determine the trace.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Optional

from .cluster import Registry, cross_cluster_query, on_query_deadline
from .core import (DetectorHistory, DetectorId, FailurePattern, ProcessId, cluster_of,
                   parse_node)
from .detector import DetectorState
from .gossip import GossipMessage, MembershipAnnounce, Send
from .scenario import FaultEntry, ScenarioConfig

# event kinds
HEARTBEAT_SEND = "HeartbeatSend"
MESSAGE_DELIVER = "MessageDeliver"
TIMER_FIRE = "TimerFire"
CRASH = "Crash"
TRANSIENT_START = "TransientStart"
TRANSIENT_END = "TransientEnd"
LINK_DOWN = "LinkDown"
LINK_UP = "LinkUp"
PARTITION_START = "PartitionStart"
PARTITION_END = "PartitionEnd"
QUERY_ISSUE = "QueryIssue"


class SimEvent(NamedTuple):
    time: float
    seq: int
    kind: str
    payload: Any


@dataclass(frozen=True)
class Heartbeat:
    process: ProcessId
    seq: int
    sent_at: float


@dataclass(frozen=True)
class LinkModel:
    base_delay: float
    jitter: float = 0.0
    loss_probability: float = 0.0

    def __post_init__(self) -> None:
        if not self.base_delay > 0:
            raise ValueError("base_delay must be > 0")
        if not 0 <= self.jitter < self.base_delay:
            raise ValueError("jitter must lie in [0, base_delay)")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must lie in [0, 1]")

    def draw(self, rng: random.Random) -> tuple[bool, float]:
        """One message's fate: ``(lost, delay)``; both draws always happen."""
        lost = rng.random() < self.loss_probability
        delay = self.base_delay + rng.uniform(-self.jitter, self.jitter)
        return lost, delay


class RandomStream:
    """Named, independent substreams derived from one 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def substream(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            digest = hashlib.sha256(f"{self.seed}/{name}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            self._streams[name] = rng
        return rng


def _msg_kind(payload: object) -> str:
    if isinstance(payload, Heartbeat):
        return "heartbeat"
    if isinstance(payload, GossipMessage):
        return "refresh" if payload.refresh else payload.kind.value
    if isinstance(payload, MembershipAnnounce):
        return "membership"
    return type(payload).__name__


class Trace:
    """Ordered audit trail of a run, one record per event."""

    FIELDS = ("t", "seq", "kind", "actor", "subject", "value", "detail")

    def __init__(self, header: Optional[dict] = None):
        self.header = header or {}
        self.records: list[dict] = []
        self.history = DetectorHistory()
        self.pattern: Optional[FailurePattern] = None
        self.link_stats: dict[tuple[str, str], list[int]] = {}
        self.query_results: dict[str, Any] = {}
        self.detectors: dict[DetectorId, DetectorState] = {}

    def add(self, t: float, kind: str, actor: Optional[str], subject: Optional[str] = None,
            value: Optional[float] = None, detail: object = None) -> None:
        self.records.append({"t": t, "seq": len(self.records), "kind": kind, "actor": actor,
                             "subject": subject, "value": value, "detail": detail})

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]

    def lines(self) -> Iterable[str]:
        yield json.dumps({"kind": "header", **self.header}, separators=(",", ":"))
        for r in self.records:
            yield json.dumps(r, separators=(",", ":"))

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line)
                fh.write("\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        trace = None
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                if trace is None:
                    if rec.get("kind") != "header":
                        raise ValueError(f"{path}: missing trace header")
                    rec.pop("kind")
                    trace = cls(rec)
                    continue
                trace.records.append(rec)
        if trace is None:
            raise ValueError(f"{path}: empty trace")
        trace.history = history_from_records(trace.records)
        return trace


def history_from_records(records: Iterable[dict]) -> DetectorHistory:
    history = DetectorHistory()
    for r in records:
        if r["kind"] == "sample":
            history.add(parse_node(r["actor"]), parse_node(r["subject"]), r["t"], r["value"],
                        r["detail"]["local"])
    return history


def sample_queries(scenario: ScenarioConfig | None, trace: Trace) -> DetectorHistory:
    """Rebuild H(q, t)(p) from the sample records of a finished trace."""
    return history_from_records(trace.records)


def sample_times(horizon: float, cadence: float) -> list[float]:
    n = 0
    while n * cadence < horizon - 1e-9 * cadence:
        n += 1
    return [k * cadence for k in range(n)]


class Simulator:
    def __init__(self, scenario: ScenarioConfig):
        self.sc = scenario
        self.streams = RandomStream(scenario.seed)
        self.now = 0.0
        self._queue: list[SimEvent] = []
        self._seq = 0
        self.pattern = scenario.failure_pattern()
        self.trace = Trace({
            "scenario": scenario.name, "seed": scenario.seed, "horizon": scenario.horizon,
            "cadence": scenario.sampling_cadence, "threshold": scenario.threshold,
            "gossip": scenario.gossip, "delta": scenario.delta,
        })
        self.trace.pattern = self.pattern
        self.registry = Registry({c.name: [DetectorId(c.name, b) for b in c.borders]
                                  for c in scenario.clusters})
        self._down: dict[tuple[str, str], int] = {}
        self._links: dict[tuple[str, str], tuple[LinkModel, random.Random]] = {}
        self._next_free: dict[str, float] = {}
        self._cluster_detectors: dict[str, list[str]] = {}
        self.params = {c.name: scenario.params_for(c.name) for c in scenario.clusters}
        self.detectors: dict[str, DetectorState] = {}
        self.monitors_of: dict[ProcessId, list[DetectorId]] = {}
        self._build()

    # construction -------------------------------------------------------

    def _build(self) -> None:
        sc = self.sc
        emit = self.trace.add
        for c in sc.clusters:
            params = self.params[c.name]
            ids = c.detector_ids()
            self._cluster_detectors[c.name] = [d.name for d in ids]
            for d in ids:
                monitored = c.monitored_by(d.index)
                view = ids if sc.initial_view == "full" else ()
                state = DetectorState(d, params, monitored, self.streams.substream(f"gossip:{d}"),
                                      gossip_enabled=sc.gossip, view=view, emit=emit)
                self.detectors[d.name] = state
                for p in monitored:
                    self.monitors_of.setdefault(p, []).append(d)
            for p in c.process_ids():
                rng = self.streams.substream(f"process:{p}")
                self.schedule(rng.uniform(0.0, params.heartbeat_period), HEARTBEAT_SEND, (p, 0))
            for d in ids:
                rng = self.streams.substream(f"timers:{d}")
                self.schedule(rng.uniform(0.0, params.check_interval), TIMER_FIRE, ("tick", d.name))
                self.schedule(rng.uniform(0.0, params.gossip_period), TIMER_FIRE,
                              ("broadcast", d.name))
        self.trace.detectors = {s.ident: s for s in self.detectors.values()}
        for f in sc.faults:
            self.inject(f)
        for q in sc.queries:
            self.schedule(q.at, QUERY_ISSUE, (q.origin, q.subject))
        self.schedule(0.0, TIMER_FIRE, ("sample", 0))

    def schedule(self, t: float, kind: str, payload: Any) -> None:
        if t < self.now:
            raise ValueError(f"cannot schedule {kind} in the past ({t} < {self.now})")
        heapq.heappush(self._queue, SimEvent(t, self._seq, kind, payload))
        self._seq += 1

    def inject(self, entry: FaultEntry) -> list[SimEvent]:
        """Turn one fault-schedule entry into scheduled events."""
        before = self._seq
        if entry.kind == "crash":
            self.schedule(entry.at, CRASH, entry.process)
        elif entry.kind == "transient":
            self.schedule(entry.start, TRANSIENT_START, entry.process)
            self.schedule(entry.end, TRANSIENT_END, entry.process)
        elif entry.kind == "link_down":
            pairs = [(entry.a, entry.b)] + ([(entry.b, entry.a)] if entry.bidirectional else [])
            self.schedule(entry.start, LINK_DOWN, pairs)
            if entry.end is not None:
                self.schedule(entry.end, LINK_UP, pairs)
        elif entry.kind == "partition":
            g0, g1 = entry.groups
            pairs = [(a, b) for a in g0 for b in g1] + [(b, a) for a in g0 for b in g1]
            self.schedule(entry.start, PARTITION_START, pairs)
            if entry.end is not None:
                self.schedule(entry.end, PARTITION_END, pairs)
        else:
            raise ValueError(f"unknown fault kind {entry.kind}")
        return [e for e in self._queue if e.seq >= before]

    # network ------------------------------------------------------------

    def link(self, src: str, dst: str) -> tuple[LinkModel, random.Random]:
        key = (src, dst)
        got = self._links.get(key)
        if got is None:
            spec = self.sc.link_spec(src, dst)
            got = (LinkModel(spec.delay, spec.jitter, spec.loss),
                   self.streams.substream(f"link:{src}->{dst}"))
            self._links[key] = got
        return got

    def link_up(self, src: str, dst: str) -> bool:
        return self._down.get((src, dst), 0) == 0

    def send(self, src: str, dst: str, payload: object, kind: Optional[str] = None) -> None:
        t = self.now
        model, rng = self.link(src, dst)
        lost, delay = model.draw(rng)
        stats = self.trace.link_stats.setdefault((src, dst), [0, 0, 0])
        stats[0] += 1
        if kind is None:
            kind = _msg_kind(payload)
        self.trace.add(t, "send", src, dst, None, kind)
        if not self.link_up(src, dst):
            stats[2] += 1
            self.trace.add(t, "drop", src, dst, None, {"msg": kind, "reason": "link_down"})
        elif lost:
            stats[2] += 1
            self.trace.add(t, "drop", src, dst, None, {"msg": kind, "reason": "loss"})
        else:
            self.schedule(t + delay, MESSAGE_DELIVER, (src, dst, payload, kind))

    def _route(self, src: str, sends: list[Send]) -> None:
        for s in sends:
            if s.dst is None:
                kind = _msg_kind(s.payload)
                self.trace.add(self.now, "broadcast", src, None, None, kind)
                for dst in self._cluster_detectors[cluster_of(src)]:
                    if dst != src:
                        self.send(src, dst, s.payload, kind)
            else:
                self.send(src, s.dst, s.payload)

    # event loop ---------------------------------------------------------

    def _defer(self, node: str, ev: SimEvent) -> bool:
        """Keep consecutive steps of *node* at least delta apart."""
        free = self._next_free.get(node, 0.0)
        if ev.time < free:
            self.schedule(free, ev.kind, ev.payload)
            return True
        self._next_free[node] = ev.time + self.sc.delta
        return False

    def run(self) -> Trace:
        horizon = self.sc.horizon
        while self._queue and self._queue[0].time < horizon:
            ev = heapq.heappop(self._queue)
            self.now = ev.time
            handler = getattr(self, "_on_" + ev.kind)
            handler(ev)
        # per link: sent, delivered, dropped, still in flight at the horizon
        for v in self.trace.link_stats.values():
            v.append(0)
        for e in self._queue:
            if e.kind == MESSAGE_DELIVER:
                src, dst = e.payload[:2]
                self.trace.link_stats[(src, dst)][3] += 1
        self.trace.query_results = {rid: r for s in self.detectors.values()
                                    for rid, r in s.query_results.items()}
        return self.trace

    def _on_HeartbeatSend(self, ev: SimEvent) -> None:
        p, k = ev.payload
        t = ev.time
        if not self.pattern.is_silent(p, t):
            for d in self.monitors_of.get(p, ()):
                self.send(p.name, d.name, Heartbeat(p, k, t))
        crash = self.pattern.crash_time(p)
        if crash is not None and t >= crash:
            return
        nxt = t + self.params[p.cluster].heartbeat_period
        if self.sc.heartbeat_jitter:
            nxt += self.streams.substream(f"process:{p}").uniform(0.0, self.sc.heartbeat_jitter)
        self.schedule(nxt, HEARTBEAT_SEND, (p, k + 1))

    def _on_MessageDeliver(self, ev: SimEvent) -> None:
        src, dst, payload, kind = ev.payload
        if self._defer(dst, ev):
            return
        self.trace.link_stats[(src, dst)][1] += 1
        self.trace.add(ev.time, "deliver", src, dst, None, kind)
        state = self.detectors[dst]
        if isinstance(payload, Heartbeat):
            out = state.on_heartbeat(payload.process, payload.seq, ev.time)
        else:
            out = state.on_message(payload, ev.time)
        self._route(dst, out)

    def _on_TimerFire(self, ev: SimEvent) -> None:
        what, arg = ev.payload
        if what == "sample":
            self._sample(ev.time, arg)
            return
        if what == "deadline":
            name, request_id = arg
            if self._defer(name, ev):
                return
            on_query_deadline(self.detectors[name], request_id, ev.time)
            return
        name = arg
        if self._defer(name, ev):
            return
        state = self.detectors[name]
        if what == "tick":
            self._route(name, state.on_tick(ev.time))
            self.schedule(ev.time + state.params.check_interval, TIMER_FIRE, ev.payload)
        else:
            self._route(name, state.on_broadcast_timer(ev.time))
            self.schedule(ev.time + state.params.gossip_period, TIMER_FIRE, ev.payload)

    def _sample(self, t: float, k: int) -> None:
        for name in sorted(self.detectors, key=lambda n: self.detectors[n].ident):
            state = self.detectors[name]
            for p, entry in state.entries.items():
                eff = entry.effective_suspicion(t)
                local = entry.local_suspicion(t)
                self.trace.history.add(state.ident, p, t, eff, local)
                self.trace.add(t, "sample", name, p.name, eff, {"local": local})
        nxt = (k + 1) * self.sc.sampling_cadence
        if nxt < self.sc.horizon - 1e-9 * self.sc.sampling_cadence:
            self.schedule(nxt, TIMER_FIRE, ("sample", k + 1))

    def _on_QueryIssue(self, ev: SimEvent) -> None:
        origin, subject = ev.payload
        if self._defer(origin, ev):
            return
        state = self.detectors[origin]
        request, out = cross_cluster_query(state, parse_node(subject), ev.time, self.registry)
        self.schedule(request.deadline, TIMER_FIRE, ("deadline", (origin, request.request_id)))
        self._route(origin, out)

    def _on_Crash(self, ev: SimEvent) -> None:
        self.trace.add(ev.time, "crash", ev.payload)

    def _on_TransientStart(self, ev: SimEvent) -> None:
        self.trace.add(ev.time, "transient_start", ev.payload)

    def _on_TransientEnd(self, ev: SimEvent) -> None:
        self.trace.add(ev.time, "transient_end", ev.payload)

    def _toggle(self, ev: SimEvent, step: int, kind: str) -> None:
        for pair in ev.payload:
            self._down[pair] = self._down.get(pair, 0) + step
        first = ev.payload[0]
        self.trace.add(ev.time, kind, first[0], first[1], None, {"links": len(ev.payload)})

    def _on_LinkDown(self, ev: SimEvent) -> None:
        self._toggle(ev, 1, "link_down")

    def _on_LinkUp(self, ev: SimEvent) -> None:
        self._toggle(ev, -1, "link_up")

    def _on_PartitionStart(self, ev: SimEvent) -> None:
        self._toggle(ev, 1, "partition_start")

    def _on_PartitionEnd(self, ev: SimEvent) -> None:
        self._toggle(ev, -1, "partition_end")


def run(scenario: ScenarioConfig) -> Trace:
    return Simulator(scenario).run()
