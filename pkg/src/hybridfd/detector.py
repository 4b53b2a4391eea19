"""One failure detector as a sequential state machine.

Each input (heartbeat, timer tick, message) is handled to completion and
yields the outgoing messages; the simulator owns time and routing.
"""

from __future__ import annotations

import random
from typing import Callable, Iterable, Optional

from . import cluster, gossip
from .accrual import SuspicionEntry
from .core import DetectorId, DetectorParams, ProcessId
from .gossip import GossipMessage, MembershipAnnounce, MembershipView, Send

EmitFn = Callable[[float, str, str, Optional[str], Optional[float], object], None]


class DetectorState:
    def __init__(self, ident: DetectorId, params: DetectorParams,
                 monitored: Iterable[ProcessId], rng: random.Random,
                 gossip_enabled: bool = True, view: Iterable[DetectorId] = (),
                 registered_at: float = 0.0, emit: Optional[EmitFn] = None):
        self.ident = ident
        self.params = params
        self.rng = rng
        self.gossip_enabled = gossip_enabled
        self.entries: dict[ProcessId, SuspicionEntry] = {}
        for p in sorted(monitored):
            if p.cluster != ident.cluster:
                raise ValueError(f"{ident} may only monitor processes of its own cluster")
            self.entries[p] = SuspicionEntry(p, params, registered_at)
        self.view = MembershipView(ident, set(view))
        self.digests: dict[DetectorId, frozenset[ProcessId]] = {}
        self.seen_views: dict[DetectorId, int] = {}
        self.interested: dict[ProcessId, dict[DetectorId, float]] = {}
        self.refreshed: dict[tuple[ProcessId, DetectorId], float] = {}
        self.pending_queries: dict[str, cluster.CrossClusterRequest] = {}
        self.query_results: dict[str, cluster.QueryResponse] = {}
        self.query_counter = 0
        self.gossip_sent = 0
        self.broadcasts_sent = 0
        self._emit = emit

    def emit(self, t: float, kind: str, subject: Optional[ProcessId],
             value: Optional[float], detail: object = None) -> None:
        if self._emit is not None:
            self._emit(t, kind, self.ident.name, subject.name if subject else None,
                       value, detail)

    @property
    def tv(self) -> float:
        return self.params.threshold_tv

    def suspicion(self, p: ProcessId, t: float) -> float:
        """What a query for *p* returns: the effective (min-merged) level."""
        return self.entries[p].effective_suspicion(t)

    def evaluate(self, p: ProcessId, t: float) -> list[Send]:
        """Re-threshold *p* and run the edge-triggered gossip reactions."""
        entry = self.entries[p]
        if entry.frozen and entry.freeze_deadline is not None and t >= entry.freeze_deadline:
            entry.unfreeze()
            self.emit(t, "unfreeze", p, None, "deadline")
        eff = entry.effective_suspicion(t)
        out: list[Send] = []
        if eff >= self.tv and not entry.above:
            entry.above = True
            self.emit(t, "suspect", p, eff, None)
            if self.gossip_enabled:
                out += gossip.on_threshold_crossed_up(self, p, t)
        elif eff < self.tv and entry.above:
            entry.above = False
            self.emit(t, "trust", p, eff, None)
            if self.gossip_enabled:
                out += gossip.on_threshold_crossed_down(self, p, t)
        if self.gossip_enabled and not entry.above and entry.remote_values:
            out += gossip.refresh_vetoes(self, p, t)
        return out

    def on_heartbeat(self, p: ProcessId, seq: int, t: float) -> list[Send]:
        entry = self.entries.get(p)
        if entry is None:
            self.emit(t, "heartbeat_ignored", p, None, {"seq": seq})
            return []
        if not entry.on_heartbeat(t, seq):
            self.emit(t, "heartbeat_stale", p, None, {"seq": seq})
            return []
        return self.evaluate(p, t)

    def on_tick(self, t: float) -> list[Send]:
        out: list[Send] = []
        for p, entry in self.entries.items():
            entry.prune(t)
            out += self.evaluate(p, t)
        return out

    def on_broadcast_timer(self, t: float) -> list[Send]:
        return gossip.periodic_membership_broadcast(self, t)

    def on_message(self, payload: object, t: float) -> list[Send]:
        if isinstance(payload, GossipMessage):
            if not self.gossip_enabled:
                return []
            return gossip.on_gossip_receive(self, payload, t)
        if isinstance(payload, MembershipAnnounce):
            gossip.on_membership_announce(self, payload, t)
            return []
        if isinstance(payload, cluster.CrossClusterRequest):
            return cluster.on_query_request(self, payload, t)
        if isinstance(payload, cluster.QueryRelay):
            return cluster.on_query_relay(self, payload, t)
        if isinstance(payload, cluster.QueryResponse):
            cluster.on_query_response(self, payload, t)
            return []
        raise TypeError(f"unexpected message {payload!r}")
