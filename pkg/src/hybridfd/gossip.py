"""Cluster-local dissemination of suspicion levels.

A detector whose effective suspicion for a process crosses the threshold
upward freezes its local level and sends it to a few random peers; peers
that monitor the same process answer with their own level and the
receiver keeps the minimum of everything it heard. Crossing back below
the threshold (a heartbeat arrived, or a peer vetoed) is announced the
same way. Periodic broadcasts of the membership list let detectors find
each other and re-merge after partitions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

from .core import DetectorId, ProcessId

if TYPE_CHECKING:
    from .detector import DetectorState


class GossipKind(str, Enum):
    ALERT = "alert"
    RECOVERY = "recovery"
    REPLY = "reply"


@dataclass(frozen=True)
class GossipMessage:
    sender: DetectorId
    subject: ProcessId
    suspicion: float
    sent_at: float
    kind: GossipKind
    refresh: bool = False

    def __post_init__(self) -> None:
        if self.suspicion < 0:
            raise ValueError("gossiped suspicion must be non-negative")
        if self.subject.cluster != self.sender.cluster:
            raise ValueError("gossip never leaves the sender's cluster")


@dataclass(frozen=True)
class MembershipAnnounce:
    sender: DetectorId
    view: frozenset[DetectorId]
    monitored: frozenset[ProcessId]
    sent_at: float
    version: int = 0


@dataclass
class MembershipView:
    owner: DetectorId
    known_detectors: set[DetectorId] = field(default_factory=set)
    last_broadcast: float = float("-inf")
    # bumped whenever the view grows, so peers can skip views they already merged
    version: int = 0

    def __post_init__(self) -> None:
        self.known_detectors.discard(self.owner)
        self._frozen: Optional[frozenset[DetectorId]] = None

    def snapshot(self) -> frozenset[DetectorId]:
        if self._frozen is None:
            self._frozen = frozenset(self.known_detectors)
        return self._frozen

    def merge(self, detectors: Iterable[DetectorId]) -> set[DetectorId]:
        """Union *detectors* into the view; return the newly learned ones."""
        new = set(detectors)
        new -= self.known_detectors
        new.discard(self.owner)
        new = {d for d in new if d.cluster == self.owner.cluster}
        if new:
            self.known_detectors |= new
            self.version += 1
            self._frozen = None
        return new

    def __len__(self) -> int:
        return len(self.known_detectors)


@dataclass(frozen=True)
class Send:
    """An outgoing message; ``dst=None`` is a cluster-local broadcast."""

    dst: Optional[str]
    payload: object


def select_gossip_targets(view: MembershipView, fanout: int,
                          rng: random.Random) -> set[DetectorId]:
    """Uniform sample of ``min(fanout, |view|)`` peers, without replacement."""
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    population = sorted(view.known_detectors)
    if not population:
        return set()
    return set(rng.sample(population, min(fanout, len(population))))


def _targets(state: DetectorState, subject: ProcessId, t: float) -> list[DetectorId]:
    chosen = select_gossip_targets(state.view, state.params.gossip_fanout, state.rng)
    # peers that alerted us about this subject get told when we cross too
    ttl = state.params.remote_value_ttl
    for peer, when in state.interested.get(subject, {}).items():
        if t - when < ttl:
            chosen.add(peer)
    if not chosen:
        state.emit(t, "warn", subject, None, "isolated detector, no gossip peers")
    return sorted(chosen)


def _messages(state: DetectorState, subject: ProcessId, targets: list[DetectorId],
              value: float, t: float, kind: GossipKind, refresh: bool = False) -> list[Send]:
    msg = GossipMessage(state.ident, subject, value, t, kind, refresh)
    state.gossip_sent += len(targets)
    return [Send(d.name, msg) for d in targets]


def on_threshold_crossed_up(state: DetectorState, subject: ProcessId, t: float) -> list[Send]:
    entry = state.entries[subject]
    if entry.frozen:
        return []
    entry.freeze(t)
    state.emit(t, "freeze", subject, entry.frozen_value, {"until": entry.freeze_deadline})
    targets = _targets(state, subject, t)
    return _messages(state, subject, targets, entry.local_suspicion(t), t, GossipKind.ALERT)


def on_threshold_crossed_down(state: DetectorState, subject: ProcessId, t: float) -> list[Send]:
    entry = state.entries[subject]
    targets = _targets(state, subject, t)
    return _messages(state, subject, targets, entry.local_suspicion(t), t, GossipKind.RECOVERY)


def refresh_vetoes(state: DetectorState, subject: ProcessId, t: float) -> list[Send]:
    """Re-ask peers whose low report is the only thing keeping *subject* trusted.

    A vetoing report older than half its lifetime triggers one refresh
    alert to its sender, so the veto is renewed before it expires as long
    as that peer still hears from the process.
    """
    entry = state.entries[subject]
    tv = state.params.threshold_tv
    if entry.local_suspicion(t) < tv:
        return []
    half_life = state.params.remote_value_ttl / 2.0
    out = []
    for peer, r in sorted(entry.valid_remotes(t).items()):
        if r.value >= tv or t - r.received < half_life:
            continue
        key = (subject, peer)
        if state.refreshed.get(key, float("-inf")) >= r.received:
            continue
        state.refreshed[key] = t
        out += _messages(state, subject, [peer], entry.local_suspicion(t), t,
                         GossipKind.ALERT, refresh=True)
    return out


def on_gossip_receive(state: DetectorState, msg: GossipMessage, t: float) -> list[Send]:
    entry = state.entries.get(msg.subject)
    if entry is None:
        # not monitoring the subject: never auto-subscribe
        state.emit(t, "gossip_ignored", msg.subject, msg.suspicion,
                   {"from": msg.sender.name, "kind": msg.kind.value})
        return []
    entry.record_remote(msg.sender, msg.suspicion, t)
    if entry.frozen:
        entry.unfreeze()
        state.emit(t, "unfreeze", msg.subject, None, "gossip")
    out: list[Send] = []
    if msg.kind is GossipKind.ALERT:
        state.interested.setdefault(msg.subject, {})[msg.sender] = t
        out += _messages(state, msg.subject, [msg.sender], entry.local_suspicion(t), t,
                         GossipKind.REPLY)
    out += state.evaluate(msg.subject, t)
    return out


def periodic_membership_broadcast(state: DetectorState, t: float) -> list[Send]:
    state.view.last_broadcast = t
    state.broadcasts_sent += 1
    announce = MembershipAnnounce(state.ident, state.view.snapshot(),
                                  frozenset(state.entries), t, state.view.version)
    return [Send(None, announce)]


def on_membership_announce(state: DetectorState, msg: MembershipAnnounce, t: float) -> None:
    state.digests[msg.sender] = msg.monitored
    if state.seen_views.get(msg.sender) == msg.version:
        if msg.sender in state.view.known_detectors:
            return
        learned = state.view.merge((msg.sender,))
    else:
        state.seen_views[msg.sender] = msg.version
        learned = state.view.merge(msg.view | {msg.sender})
    if learned:
        state.emit(t, "view_merge", None, float(len(state.view)),
                   {"learned": sorted(d.name for d in learned)})
