"""Cluster topology, border registry and propagation-on-request queries.

Suspicion information never leaves a cluster on its own. A detector that
needs the level of a process in another cluster resolves one of that
cluster's border detectors through the registry and asks it; the border
answers itself when it monitors the process, otherwise it relays the
request one hop to a local detector that does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

from .core import ClusterId, DetectorId, ProcessId, cluster_of
from .gossip import Send

if TYPE_CHECKING:
    from .detector import DetectorState


class UnresolvableCluster(LookupError):
    pass


@dataclass
class ClusterMembers:
    detectors: frozenset[DetectorId]
    processes: frozenset[ProcessId]
    borders: tuple[DetectorId, ...]


class Registry:
    """Static name -> border list lookup with round-robin resolution."""

    def __init__(self, borders: dict[ClusterId, Iterable[DetectorId]]):
        self._borders = {c: list(b) for c, b in borders.items()}
        self._cursor = {c: 0 for c in self._borders}

    def borders(self, cluster: ClusterId) -> list[DetectorId]:
        if cluster not in self._borders:
            raise UnresolvableCluster(f"unresolvable cluster {cluster!r}")
        return list(self._borders[cluster])

    def resolve(self, cluster: ClusterId) -> DetectorId:
        borders = self.borders(cluster)
        i = self._cursor[cluster]
        self._cursor[cluster] = (i + 1) % len(borders)
        return borders[i]


def resolve_border(registry: Registry, cluster: ClusterId) -> DetectorId:
    return registry.resolve(cluster)


@dataclass
class ClusterTopology:
    clusters: dict[ClusterId, ClusterMembers] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[object] = set()
        for name, members in self.clusters.items():
            if not members.borders:
                raise ValueError(f"cluster {name} has no border detector")
            if not set(members.borders) <= members.detectors:
                raise ValueError(f"cluster {name}: borders must be detectors of the cluster")
            for node in members.detectors | members.processes:
                if node.cluster != name or node in seen:
                    raise ValueError(f"{node} must belong to exactly one cluster")
                seen.add(node)

    def registry(self) -> Registry:
        return Registry({c: m.borders for c, m in self.clusters.items()})

    def cluster_of(self, node: ProcessId | DetectorId) -> ClusterId:
        return node.cluster


@dataclass(frozen=True)
class CrossClusterRequest:
    request_id: str
    origin: DetectorId
    subject: ProcessId
    issued_at: float
    deadline: float

    def __post_init__(self) -> None:
        if self.subject.cluster == self.origin.cluster:
            raise ValueError("cross-cluster query for a local process")
        if not self.deadline > self.issued_at:
            raise ValueError("deadline must follow issue time")


@dataclass(frozen=True)
class QueryRelay:
    request: CrossClusterRequest
    border: DetectorId


@dataclass(frozen=True)
class QueryResponse:
    request_id: str
    subject: ProcessId
    kind: str  # "value" | "unknown_subject" | "timeout"
    value: Optional[float]
    answered_by: Optional[DetectorId]
    answered_at: float


def cross_cluster_query(origin: DetectorState, subject: ProcessId, t: float,
                        registry: Registry) -> tuple[CrossClusterRequest, list[Send]]:
    """Issue a query; the answer arrives later as a :class:`QueryResponse`."""
    origin.query_counter += 1
    request = CrossClusterRequest(
        f"{origin.ident.name}#{origin.query_counter}", origin.ident, subject, t,
        t + origin.params.query_deadline)
    border = registry.resolve(subject.cluster)
    origin.pending_queries[request.request_id] = request
    origin.emit(t, "query_issue", subject, None,
                {"request": request.request_id, "border": border.name})
    return request, [Send(border.name, request)]


def _answer(state: DetectorState, request: CrossClusterRequest, t: float) -> Send:
    entry = state.entries[request.subject]
    resp = QueryResponse(request.request_id, request.subject, "value",
                         entry.effective_suspicion(t), state.ident, t)
    return Send(request.origin.name, resp)


def on_query_request(state: DetectorState, request: CrossClusterRequest, t: float) -> list[Send]:
    if request.subject in state.entries:
        return [_answer(state, request, t)]
    monitors = sorted(d for d, watched in state.digests.items() if request.subject in watched)
    if monitors:
        return [Send(monitors[0].name, QueryRelay(request, state.ident))]
    resp = QueryResponse(request.request_id, request.subject, "unknown_subject",
                         None, state.ident, t)
    return [Send(request.origin.name, resp)]


def on_query_relay(state: DetectorState, relay: QueryRelay, t: float) -> list[Send]:
    request = relay.request
    if request.subject in state.entries:
        return [_answer(state, request, t)]
    resp = QueryResponse(request.request_id, request.subject, "unknown_subject",
                         None, state.ident, t)
    return [Send(request.origin.name, resp)]


def on_query_response(state: DetectorState, resp: QueryResponse, t: float) -> None:
    request = state.pending_queries.pop(resp.request_id, None)
    if request is None:
        state.emit(t, "query_late", resp.subject, resp.value, {"request": resp.request_id})
        return
    _finish(state, resp, t)


def on_query_deadline(state: DetectorState, request_id: str, t: float) -> None:
    request = state.pending_queries.pop(request_id, None)
    if request is None:
        return
    _finish(state, QueryResponse(request_id, request.subject, "timeout", None, None, t), t)


def _finish(state: DetectorState, resp: QueryResponse, t: float) -> None:
    state.query_results[resp.request_id] = resp
    state.emit(t, "query_result", resp.subject, resp.value, {
        "request": resp.request_id,
        "result": resp.kind,
        "answered_by": resp.answered_by.name if resp.answered_by else None,
    })


def inter_cluster_traffic_count(records: Iterable[dict]) -> int:
    """Messages whose sender and receiver sit in different clusters."""
    return sum(1 for r in records
               if r["kind"] == "send" and cluster_of(r["actor"]) != cluster_of(r["subject"]))
