import random
from collections import Counter

import pytest

from hybridfd import scenario, simnet
from hybridfd.cluster import (ClusterMembers, ClusterTopology, CrossClusterRequest,
                              Registry, UnresolvableCluster, cross_cluster_query,
                              inter_cluster_traffic_count, on_query_deadline, resolve_border)
from hybridfd.core import DetectorId, DetectorParams, ProcessId, cluster_of
from hybridfd.detector import DetectorState

A0, A1 = DetectorId("A", 0), DetectorId("A", 1)
B0, B1, B2 = DetectorId("B", 0), DetectorId("B", 1), DetectorId("B", 2)
PB = [ProcessId("B", i) for i in range(3)]


def test_round_robin_resolution():
    reg = Registry({"B": [B0, B1], "A": [A0]})
    assert [resolve_border(reg, "B") for _ in range(3)] == [B0, B1, B0]
    assert {resolve_border(reg, "A") for _ in range(4)} == {A0}
    with pytest.raises(UnresolvableCluster):
        resolve_border(reg, "Z")


def test_topology_invariants():
    ok = ClusterMembers(frozenset({A0, A1}), frozenset({ProcessId("A", 0)}), (A0,))
    topo = ClusterTopology({"A": ok})
    assert topo.registry().borders("A") == [A0]
    with pytest.raises(ValueError):
        ClusterTopology({"A": ClusterMembers(frozenset({A0}), frozenset(), ())})
    with pytest.raises(ValueError):
        ClusterTopology({"A": ClusterMembers(frozenset({A0}), frozenset(), (B0,))})
    with pytest.raises(ValueError):
        ClusterTopology({"B": ok})


def test_request_validation():
    with pytest.raises(ValueError):
        CrossClusterRequest("x", A0, ProcessId("A", 1), 0.0, 10.0)
    with pytest.raises(ValueError):
        CrossClusterRequest("x", A0, PB[0], 10.0, 10.0)


def test_monitoring_is_cluster_local():
    with pytest.raises(ValueError):
        DetectorState(A0, DetectorParams(), [PB[0]], random.Random(0))


class Net:
    """Tiny synchronous router for unit-level query tests."""

    def __init__(self):
        params = DetectorParams(heartbeat_period=20.0)
        self.states = {
            "A.d0": DetectorState(A0, params, [ProcessId("A", 0)], random.Random(0)),
            "B.d0": DetectorState(B0, params, [PB[0]], random.Random(1)),
            "B.d1": DetectorState(B1, params, [PB[1], PB[2]], random.Random(2)),
        }
        self.sent = []

    def deliver(self, sends, t):
        while sends:
            nxt = []
            for s in sends:
                self.sent.append(s)
                nxt += self.states[s.dst].on_message(s.payload, t) or []
            sends = nxt


def test_direct_answer_value():
    net = Net()
    t = 20.0 + 10 ** 0.1 - 1  # B.d0 holds 0.1 for B.p0
    origin = net.states["A.d0"]
    req, out = cross_cluster_query(origin, PB[0], t, Registry({"B": [B0]}))
    net.deliver(out, t)
    res = origin.query_results[req.request_id]
    assert res.kind == "value" and res.value == pytest.approx(0.1)
    assert res.answered_by == B0 and len(net.sent) == 2


def test_relay_through_border():
    net = Net()
    net.states["B.d0"].digests[B1] = frozenset({PB[1], PB[2]})
    origin = net.states["A.d0"]
    req, out = cross_cluster_query(origin, PB[2], 100.0, Registry({"B": [B0]}))
    net.deliver(out, 100.0)
    res = origin.query_results[req.request_id]
    assert res.kind == "value" and res.answered_by == B1 and res.value >= 1.0
    assert len(net.sent) == 3


def test_unknown_subject():
    net = Net()
    origin = net.states["A.d0"]
    req, out = cross_cluster_query(origin, ProcessId("B", 7), 1.0, Registry({"B": [B0]}))
    net.deliver(out, 1.0)
    assert origin.query_results[req.request_id].kind == "unknown_subject"


def test_deadline_then_late_answer():
    net = Net()
    origin = net.states["A.d0"]
    req, out = cross_cluster_query(origin, PB[0], 1.0, Registry({"B": [B0]}))
    on_query_deadline(origin, req.request_id, req.deadline)
    assert origin.query_results[req.request_id].kind == "timeout"
    net.deliver(out, req.deadline + 1.0)
    # the late answer does not replace the timeout
    assert origin.query_results[req.request_id].kind == "timeout"


def test_query_scenario_results():
    sc = scenario.load("cross_cluster_query")
    tr = simnet.run(sc)
    results = {r["subject"]: r for r in tr.of_kind("query_result")}
    assert results["B.p1"]["detail"]["result"] == "value"
    assert results["B.p1"]["value"] < sc.threshold
    crashed = results["B.p2"]
    assert crashed["detail"]["result"] == "value" and crashed["value"] >= sc.threshold
    assert results["B.p3"]["detail"]["result"] == "unknown_subject"
    # every request terminates exactly once
    issued = Counter(r["detail"]["request"] for r in tr.of_kind("query_issue"))
    done = Counter(r["detail"]["request"] for r in tr.of_kind("query_result"))
    assert issued == done and set(done.values()) == {1}
    k = len(sc.queries)
    assert 2 * k <= inter_cluster_traffic_count(tr.records) <= 4 * k


def test_no_queries_no_inter_cluster_traffic():
    for name in ("crash", "transient_load"):
        tr = simnet.run(scenario.load(name))
        assert inter_cluster_traffic_count(tr.records) == 0


def _partitioned_queries():
    sc = scenario.load("cross_cluster_query")
    doc = sc.to_dict()
    a_nodes = [n.name for n in sc.cluster("A").detector_ids() + sc.cluster("A").process_ids()]
    b_nodes = [n.name for n in sc.cluster("B").detector_ids() + sc.cluster("B").process_ids()]
    doc["faults"] = doc["faults"] + [
        {"kind": "partition", "groups": [a_nodes, b_nodes], "start": 140.0, "end": 240.0}]
    return scenario.from_dict(doc)


def test_partition_queries_time_out():
    sc = _partitioned_queries()
    tr = simnet.run(sc)
    late = [q for q in sc.queries if q.at >= 140.0]
    res = {r["detail"]["request"]: r for r in tr.of_kind("query_result")}
    timeouts = [r for r in res.values() if r["detail"]["result"] == "timeout"]
    assert len(timeouts) == len(late)
    deadline = sc.params_for("A").query_deadline
    for r in timeouts:
        issue = next(q for q in tr.of_kind("query_issue")
                     if q["detail"]["request"] == r["detail"]["request"])
        assert r["t"] == pytest.approx(issue["t"] + deadline)
    # requests are still sent (and counted); no response comes back
    cross = [r for r in tr.of_kind("send") if cluster_of(r["actor"]) != cluster_of(r["subject"])]
    after = [r for r in cross if r["t"] >= 140.0]
    assert len(after) == len(late)
    assert all(r["actor"].startswith("A.") for r in after)


def test_traffic_count_helper():
    recs = [{"kind": "send", "actor": "A.d0", "subject": "B.d0"},
            {"kind": "send", "actor": "B.d0", "subject": "B.d1"},
            {"kind": "deliver", "actor": "A.d0", "subject": "B.d0"}]
    assert inter_cluster_traffic_count(recs) == 1

