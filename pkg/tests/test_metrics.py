import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridfd import metrics, scenario, simnet
from hybridfd.core import DetectorHistory, DetectorId, FailurePattern, ProcessId

Q = DetectorId("A", 0)
P = ProcessId("A", 0)
TV = 1.0


def history(values, cadence=1.0, q=Q, p=P, h=None):
    h = h or DetectorHistory()
    for k, v in enumerate(values):
        h.add(q, p, k * cadence, v, v)
    return h


def suspected_between(n, *spans):
    """n samples, value 2.0 inside any [start, end) span, else 0."""
    return [2.0 if any(a <= k < b for a, b in spans) else 0.0 for k in range(n)]


def crashed(at, p=P):
    return FailurePattern(frozenset({p}), {p: at})


CORRECT = FailurePattern(frozenset({P}))


def test_detection_time_simple():
    h = history(suspected_between(200, (112, 200)))
    assert metrics.detection_time(h, crashed(100.0), Q, P, TV, 200.0) == 12.0


def test_detection_time_needs_permanence():
    h = history(suspected_between(200, (105, 107), (110, 200)))
    assert metrics.detection_time(h, crashed(100.0), Q, P, TV, 200.0) == 10.0


def test_detection_time_undetected():
    h = history([0.0] * 200)
    assert metrics.detection_time(h, crashed(100.0), Q, P, TV, 200.0) is None
    v = metrics.check_diamond_p(h, crashed(100.0), TV, 200.0)
    assert not v.strong_completeness and v.completeness_violations == ["A.d0->A.p0"]


def test_detection_time_needs_faulty_process():
    with pytest.raises(metrics.NotApplicable):
        metrics.detection_time(history([0.0]), CORRECT, Q, P, TV, 1.0)


def test_zero_mistakes():
    ms = metrics.mistake_stats(history([0.0] * 100), CORRECT, Q, P, TV, 100.0)
    assert ms.rate == 0 and ms.good_periods == [100.0] and ms.durations == []


def test_two_mistakes():
    h = history(suspected_between(100, (10, 12), (50, 53)))
    ms = metrics.mistake_stats(h, CORRECT, Q, P, TV, 100.0)
    assert ms.recurrence == [40.0] and ms.durations == [2.0, 3.0]
    assert ms.rate == pytest.approx(2 / 100)
    assert ms.good_periods == [10.0, 38.0, 47.0]
    with pytest.raises(metrics.NotApplicable):
        metrics.mistake_stats(h, crashed(5.0), Q, P, TV, 100.0)


def test_query_accuracy_examples():
    assert metrics.query_accuracy(history([0.0] * 50), CORRECT, Q, P, TV) == 1.0
    h = history(suspected_between(100, (0, 10)))
    assert metrics.query_accuracy(h, CORRECT, Q, P, TV) == pytest.approx(0.9)
    # crash at 40, suspected from 47: samples 40..46 are wrong
    h = history(suspected_between(100, (47, 100)))
    assert metrics.query_accuracy(h, crashed(40.0), Q, P, TV) == pytest.approx(1 - 7 / 100)
    assert metrics.query_accuracy(h, crashed(40.0), Q, P, TV, since=47.0) == 1.0
    with pytest.raises(ValueError):
        metrics.query_accuracy(h, CORRECT, Q, P, TV, since=1000.0)


def test_diamond_p_ends_mid_mistake():
    h = history(suspected_between(100, (90, 100)))
    v = metrics.check_diamond_p(h, CORRECT, TV, 100.0)
    assert not v.eventual_strong_accuracy and v.stabilization_time is None
    assert "finite-horizon" in v.to_dict()["semantics"]


def test_diamond_p_stabilizes():
    h = history(suspected_between(100, (20, 25)))
    v = metrics.check_diamond_p(h, CORRECT, TV, 100.0)
    assert v.eventual_strong_accuracy and v.stabilization_time == 25.0


def test_crash_scenario_both_properties_hold():
    sc = scenario.load("crash")
    tr = simnet.run(sc)
    v = metrics.check_diamond_p(tr.history, tr.pattern, sc.threshold, sc.horizon)
    assert v.strong_completeness and v.eventual_strong_accuracy
    assert all(td is not None and td >= 0 for td in v.detection_times.values())


def test_link_failure_gossip_shortens_mistakes():
    base = scenario.load("link_failure").replace(sampling_cadence=0.01)
    mistaken = {}
    for g in (True, False):
        sc = base.replace(gossip=g)
        tr = simnet.run(sc)
        m, _, _ = metrics.time_partition(tr.history, tr.pattern, Q, P, sc.threshold,
                                         sc.horizon)
        mistaken[g] = m
    assert mistaken[True] < mistaken[False]
    assert mistaken[True] < 1.0 < 100.0 < mistaken[False]


def test_binary_view_and_transitions():
    values = [0, 0, 1.5, 1.0, 0.2, 3]
    runs = metrics.binary_runs([0, 1, 2, 3, 4, 5], values, 1.0, 6.0)
    assert [(r.start, r.end, r.suspected) for r in runs] == [
        (0, 2, False), (2, 4, True), (4, 5, False), (5, 6.0, True)]
    assert metrics.transitions([0, 1, 2, 3, 4, 5], values, 1.0) == [
        (2, "S"), (4, "T"), (5, "S")]


# invariants

series = st.lists(st.sampled_from([0.0, 0.5, 1.0, 2.0]), min_size=1, max_size=80)


@given(series, st.one_of(st.none(), st.floats(0, 80)), st.sampled_from([0.25, 1.0]))
def test_time_partition_sums_to_horizon(values, crash, cadence):
    horizon = len(values) * cadence
    pat = CORRECT if crash is None else crashed(crash * cadence)
    h = history(values, cadence)
    parts = metrics.time_partition(h, pat, Q, P, TV, horizon)
    assert all(x >= 0 for x in parts)
    assert abs(sum(parts) - horizon) <= cadence
    if crash is None:
        assert parts[2] == 0


@given(series, st.one_of(st.none(), st.floats(0, 80)))
def test_metrics_are_pure(values, crash):
    pat = CORRECT if crash is None else crashed(crash)
    h = history(values)
    a = metrics.qos_report(h, pat, TV, len(values), 1.0, "x")
    b = metrics.qos_report(h, pat, TV, len(values), 1.0, "x")
    assert a == b
    assert metrics.check_diamond_p(h, pat, TV, len(values)) == \
        metrics.check_diamond_p(h, pat, TV, len(values))


def test_query_accuracy_converges_with_cadence():
    base = scenario.load("transient_load")
    ref_sc = base.replace(sampling_cadence=0.02)
    ref = simnet.run(ref_sc)
    q, p = DetectorId("A", 0), ProcessId("A", 0)
    mistaken, _, _ = metrics.time_partition(ref.history, ref.pattern, q, p, ref_sc.threshold,
                                            ref_sc.horizon)
    target = 1 - mistaken / ref_sc.horizon
    errors = []
    for cadence in (2.0, 1.0, 0.5, 0.25):
        sc = base.replace(sampling_cadence=cadence)
        tr = simnet.run(sc)
        errors.append(abs(metrics.query_accuracy(tr.history, tr.pattern, q, p, sc.threshold)
                          - target))
    assert errors[-1] < errors[0]
    assert errors[-1] <= 0.02


# reports

@pytest.fixture(scope="module")
def crash_report():
    sc = scenario.load("crash")
    tr = simnet.run(sc)
    return metrics.qos_report(tr.history, tr.pattern, sc.threshold, sc.horizon,
                              sc.sampling_cadence, sc.name)


def test_report_has_td_per_monitor(crash_report):
    sc = scenario.load("crash")
    crashed_ids = {f.process for f in sc.faults if f.kind == "crash"}
    expected = sorted((q.name, p.name) for q, p in sc.monitoring_pairs()
                      if p.name in crashed_ids)
    faulty = [x for x in crash_report.pairs if x.faulty]
    assert sorted((x.detector, x.process) for x in faulty) == expected
    assert all(x.detection_time is not None for x in faulty)
    assert crash_report.detection_time.count == len(expected)
    assert crash_report.undetected == 0


def test_report_roundtrip(crash_report):
    doc = json.loads(json.dumps(crash_report.to_dict()))
    assert metrics.QosReport.from_dict(doc) == crash_report
    csv_text = crash_report.to_csv()
    assert csv_text.splitlines()[0].startswith("detector,process,faulty")
    assert len(csv_text.splitlines()) == len(crash_report.pairs) + 1
    assert "T_D" in crash_report.to_text()


def test_compare_identical_is_zero(crash_report):
    rows = metrics.compare(crash_report, crash_report)
    assert [r[0] for r in rows] == [c[0] for c in metrics.COMPARED]
    for _, a, b, d in rows:
        assert d is None or d == 0


def test_compare_shape_mismatch(crash_report):
    h = history([0.0] * 10)
    other = metrics.qos_report(h, CORRECT, TV, 10.0, 1.0)
    with pytest.raises(metrics.ShapeMismatch):
        metrics.compare(crash_report, other)


def test_summary_of_empty():
    s = metrics.Summary.of([])
    assert s.count == 0 and s.mean is None
    s = metrics.Summary.of([1.0, 3.0])
    assert (s.count, s.mean, s.min, s.max) == (2, 2.0, 1.0, 3.0)
    assert not math.isnan(s.mean)
