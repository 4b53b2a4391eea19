"""Command-line driver: validate, run, compare and query scenarios.

Exit codes are 0 on success, 1 when the input is invalid (bad scenario,
unknown ids, mismatched reports) and 2 when something fails at runtime
(unreadable or unwritable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import KERNEL_BACKEND, __version__, metrics, scenario, simnet
from .cluster import inter_cluster_traffic_count
from .core import DetectorId, ProcessId, parse_node

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump(obj: object) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_scenario(config: str) -> scenario.ScenarioConfig:
    path = Path(config)
    if not path.exists() and config not in scenario.BUNDLED:
        raise CliError(f"no such scenario file or bundled scenario: {config}", EXIT_INVALID)
    try:
        return scenario.load(config)
    except scenario.ScenarioError as e:
        raise CliError("\n".join(["invalid scenario:"] + [f"  {d}" for d in e.diagnostics]),
                       EXIT_INVALID) from None
    except OSError as e:
        raise CliError(f"cannot read {config}: {e}", EXIT_RUNTIME) from None


def _with_overrides(sc: scenario.ScenarioConfig, seed: Optional[int], no_gossip: bool,
                    cadence: Optional[float]) -> scenario.ScenarioConfig:
    doc = sc.to_dict()
    if seed is not None:
        doc["seed"] = seed
    if no_gossip:
        doc["gossip"] = False
    if cadence is not None:
        doc["sampling_cadence"] = cadence
    try:
        # re-validate so overrides get the same checks as file contents
        return scenario.from_dict(doc)
    except scenario.ScenarioError as e:
        raise CliError("\n".join(["invalid override:"] + [f"  {d}" for d in e.diagnostics]),
                       EXIT_INVALID) from None


# validate ---------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    sc = _load_scenario(args.config)
    print(f"ok: {sc.name}: {len(sc.clusters)} cluster(s), {len(sc.processes())} processes, "
          f"{len(sc.detectors())} detectors, {len(sc.faults)} fault(s), "
          f"{len(sc.queries)} query(ies), horizon {sc.horizon}")
    return EXIT_OK


# run --------------------------------------------------------------------

def run_scenario(sc: scenario.ScenarioConfig) -> tuple[simnet.Trace, metrics.QosReport,
                                                       metrics.DiamondPVerdict]:
    trace = simnet.run(sc)
    report = metrics.qos_report(trace.history, trace.pattern, sc.threshold, sc.horizon,
                                sc.sampling_cadence, sc.name)
    verdict = metrics.check_diamond_p(trace.history, trace.pattern, sc.threshold, sc.horizon)
    return trace, report, verdict


def _query_rows(trace: simnet.Trace) -> list[dict]:
    rows = []
    for r in trace.of_kind("query_result"):
        rows.append({"t": r["t"], "origin": r["actor"], "subject": r["subject"],
                     "value": r["value"], **r["detail"]})
    return rows


def _summary(sc: scenario.ScenarioConfig, trace: simnet.Trace, report: metrics.QosReport,
             verdict: metrics.DiamondPVerdict) -> dict:
    sent = delivered = dropped = in_flight = 0
    for s, d, x, f in trace.link_stats.values():
        sent += s
        delivered += d
        dropped += x
        in_flight += f
    return {
        "scenario": sc.name,
        "seed": sc.seed,
        "gossip": sc.gossip,
        "horizon": sc.horizon,
        "sampling_cadence": sc.sampling_cadence,
        "threshold": sc.threshold,
        "trace_sha256": trace.digest(),
        "trace_records": len(trace.records),
        "messages": {"sent": sent, "delivered": delivered, "dropped": dropped,
                     "in_flight": in_flight},
        "inter_cluster_messages": inter_cluster_traffic_count(trace.records),
        "detection_time_mean": report.detection_time.mean,
        "mistake_duration_mean": report.mistake_duration.mean,
        "query_accuracy_mean": report.query_accuracy.mean,
        "strong_completeness": verdict.strong_completeness,
        "eventual_strong_accuracy": verdict.eventual_strong_accuracy,
        "stabilization_time": verdict.stabilization_time,
        "queries": _query_rows(trace),
    }


def cmd_run(args: argparse.Namespace) -> int:
    sc = _with_overrides(_load_scenario(args.config), args.seed, args.no_gossip, args.cadence)
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create output directory {out}: {e}", EXIT_RUNTIME) from None
    trace, report, verdict = run_scenario(sc)
    text = report.to_text()
    text += (f"strong completeness: {verdict.strong_completeness}; "
             f"eventual strong accuracy: {verdict.eventual_strong_accuracy} "
             f"(stabilization {verdict.stabilization_time})\n")
    try:
        trace.write(out / "trace.jsonl")
        (out / "report.json").write_text(_dump({
            "qos": report.to_dict(),
            "diamond_p": verdict.to_dict(),
            "queries": _query_rows(trace),
        }))
        (out / "report.csv").write_text(report.to_csv())
        (out / "report.txt").write_text(text)
        (out / "summary.json").write_text(_dump(_summary(sc, trace, report, verdict)))
    except OSError as e:
        raise CliError(f"cannot write results to {out}: {e}", EXIT_RUNTIME) from None
    sys.stdout.write(text)
    return EXIT_OK


# compare ----------------------------------------------------------------

def _read_report(path: str) -> metrics.QosReport:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    try:
        doc = json.loads(p.read_text())
    except OSError as e:
        raise CliError(f"cannot read report {p}: {e}", EXIT_RUNTIME) from None
    except json.JSONDecodeError as e:
        raise CliError(f"{p} is not a JSON report: {e}", EXIT_INVALID) from None
    try:
        return metrics.QosReport.from_dict(doc.get("qos", doc))
    except (TypeError, KeyError, AttributeError) as e:
        raise CliError(f"{p} is not a QoS report: {e}", EXIT_INVALID) from None


# lower is better except for query accuracy
_HIGHER_IS_BETTER = {"P_A mean"}


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.6g}"


def cmd_compare(args: argparse.Namespace) -> int:
    a, b = _read_report(args.report_a), _read_report(args.report_b)
    try:
        rows = metrics.compare(a, b)
    except metrics.ShapeMismatch as e:
        raise CliError(f"cannot compare: {e}", EXIT_INVALID) from None
    print(f"{'metric':10s} {'A':>12s} {'B':>12s} {'B - A':>12s}  better")
    for label, va, vb, delta in rows:
        if delta is None or delta == 0:
            better = "="
        else:
            better = "B" if (delta > 0) == (label in _HIGHER_IS_BETTER) else "A"
        print(f"{label:10s} {_fmt(va):>12s} {_fmt(vb):>12s} {_fmt(delta):>12s}  {better}")
    return EXIT_OK


# query ------------------------------------------------------------------

def _read_trace(path: str) -> simnet.Trace:
    p = Path(path)
    if p.is_dir():
        p = p / "trace.jsonl"
    try:
        return simnet.Trace.read(p)
    except OSError as e:
        raise CliError(f"cannot read trace {p}: {e}", EXIT_RUNTIME) from None
    except (ValueError, KeyError) as e:
        raise CliError(f"{p} is not a trace: {e}", EXIT_INVALID) from None


def _node(name: str, kind: type) -> ProcessId | DetectorId:
    try:
        node = parse_node(name)
    except ValueError:
        raise CliError(f"malformed id {name!r}", EXIT_INVALID) from None
    if not isinstance(node, kind):
        raise CliError(f"{name} is not a {'detector' if kind is DetectorId else 'process'} id",
                       EXIT_INVALID)
    return node


def query_trace(trace: simnet.Trace, detector: str, subject: str, t: float) -> dict:
    q = _node(detector, DetectorId)
    p = _node(subject, ProcessId)
    horizon = trace.header["horizon"]
    if not 0.0 <= t <= horizon:
        raise CliError(f"time {t} is outside the simulated horizon [0, {horizon}]",
                       EXIT_INVALID)
    pairs = trace.history.pairs()
    if not any(d == q for d, _ in pairs):
        raise CliError(f"unknown detector {detector}", EXIT_INVALID)
    if (q, p) not in pairs:
        raise CliError(f"{detector} does not monitor {subject}", EXIT_INVALID)
    at, value = trace.history.value_at(q, p, t)
    threshold = trace.header["threshold"]
    return {"detector": detector, "subject": subject, "time": t, "sample_time": at,
            "suspicion": value, "threshold": threshold,
            "verdict": "suspected" if value >= threshold else "trusted"}


def cmd_query(args: argparse.Namespace) -> int:
    res = query_trace(_read_trace(args.trace), args.detector, args.subject, args.time)
    if args.json:
        sys.stdout.write(_dump(res))
    else:
        print(f"{res['detector']} -> {res['subject']} at t={res['time']:g} "
              f"(sample t={res['sample_time']:g}): suspicion {res['suspicion']:.6g}, "
              f"{res['verdict']}")
    return EXIT_OK


# entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridfd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version",
                    version=f"%(prog)s {__version__} (kernels: {KERNEL_BACKEND})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario and list every problem found")
    p.add_argument("config", help="scenario file or bundled scenario name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write trace and reports")
    p.add_argument("config", help="scenario file or bundled scenario name")
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--no-gossip", action="store_true", help="disable the gossip layer")
    p.add_argument("--cadence", type=float, help="override the sampling cadence")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="side-by-side QoS deltas of two reports")
    p.add_argument("report_a", help="report.json or run directory")
    p.add_argument("report_b", help="report.json or run directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("query", help="suspicion level a detector held at a given time")
    p.add_argument("trace", help="trace.jsonl or run directory")
    p.add_argument("--detector", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_query)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"hybridfd: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
