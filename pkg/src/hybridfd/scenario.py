"""Declarative scenario files: topology, links, faults, queries, parameters.

Scenarios are YAML documents. :func:`validate` parses and cross-checks a
document and reports every problem it finds at once.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .core import (
    DEFAULT_DELTA,
    DetectorId,
    DetectorParams,
    FailurePattern,
    ProcessId,
    parse_node,
    valid_cluster_name,
)

Monitoring = Union[str, dict]

BUNDLED = (
    "steady",
    "crash",
    "link_failure",
    "transient_load",
    "partition_heal",
    "cross_cluster_query",
    "scaling_10",
    "scaling_50",
    "scaling_100",
)

FAULT_KINDS = ("crash", "transient", "link_down", "partition")


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.diagnostics))


@dataclass(frozen=True)
class LinkSpec:
    delay: float = 0.05
    jitter: float = 0.01
    loss: float = 0.0


@dataclass(frozen=True)
class LinkOverride:
    src: str
    dst: str
    delay: float
    jitter: float = 0.0
    loss: float = 0.0
    bidirectional: bool = False

    @property
    def spec(self) -> LinkSpec:
        return LinkSpec(self.delay, self.jitter, self.loss)


@dataclass
class ClusterSpec:
    name: str
    processes: int
    detectors: int
    borders: list[int] = field(default_factory=lambda: [0])
    monitoring: Monitoring = "all"
    detector: dict = field(default_factory=dict)

    def process_ids(self) -> list[ProcessId]:
        return [ProcessId(self.name, i) for i in range(self.processes)]

    def detector_ids(self) -> list[DetectorId]:
        return [DetectorId(self.name, i) for i in range(self.detectors)]

    def monitored_by(self, d: int) -> list[ProcessId]:
        m = self.monitoring
        if m == "all":
            return self.process_ids()
        if isinstance(m, dict) and "ring" in m:
            k = int(m["ring"])
            return sorted({ProcessId(self.name, (d + j) % self.processes) for j in range(k)})
        return [ProcessId(self.name, i) for i in sorted(m.get(d, []))]


@dataclass(frozen=True)
class FaultEntry:
    kind: str
    process: Optional[str] = None
    at: Optional[float] = None
    start: Optional[float] = None
    end: Optional[float] = None
    a: Optional[str] = None
    b: Optional[str] = None
    groups: Optional[tuple[tuple[str, ...], ...]] = None
    bidirectional: bool = True


@dataclass(frozen=True)
class QuerySpec:
    at: float
    origin: str
    subject: str


@dataclass
class ScenarioConfig:
    name: str
    horizon: float
    clusters: list[ClusterSpec]
    seed: int = 0
    delta: float = DEFAULT_DELTA
    detector: DetectorParams = field(default_factory=DetectorParams)
    links: LinkSpec = field(default_factory=LinkSpec)
    inter_cluster: Optional[LinkSpec] = None
    link_overrides: list[LinkOverride] = field(default_factory=list)
    faults: list[FaultEntry] = field(default_factory=list)
    queries: list[QuerySpec] = field(default_factory=list)
    sampling_cadence: float = 1.0
    gossip: bool = True
    report_threshold: Optional[float] = None
    initial_view: str = "full"
    heartbeat_jitter: float = 0.0

    @property
    def threshold(self) -> float:
        if self.report_threshold is not None:
            return self.report_threshold
        return self.detector.threshold_tv

    def cluster(self, name: str) -> ClusterSpec:
        for c in self.clusters:
            if c.name == name:
                return c
        raise KeyError(name)

    def params_for(self, cluster: str) -> DetectorParams:
        base = detector_params_to_dict(self.detector)
        base.update(self.cluster(cluster).detector)
        return _params_from_dict(base)

    def processes(self) -> list[ProcessId]:
        return [p for c in self.clusters for p in c.process_ids()]

    def detectors(self) -> list[DetectorId]:
        return [d for c in self.clusters for d in c.detector_ids()]

    def monitoring_pairs(self) -> list[tuple[DetectorId, ProcessId]]:
        return [(d, p) for c in self.clusters for d in c.detector_ids()
                for p in c.monitored_by(d.index)]

    def failure_pattern(self) -> FailurePattern:
        crashes: dict[ProcessId, float] = {}
        transients: dict[ProcessId, list[tuple[float, float]]] = {}
        for f in self.faults:
            if f.kind == "crash":
                crashes[parse_node(f.process)] = float(f.at)
            elif f.kind == "transient":
                transients.setdefault(parse_node(f.process), []).append(
                    (float(f.start), float(f.end)))
        return FailurePattern(
            frozenset(self.processes()), crashes,
            {p: tuple(sorted(v)) for p, v in transients.items()})

    def link_spec(self, src: str, dst: str) -> LinkSpec:
        for o in self.link_overrides:
            if (o.src, o.dst) == (src, dst) or (o.bidirectional and (o.dst, o.src) == (src, dst)):
                return o.spec
        if src.rsplit(".", 1)[0] != dst.rsplit(".", 1)[0] and self.inter_cluster is not None:
            return self.inter_cluster
        return self.links

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "horizon": self.horizon,
            "seed": self.seed,
            "delta": self.delta,
            "sampling_cadence": self.sampling_cadence,
            "gossip": self.gossip,
            "report_threshold": self.report_threshold,
            "initial_view": self.initial_view,
            "heartbeat_jitter": self.heartbeat_jitter,
            "detector": detector_params_to_dict(self.detector),
            "clusters": [_cluster_to_dict(c) for c in self.clusters],
            "links": {
                "default": dataclasses.asdict(self.links),
                "inter_cluster": (dataclasses.asdict(self.inter_cluster)
                                  if self.inter_cluster else None),
                "overrides": [dataclasses.asdict(o) for o in self.link_overrides],
            },
            "faults": [_fault_to_dict(f) for f in self.faults],
            "queries": [dataclasses.asdict(q) for q in self.queries],
        }
        return out


def detector_params_to_dict(p: DetectorParams) -> dict:
    d = dataclasses.asdict(p)
    d["predictor"] = p.predictor.value
    return d


def _cluster_to_dict(c: ClusterSpec) -> dict:
    monitoring: Any = c.monitoring
    if isinstance(monitoring, dict) and "ring" not in monitoring:
        monitoring = {int(k): list(v) for k, v in monitoring.items()}
    return {"name": c.name, "processes": c.processes, "detectors": c.detectors,
            "borders": list(c.borders), "monitoring": monitoring,
            "detector": dict(c.detector)}


def _fault_to_dict(f: FaultEntry) -> dict:
    d = {k: v for k, v in dataclasses.asdict(f).items() if v is not None}
    if f.groups is not None:
        d["groups"] = [list(g) for g in f.groups]
    if f.kind in ("crash", "transient"):
        d.pop("bidirectional", None)
    return d


_PARAM_FIELDS = {f.name for f in dataclasses.fields(DetectorParams)}


def _params_from_dict(d: dict) -> DetectorParams:
    d = dict(d)
    if isinstance(d.get("contribution_cap"), str) and d["contribution_cap"].lower() == "none":
        d["contribution_cap"] = None
    return DetectorParams(**d)


class _Checker:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def err(self, msg: str) -> None:
        self.errors.append(msg)

    def number(self, d: dict, key: str, where: str, default: Any = None, *,
               positive: bool = False, nonneg: bool = False,
               unit: bool = False, required: bool = False) -> Any:
        if key not in d or d[key] is None:
            if required:
                self.err(f"{where}: missing '{key}'")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.err(f"{where}: '{key}' must be a finite number, got {v!r}")
            return default
        v = float(v)
        if positive and not v > 0:
            self.err(f"{where}: '{key}' must be > 0, got {v}")
        if nonneg and v < 0:
            self.err(f"{where}: '{key}' must be >= 0, got {v}")
        if unit and not 0.0 <= v <= 1.0:
            self.err(f"{where}: '{key}' must lie in [0, 1], got {v}")
        return v


def _link(ck: _Checker, d: Any, where: str) -> Optional[LinkSpec]:
    if d is None:
        return None
    if not isinstance(d, dict):
        ck.err(f"{where}: expected a mapping")
        return None
    base = LinkSpec()
    delay = ck.number(d, "delay", where, base.delay, positive=True)
    jitter = ck.number(d, "jitter", where, base.jitter, nonneg=True)
    loss = ck.number(d, "loss", where, base.loss, unit=True)
    if delay is not None and jitter is not None and jitter >= delay:
        ck.err(f"{where}: jitter {jitter} must be smaller than delay {delay}")
    return LinkSpec(delay, jitter, loss)


def from_dict(doc: Any) -> ScenarioConfig:
    """Build a config from parsed YAML, collecting every diagnostic."""
    ck = _Checker()
    if not isinstance(doc, dict):
        raise ScenarioError(["top level must be a mapping"])

    name = str(doc.get("name", "scenario"))
    horizon = ck.number(doc, "horizon", "scenario", required=True, positive=True)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        ck.err(f"scenario: 'seed' must be a 64-bit non-negative integer, got {seed!r}")
        seed = 0
    delta = ck.number(doc, "delta", "scenario", DEFAULT_DELTA, positive=True)
    cadence = ck.number(doc, "sampling_cadence", "scenario", 1.0, positive=True)
    report_threshold = ck.number(doc, "report_threshold", "scenario", None, positive=True)
    hb_jitter = ck.number(doc, "heartbeat_jitter", "scenario", 0.0, nonneg=True)
    gossip_on = doc.get("gossip", True)
    if not isinstance(gossip_on, bool):
        ck.err("scenario: 'gossip' must be true or false")
        gossip_on = True
    initial_view = doc.get("initial_view", "full")
    if initial_view not in ("full", "empty"):
        ck.err(f"scenario: 'initial_view' must be 'full' or 'empty', got {initial_view!r}")

    # detector parameters
    det_doc = doc.get("detector") or {}
    params = DetectorParams()
    if not isinstance(det_doc, dict):
        ck.err("detector: expected a mapping")
        det_doc = {}
    unknown = set(det_doc) - _PARAM_FIELDS
    for k in sorted(unknown):
        ck.err(f"detector: unknown parameter '{k}'")
    try:
        params = _params_from_dict({k: v for k, v in det_doc.items() if k in _PARAM_FIELDS})
        for p in params.problems():
            ck.err(f"detector: {p}")
    except (TypeError, ValueError) as e:
        ck.err(f"detector: {e}")
    if delta is not None and params.heartbeat_period <= delta:
        ck.err("detector: heartbeat_period must exceed delta")

    # clusters
    clusters: list[ClusterSpec] = []
    raw_clusters = doc.get("clusters")
    if not isinstance(raw_clusters, list) or not raw_clusters:
        ck.err("scenario: at least one cluster is required")
        raw_clusters = []
    names: set[str] = set()
    for i, c in enumerate(raw_clusters):
        where = f"clusters[{i}]"
        if not isinstance(c, dict):
            ck.err(f"{where}: expected a mapping")
            continue
        cname = c.get("name")
        if not isinstance(cname, str) or not valid_cluster_name(cname):
            ck.err(f"{where}: cluster name must be a non-empty identifier, got {cname!r}")
            continue
        where = f"cluster {cname}"
        if cname in names:
            ck.err(f"{where}: duplicate cluster name")
        names.add(cname)
        nproc = c.get("processes", 0)
        ndet = c.get("detectors", 0)
        if not isinstance(nproc, int) or not isinstance(ndet, int) or nproc < 0 or ndet < 0:
            ck.err(f"{where}: process and detector counts must be non-negative integers")
            continue
        if nproc == 0 or ndet == 0:
            ck.err(f"{where}: empty cluster (needs at least one process and one detector)")
        borders = c.get("borders", [0])
        if (not isinstance(borders, list) or not borders
                or any(not isinstance(b, int) or not 0 <= b < ndet for b in borders)
                or len(set(borders)) != len(borders)):
            ck.err(f"{where}: borders must be a non-empty list of distinct detector indices")
            borders = [0]
        monitoring = c.get("monitoring", "all")
        if monitoring == "all":
            pass
        elif isinstance(monitoring, dict) and set(monitoring) == {"ring"}:
            k = monitoring["ring"]
            if not isinstance(k, int) or not 1 <= k <= max(nproc, 1):
                ck.err(f"{where}: ring size must be in [1, {nproc}]")
        elif isinstance(monitoring, dict):
            fixed = {}
            for dk, plist in monitoring.items():
                try:
                    di = int(dk)
                except (TypeError, ValueError):
                    ck.err(f"{where}: monitoring key {dk!r} is not a detector index")
                    continue
                if not 0 <= di < ndet:
                    ck.err(f"{where}: monitoring names unknown detector {cname}.d{di}")
                if not isinstance(plist, list) or any(
                        not isinstance(x, int) or not 0 <= x < nproc for x in plist):
                    ck.err(f"{where}: monitoring list for d{di} must hold process indices")
                    continue
                fixed[di] = sorted(set(plist))
            monitoring = fixed
        else:
            ck.err(f"{where}: monitoring must be 'all', {{ring: k}} or explicit subsets")
            monitoring = "all"
        overrides = c.get("detector") or {}
        if not isinstance(overrides, dict):
            ck.err(f"{where}: detector overrides must be a mapping")
            overrides = {}
        for k in sorted(set(overrides) - _PARAM_FIELDS):
            ck.err(f"{where}: unknown detector parameter '{k}'")
        overrides = {k: v for k, v in overrides.items() if k in _PARAM_FIELDS}
        if overrides:
            try:
                merged = detector_params_to_dict(params)
                merged.update(overrides)
                for p in _params_from_dict(merged).problems():
                    ck.err(f"{where}: {p}")
            except (TypeError, ValueError) as e:
                ck.err(f"{where}: {e}")
        clusters.append(ClusterSpec(cname, nproc, ndet, list(borders), monitoring, overrides))

    processes = {p.name for c in clusters for p in c.process_ids()}
    detectors = {d.name for c in clusters for d in c.detector_ids()}
    nodes = processes | detectors

    # links
    links_doc = doc.get("links") or {}
    if not isinstance(links_doc, dict):
        ck.err("links: expected a mapping")
        links_doc = {}
    links = _link(ck, links_doc.get("default", {}), "links.default") or LinkSpec()
    inter = _link(ck, links_doc.get("inter_cluster"), "links.inter_cluster")
    overrides_out = []
    for i, o in enumerate(links_doc.get("overrides") or []):
        where = f"links.overrides[{i}]"
        if not isinstance(o, dict):
            ck.err(f"{where}: expected a mapping")
            continue
        for end in ("src", "dst"):
            if o.get(end) not in nodes:
                ck.err(f"{where}: unknown node {o.get(end)!r}")
        spec = _link(ck, o, where)
        if spec is not None and o.get("src") in nodes and o.get("dst") in nodes:
            overrides_out.append(LinkOverride(o["src"], o["dst"], spec.delay, spec.jitter,
                                              spec.loss, bool(o.get("bidirectional", False))))

    # faults
    faults: list[FaultEntry] = []
    crash_at: dict[str, float] = {}
    transients: dict[str, list[tuple[float, float]]] = {}
    for i, f in enumerate(doc.get("faults") or []):
        where = f"faults[{i}]"
        if not isinstance(f, dict):
            ck.err(f"{where}: expected a mapping")
            continue
        kind = f.get("kind")
        if kind not in FAULT_KINDS:
            ck.err(f"{where}: unknown fault kind {kind!r}")
            continue
        where = f"{where} ({kind})"
        if kind == "crash":
            proc = f.get("process")
            at = ck.number(f, "at", where, required=True, nonneg=True)
            if proc not in processes:
                ck.err(f"{where}: unknown process {proc!r}")
                continue
            if at is None:
                continue
            if horizon is not None and at > horizon:
                ck.err(f"{where}: time {at} beyond horizon")
            if proc in crash_at:
                ck.err(f"{where}: {proc} crashes twice")
            crash_at[proc] = at
            faults.append(FaultEntry("crash", process=proc, at=at))
        elif kind == "transient":
            proc = f.get("process")
            start = ck.number(f, "start", where, required=True, nonneg=True)
            end = ck.number(f, "end", where, required=True, positive=True)
            if proc not in processes:
                ck.err(f"{where}: unknown process {proc!r}")
                continue
            if start is None or end is None:
                continue
            if not start < end:
                ck.err(f"{where}: start must precede end")
                continue
            if horizon is not None and start > horizon:
                ck.err(f"{where}: time {start} beyond horizon")
            transients.setdefault(proc, []).append((start, end))
            faults.append(FaultEntry("transient", process=proc, start=start, end=end))
        elif kind == "link_down":
            a, b = f.get("a"), f.get("b")
            start = ck.number(f, "start", where, required=True, nonneg=True)
            end = ck.number(f, "end", where, None, positive=True)
            bad = [x for x in (a, b) if x not in nodes]
            for x in bad:
                ck.err(f"{where}: unknown node {x!r}")
            if bad or start is None:
                continue
            if end is not None and not start < end:
                ck.err(f"{where}: start must precede end")
            faults.append(FaultEntry("link_down", a=a, b=b, start=start, end=end,
                                     bidirectional=bool(f.get("bidirectional", True))))
        else:
            groups = f.get("groups")
            start = ck.number(f, "start", where, required=True, nonneg=True)
            end = ck.number(f, "end", where, None, positive=True)
            if (not isinstance(groups, list) or len(groups) != 2
                    or not all(isinstance(g, list) and g for g in groups)):
                ck.err(f"{where}: 'groups' must be two non-empty node lists")
                continue
            bad = [x for g in groups for x in g if x not in nodes]
            for x in bad:
                ck.err(f"{where}: unknown node {x!r}")
            if set(groups[0]) & set(groups[1]):
                ck.err(f"{where}: partition groups overlap")
            if bad or start is None:
                continue
            if end is not None and not start < end:
                ck.err(f"{where}: start must precede end")
            faults.append(FaultEntry("partition", start=start, end=end,
                                     groups=(tuple(groups[0]), tuple(groups[1]))))
    for proc, ivs in transients.items():
        ivs.sort()
        for (s0, e0), (s1, e1) in zip(ivs, ivs[1:]):
            if s1 < e0:
                ck.err(f"faults: overlapping transient intervals for {proc}")
        if proc in crash_at and any(e > crash_at[proc] for _, e in ivs):
            ck.err(f"faults: {proc} has a transient interval after its crash at "
                   f"{crash_at[proc]} (crashed processes never recover)")

    # queries
    queries = []
    for i, q in enumerate(doc.get("queries") or []):
        where = f"queries[{i}]"
        if not isinstance(q, dict):
            ck.err(f"{where}: expected a mapping")
            continue
        at = ck.number(q, "at", where, required=True, nonneg=True)
        origin, subject = q.get("origin"), q.get("subject")
        ok = True
        if origin not in detectors:
            ck.err(f"{where}: unknown detector {origin!r}")
            ok = False
        if subject not in processes:
            ck.err(f"{where}: unknown process {subject!r}")
            ok = False
        if ok and origin.rsplit(".", 1)[0] == subject.rsplit(".", 1)[0]:
            ck.err(f"{where}: origin and subject share a cluster; queries cross clusters")
            ok = False
        if at is not None and horizon is not None and at >= horizon:
            ck.err(f"{where}: time {at} beyond horizon")
            ok = False
        if ok and at is not None:
            queries.append(QuerySpec(at, origin, subject))

    if ck.errors:
        raise ScenarioError(ck.errors)
    return ScenarioConfig(
        name=name, horizon=horizon, clusters=clusters, seed=seed, delta=delta,
        detector=params, links=links, inter_cluster=inter, link_overrides=overrides_out,
        faults=faults, queries=queries, sampling_cadence=cadence, gossip=gossip_on,
        report_threshold=report_threshold, initial_view=initial_view,
        heartbeat_jitter=hb_jitter)


def validate(config_text: str) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as e:
        raise ScenarioError([f"syntax error: {e}"]) from None
    return from_dict(doc)


def serialize(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("hybridfd") / "scenarios" / f"{name}.yaml"))


def load(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by name."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in BUNDLED:
        path = bundled_path(str(path_or_name))
    return validate(path.read_text())
