"""Topology / flow / experiment data model and the on-disk dataset format.

One experiment = one JSON file ``exp_<id>.json`` holding the topology,
the flows with their measured source-side features, per-flow routed
paths (as ordered link-id lists) and the three ground-truth labels.
Everything is immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

__all__ = [
    "Link",
    "Topology",
    "Path",
    "Labels",
    "FlowRecord",
    "Experiment",
    "DatasetError",
    "ParseError",
    "ValidationError",
    "node_degree",
    "validate_experiment",
    "load_experiment",
    "save_experiment",
    "load_dataset",
    "save_dataset",
]


class DatasetError(Exception):
    """Base class for dataset I/O and validation failures."""


class ParseError(DatasetError):
    """Malformed dataset file (bad JSON / missing keys)."""


class ValidationError(DatasetError):
    """Structurally parsed but invariant-violating experiment."""


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    capacity_bps: float
    buffer_pkts: int = 64


@dataclass(frozen=True)
class Topology:
    node_count: int
    links: tuple[Link, ...]

    def link_index(self) -> dict[int, int]:
        """Map link id -> position in self.links."""
        return {l.id: i for i, l in enumerate(self.links)}


@dataclass(frozen=True)
class Path:
    flow_id: int
    link_ids: tuple[int, ...]


@dataclass(frozen=True)
class Labels:
    delay_s: float
    jitter_s: float
    drop_frac: float


@dataclass(frozen=True)
class FlowRecord:
    id: int
    traffic_bps: float
    packets_per_burst: float
    packet_size_bits: float
    p90_interarrival_s: float
    interpkt_mean_s: float
    interpkt_var_s2: float
    path: Path
    labels: Labels

    def feature_vector(self) -> list[float]:
        return [
            self.traffic_bps,
            self.packets_per_burst,
            self.packet_size_bits,
            self.p90_interarrival_s,
            self.interpkt_mean_s,
            self.interpkt_var_s2,
        ]


@dataclass(frozen=True)
class Experiment:
    id: int
    topology: Topology
    flows: tuple[FlowRecord, ...] = field(default_factory=tuple)


def node_degree(t: Topology, n: int) -> int:
    """Number of link records incident to node n (src or dst endpoint)."""
    if not 0 <= n < t.node_count:
        raise ValidationError(f"node {n} out of range for {t.node_count}-node topology")
    return sum(1 for l in t.links if l.src == n or l.dst == n)


def validate_experiment(e: Experiment) -> list[str]:
    """Return a list of invariant violations; empty list means pass."""
    problems: list[str] = []
    seen_ids: set[int] = set()
    for l in e.topology.links:
        where = f"experiment {e.id}, link {l.id}"
        if l.id in seen_ids:
            problems.append(f"{where}: duplicate link id")
        seen_ids.add(l.id)
        if l.capacity_bps <= 0:
            problems.append(f"{where}: capacity {l.capacity_bps} not positive")
        if l.src == l.dst:
            problems.append(f"{where}: self-loop {l.src}->{l.dst}")
        if not (0 <= l.src < e.topology.node_count and 0 <= l.dst < e.topology.node_count):
            problems.append(f"{where}: endpoint outside node range")

    if not e.flows:
        problems.append(f"experiment {e.id}: no flows")

    by_id = {l.id: l for l in e.topology.links}
    for f in e.flows:
        where = f"experiment {e.id}, flow {f.id}"
        if len(f.path.link_ids) < 1:
            problems.append(f"{where}: empty path")
        for i, lid in enumerate(f.path.link_ids):
            if lid not in by_id:
                problems.append(f"{where}: path references unknown link {lid}")
        hops = [by_id[lid] for lid in f.path.link_ids if lid in by_id]
        for i in range(len(hops) - 1):
            if hops[i].dst != hops[i + 1].src:
                problems.append(f"{where}: path not contiguous at index {i + 1}")
        for name, v in zip(
            ("traffic", "packets_per_burst", "packet_size", "p90_interarrival",
             "interpkt_mean", "interpkt_var"),
            f.feature_vector(),
        ):
            if not math.isfinite(v) or v < 0:
                problems.append(f"{where}: feature {name}={v} not finite/non-negative")
        if not 0.0 <= f.labels.drop_frac <= 1.0:
            problems.append(f"{where}: drop_frac {f.labels.drop_frac} outside [0,1]")
        if f.labels.delay_s <= 0:
            problems.append(f"{where}: delay {f.labels.delay_s} not positive")
        if f.labels.jitter_s < 0:
            problems.append(f"{where}: negative jitter {f.labels.jitter_s}")
    return problems


# ---------------------------------------------------------------- JSON I/O

def _experiment_to_json(e: Experiment) -> dict:
    return {
        "id": e.id,
        "topology": {
            "node_count": e.topology.node_count,
            "links": [
                {"id": l.id, "src": l.src, "dst": l.dst,
                 "capacity_bps": l.capacity_bps, "buffer_pkts": l.buffer_pkts}
                for l in e.topology.links
            ],
        },
        "flows": [
            {
                "id": f.id,
                "traffic_bps": f.traffic_bps,
                "packets_per_burst": f.packets_per_burst,
                "packet_size_bits": f.packet_size_bits,
                "p90_interarrival_s": f.p90_interarrival_s,
                "interpkt_mean_s": f.interpkt_mean_s,
                "interpkt_var_s2": f.interpkt_var_s2,
                "path": list(f.path.link_ids),
                "labels": {
                    "delay_s": f.labels.delay_s,
                    "jitter_s": f.labels.jitter_s,
                    "drop_frac": f.labels.drop_frac,
                },
            }
            for f in e.flows
        ],
    }


def _experiment_from_json(doc: dict) -> Experiment:
    try:
        topo = Topology(
            node_count=int(doc["topology"]["node_count"]),
            links=tuple(
                Link(int(l["id"]), int(l["src"]), int(l["dst"]),
                     float(l["capacity_bps"]), int(l.get("buffer_pkts", 64)))
                for l in doc["topology"]["links"]
            ),
        )
        flows = tuple(
            FlowRecord(
                id=int(f["id"]),
                traffic_bps=float(f["traffic_bps"]),
                packets_per_burst=float(f["packets_per_burst"]),
                packet_size_bits=float(f["packet_size_bits"]),
                p90_interarrival_s=float(f["p90_interarrival_s"]),
                interpkt_mean_s=float(f["interpkt_mean_s"]),
                interpkt_var_s2=float(f["interpkt_var_s2"]),
                path=Path(int(f["id"]), tuple(int(x) for x in f["path"])),
                labels=Labels(float(f["labels"]["delay_s"]),
                              float(f["labels"]["jitter_s"]),
                              float(f["labels"]["drop_frac"])),
            )
            for f in doc["flows"]
        )
        return Experiment(id=int(doc["id"]), topology=topo, flows=flows)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed experiment record: {exc}") from None


def load_experiment(path: str | os.PathLike) -> Experiment:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    e = _experiment_from_json(doc)
    problems = validate_experiment(e)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return e


def save_experiment(e: Experiment, directory: str | os.PathLike) -> str:
    out = os.path.join(directory, f"exp_{e.id}.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(_experiment_to_json(e), fh)
    return out


def load_dataset(directory: str | os.PathLike) -> list[Experiment]:
    """Load every exp_*.json under directory, ordered by experiment id."""
    if not os.path.isdir(directory):
        raise NotADirectoryError(f"not a directory: {directory}")
    exps = []
    for name in sorted(os.listdir(directory)):
        if name.startswith("exp_") and name.endswith(".json"):
            exps.append(load_experiment(os.path.join(directory, name)))
    exps.sort(key=lambda e: e.id)
    return exps


def save_dataset(experiments, directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    for e in experiments:
        problems = validate_experiment(e)
        if problems:
            raise ValidationError("; ".join(problems))
        save_experiment(e, directory)
