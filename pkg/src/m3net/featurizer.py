"""Feature extraction: experiments -> normalized flow/link matrices.

Link loads and normalization statistics are computed once up front; the
per-epoch training loop only gathers rows, which never changes the
feature values (precompute equivalence is tested).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .netgraph import Experiment

FLOW_FEATURES = ("traffic", "packets_per_burst", "packet_size",
                 "p90_interarrival", "interpkt_mean", "interpkt_var")
LINK_FEATURES = ("capacity", "load", "normalized_load", "src_degree")


@dataclass
class FeatureStats:
    flow_mean: np.ndarray
    flow_std: np.ndarray
    flow_min: np.ndarray
    flow_max: np.ndarray
    link_mean: np.ndarray
    link_std: np.ndarray
    link_min: np.ndarray
    link_max: np.ndarray

    @property
    def flow_zero_std(self) -> np.ndarray:
        return self.flow_std == 0.0

    @property
    def link_zero_std(self) -> np.ndarray:
        return self.link_std == 0.0

    def to_json(self) -> dict:
        def block(names, mean, std, mn, mx):
            return {n: {"mean": mean[i], "std": std[i], "min": mn[i], "max": mx[i]}
                    for i, n in enumerate(names)}
        return {
            "flow": block(FLOW_FEATURES, *(a.tolist() for a in
                          (self.flow_mean, self.flow_std, self.flow_min, self.flow_max))),
            "link": block(LINK_FEATURES, *(a.tolist() for a in
                          (self.link_mean, self.link_std, self.link_min, self.link_max))),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureStats":
        def unblock(names, block):
            return tuple(np.array([block[n][k] for n in names])
                         for k in ("mean", "std", "min", "max"))
        return cls(*unblock(FLOW_FEATURES, doc["flow"]),
                   *unblock(LINK_FEATURES, doc["link"]))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path: str) -> "FeatureStats":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class FeatureMatrices:
    flow_features: np.ndarray        # [num_flows, 6], standardized
    link_features: np.ndarray        # [num_links, 4], standardized
    flow_to_links: list[np.ndarray]  # per flow, link indices in path order
    capacities: np.ndarray           # raw [num_links] bits/s, for the delay head
    delay: np.ndarray                # labels
    jitter: np.ndarray
    drop_frac: np.ndarray

    @property
    def num_flows(self) -> int:
        return len(self.flow_features)

    @property
    def num_links(self) -> int:
        return len(self.link_features)

    def link_to_flows(self) -> list[list[tuple[int, int]]]:
        """Per link, the (flow index, position-in-path) pairs crossing it."""
        buckets: list[list[tuple[int, int]]] = [[] for _ in range(self.num_links)]
        for fi, links in enumerate(self.flow_to_links):
            for pos, li in enumerate(links):
                buckets[int(li)].append((fi, pos))
        return buckets


def compute_link_load(e: Experiment) -> np.ndarray:
    """Offered traffic over capacity, per link; multi-visits count per visit."""
    idx = e.topology.link_index()
    load = np.zeros(len(e.topology.links))
    for f in e.flows:
        for lid in f.path.link_ids:
            load[idx[lid]] += f.traffic_bps
    caps = np.array([l.capacity_bps for l in e.topology.links])
    return load / caps


def normalized_link_load(e: Experiment) -> np.ndarray:
    load = compute_link_load(e)
    peak = load.max() if len(load) else 0.0
    return load / peak if peak > 0 else np.zeros_like(load)


def _raw_link_features(e: Experiment) -> np.ndarray:
    load = compute_link_load(e)
    norm = normalized_link_load(e)
    deg = np.zeros(e.topology.node_count)
    for l in e.topology.links:
        deg[l.src] += 1
        deg[l.dst] += 1
    rows = [[l.capacity_bps, load[i], norm[i], deg[l.src]]
            for i, l in enumerate(e.topology.links)]
    return np.array(rows, dtype=np.float64)


def _raw_flow_features(e: Experiment) -> np.ndarray:
    return np.array([f.feature_vector() for f in e.flows], dtype=np.float64)


def fit_stats(experiments: list[Experiment]) -> FeatureStats:
    """Population-convention statistics over the whole training split."""
    if not experiments:
        raise ValueError("fit_stats requires at least one experiment")
    flow = np.concatenate([_raw_flow_features(e) for e in experiments])
    link = np.concatenate([_raw_link_features(e) for e in experiments])
    return FeatureStats(
        flow.mean(0), flow.std(0), flow.min(0), flow.max(0),
        link.mean(0), link.std(0), link.min(0), link.max(0))


def _standardize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    denom = np.where(std == 0.0, 1.0, std)  # zero-std features pass through
    return (x - mean) / denom


def featurize(e: Experiment, stats: FeatureStats) -> FeatureMatrices:
    idx = e.topology.link_index()
    return FeatureMatrices(
        flow_features=_standardize(_raw_flow_features(e),
                                   stats.flow_mean, stats.flow_std),
        link_features=_standardize(_raw_link_features(e),
                                   stats.link_mean, stats.link_std),
        flow_to_links=[np.array([idx[lid] for lid in f.path.link_ids],
                                dtype=np.int64) for f in e.flows],
        capacities=np.array([l.capacity_bps for l in e.topology.links]),
        delay=np.array([f.labels.delay_s for f in e.flows]),
        jitter=np.array([f.labels.jitter_s for f in e.flows]),
        drop_frac=np.array([f.labels.drop_frac for f in e.flows]),
    )
