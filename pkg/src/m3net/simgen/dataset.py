"""Labeled dataset generation: topologies + routings + traffic -> JSON files."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from ..netgraph import Experiment, save_experiment
from .core import simulate
from .topo import DEFAULT_CAPACITIES_BPS, gen_routing, gen_topology
from .traffic import TrafficSpec

GENERATOR_VERSION = 1


@dataclass
class GenConfig:
    n_experiments: int = 100
    flows_min: int = 2
    flows_max: int = 6
    node_min: int = 5
    node_max: int = 8
    mix: str = "CBR+MB"            # "MB" | "CBR+MB"
    cbr_prob: float = 0.6          # CBR share when mix is CBR+MB
    duration_s: float = 10.0
    warmup_s: float = 5.0
    capacities_bps: tuple[float, ...] = DEFAULT_CAPACITIES_BPS
    buffer_pkts: int = 64
    prop_s: float = 10e-6
    # CBR rate band, log-uniform fraction of the path bottleneck capacity
    cbr_rate_frac: tuple[float, float] = (0.05, 0.6)
    mb_packets_per_burst: tuple[int, int] = (80, 400)
    mb_gap_s: tuple[float, float] = (0.0005, 0.005)
    packet_size_choices_bits: tuple[float, ...] = (4000.0, 8000.0, 12000.0)
    seed: int = 0

    def __post_init__(self):
        if self.mix not in ("MB", "CBR+MB"):
            raise ValueError(f"unknown traffic mix {self.mix!r}")

    @classmethod
    def from_json(cls, path: str) -> "GenConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        cfg = cls(**doc)
        for f in ("capacities_bps", "cbr_rate_frac", "mb_packets_per_burst",
                  "mb_gap_s", "packet_size_choices_bits"):
            setattr(cfg, f, tuple(getattr(cfg, f)))
        return cfg


def gen_experiment(cfg: GenConfig, exp_id: int, seed: int) -> Experiment:
    """Generate and simulate one experiment; deterministic per (cfg, seed)."""
    for attempt in range(16):
        sub = np.int64(seed) * 1000003 + attempt
        topo = gen_topology(int(sub), (cfg.node_min, cfg.node_max),
                            cfg.capacities_bps, cfg.buffer_pkts)
        routes = gen_routing(topo, int(sub) + 1)
        rng = np.random.default_rng(int(sub) + 2)
        n_flows = int(rng.integers(cfg.flows_min, cfg.flows_max + 1))
        cap_of = {l.id: l.capacity_bps for l in topo.links}

        flows = []
        for fid in range(n_flows):
            src, dst = (int(x) for x in
                        rng.choice(topo.node_count, size=2, replace=False))
            path = routes[(src, dst)]
            bottleneck = min(cap_of[lid] for lid in path.link_ids)
            size = float(rng.choice(cfg.packet_size_choices_bits))
            use_cbr = cfg.mix == "CBR+MB" and rng.random() < cfg.cbr_prob
            if use_cbr:
                lo, hi = cfg.cbr_rate_frac
                frac = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
                spec = TrafficSpec(
                    mode="CBR", packet_size_bits=size, rate_bps=frac * bottleneck,
                    duration_s=cfg.duration_s, warmup_s=cfg.warmup_s)
            else:
                ppb = int(rng.integers(cfg.mb_packets_per_burst[0],
                                       cfg.mb_packets_per_burst[1] + 1))
                gap = float(rng.uniform(*cfg.mb_gap_s))
                spec = TrafficSpec(
                    mode="MB", packet_size_bits=size, packets_per_burst=ppb,
                    inter_burst_gap_s=gap,
                    intra_burst_rate_bps=cap_of[path.link_ids[0]],
                    duration_s=cfg.duration_s, warmup_s=cfg.warmup_s)
            flows.append((fid, spec, path))

        result = simulate(topo, flows, seed=int(sub) + 3, prop_s=cfg.prop_s)
        if result.flows:  # retry with a fresh sub-seed if nothing survived
            return Experiment(id=exp_id, topology=topo,
                              flows=tuple(result.flows))
    raise RuntimeError(f"could not generate a non-empty experiment for seed {seed}")


def gen_dataset(cfg: GenConfig, out_dir: str) -> dict:
    """Write cfg.n_experiments experiments plus a manifest; returns manifest."""
    os.makedirs(out_dir, exist_ok=True)
    n_flows = 0
    zero_jitter = 0
    zero_drop = 0
    for i in range(cfg.n_experiments):
        e = gen_experiment(cfg, exp_id=i, seed=cfg.seed * 1_000_000 + i)
        save_experiment(e, out_dir)
        for f in e.flows:
            n_flows += 1
            zero_jitter += f.labels.jitter_s == 0.0
            zero_drop += f.labels.drop_frac == 0.0
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "n_experiments": cfg.n_experiments,
        "n_flows": n_flows,
        "zero_jitter_frac": zero_jitter / max(n_flows, 1),
        "zero_drop_frac": zero_drop / max(n_flows, 1),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
