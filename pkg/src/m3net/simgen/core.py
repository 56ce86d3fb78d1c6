"""Packet-level simulation driver: kernel selection, labels, conservation.

The hot per-packet loop lives in a Cython extension when available and
in a pure-Python fallback otherwise (set M3NET_SIM_KERNEL=py to force
the fallback). Both produce bit-identical results.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..netgraph import FlowRecord, Labels, Path, Topology
from . import _fifo_py
from .traffic import TrafficSpec, emission_times, measure_flow_features

try:
    from . import _fifo_kernel
except ImportError:
    _fifo_kernel = None

DELIVERED = _fifo_py.DELIVERED
DROPPED = _fifo_py.DROPPED


def active_kernel(impl: str = "auto"):
    """Resolve the FIFO kernel implementation ('auto' | 'c' | 'py')."""
    if impl == "auto":
        impl = os.environ.get("M3NET_SIM_KERNEL", "auto")
    if impl == "py":
        return _fifo_py, "py"
    if impl == "c":
        if _fifo_kernel is None:
            raise RuntimeError("compiled FIFO kernel not available")
        return _fifo_kernel, "c"
    if _fifo_kernel is not None:
        return _fifo_kernel, "c"
    return _fifo_py, "py"


@dataclass
class SimResult:
    flows: list[FlowRecord]          # flows with >= 1 delivered post-warmup packet
    excluded_flow_ids: list[int]     # flagged: nothing delivered post-warmup
    generated: np.ndarray            # per flow, post-warmup packet counts
    delivered: np.ndarray
    dropped: np.ndarray
    in_flight: np.ndarray


# std below this is float rounding of physically identical delays, not
# real jitter (queueing jitter is >= microseconds at these capacities)
JITTER_SNAP_S = 1e-12


def _stable_mean_std(delays: np.ndarray) -> tuple[float, float]:
    if delays.min() == delays.max():
        return float(delays[0]), 0.0
    std = float(delays.std())
    return float(delays.mean()), 0.0 if std < JITTER_SNAP_S else std


def simulate(
    topology: Topology,
    flows: list[tuple[int, TrafficSpec, Path]],
    seed: int,
    prop_s: float = 10e-6,
    impl: str = "auto",
) -> SimResult:
    """Run the FIFO testbed for one experiment and label every flow.

    flows: (flow_id, traffic spec, routed path) triples; all specs must
    share duration and warmup. Emission phases are drawn from seed.
    """
    if not flows:
        raise ValueError("no flows to simulate")
    duration = flows[0][1].duration_s
    warmup = flows[0][1].warmup_s
    for _, spec, _ in flows:
        if spec.duration_s != duration or spec.warmup_s != warmup:
            raise ValueError("flows must share duration and warmup")

    rng = np.random.default_rng(seed)
    link_index = topology.link_index()
    n_links = len(topology.links)
    capacity = np.array([l.capacity_bps for l in topology.links], dtype=np.float64)
    buffer = np.array([l.buffer_pkts for l in topology.links], dtype=np.int64)
    prop = np.full(n_links, prop_s, dtype=np.float64)

    # per-flow emission streams
    emissions: list[np.ndarray] = []
    specs: list[TrafficSpec] = []
    hop_lists: list[np.ndarray] = []
    for _, spec, path in flows:
        if spec.mode == "CBR":
            phase = float(rng.uniform(0.0, spec.packet_size_bits / spec.rate_bps))
        else:
            phase = float(rng.uniform(0.0, spec.inter_burst_gap_s))
        emissions.append(emission_times(spec, phase))
        specs.append(spec)
        hop_lists.append(np.array([link_index[lid] for lid in path.link_ids],
                                  dtype=np.int64))

    # global packet arrays, ordered by (emission time, flow order, seq)
    counts = np.array([len(t) for t in emissions], dtype=np.int64)
    flow_of = np.repeat(np.arange(len(flows), dtype=np.int64), counts)
    emit = np.concatenate(emissions) if counts.sum() else np.zeros(0)
    order = np.lexsort((np.arange(len(emit)), flow_of, emit))
    emit = np.ascontiguousarray(emit[order])
    flow_of = np.ascontiguousarray(flow_of[order])
    sizes = np.array([s.packet_size_bits for s in specs], dtype=np.float64)[flow_of]

    hops_off_flow = np.zeros(len(flows), dtype=np.int64)
    lens = np.array([len(h) for h in hop_lists], dtype=np.int64)
    hops_off_flow[1:] = np.cumsum(lens)[:-1]
    path_flat = (np.concatenate(hop_lists) if len(hop_lists)
                 else np.zeros(0, dtype=np.int64))
    hops_off = hops_off_flow[flow_of]
    hops_len = lens[flow_of]

    kernel, _ = active_kernel(impl)
    status, deliver = kernel.run_fifo(
        emit, sizes, path_flat, hops_off, hops_len, capacity, prop, buffer,
        float(duration))
    status = np.asarray(status)
    deliver = np.asarray(deliver)

    post = emit >= warmup
    out_flows: list[FlowRecord] = []
    excluded: list[int] = []
    n_f = len(flows)
    gen_c = np.zeros(n_f, dtype=np.int64)
    del_c = np.zeros(n_f, dtype=np.int64)
    drop_c = np.zeros(n_f, dtype=np.int64)
    for fi, (flow_id, spec, path) in enumerate(flows):
        mine = flow_of == fi
        mine_post = mine & post
        gen_c[fi] = int(mine_post.sum())
        ok = mine_post & (status == DELIVERED)
        del_c[fi] = int(ok.sum())
        drop_c[fi] = int((mine_post & (status == DROPPED)).sum())
        if del_c[fi] == 0:
            excluded.append(flow_id)
            continue
        delays = deliver[ok] - emit[ok]
        mean_d, jitter = _stable_mean_std(delays)
        drop_frac = drop_c[fi] / gen_c[fi] if gen_c[fi] else 0.0
        feats = measure_flow_features(spec, emit[mine])
        out_flows.append(FlowRecord(
            id=flow_id, path=Path(flow_id, path.link_ids),
            labels=Labels(mean_d, jitter, float(drop_frac)), **feats))

    return SimResult(
        flows=out_flows, excluded_flow_ids=excluded,
        generated=gen_c, delivered=del_c, dropped=drop_c,
        in_flight=gen_c - del_c - drop_c)
