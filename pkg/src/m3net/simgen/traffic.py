"""Source traffic models: constant bit rate and multi-burst streams.

Emission timestamps are a pure function of the spec plus a phase offset,
so regenerating a dataset from its manifest seed is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrafficSpec:
    mode: str                      # "CBR" | "MB"
    packet_size_bits: float
    duration_s: float = 10.0
    warmup_s: float = 5.0
    rate_bps: float = 0.0          # CBR only
    packets_per_burst: int = 1     # MB only
    inter_burst_gap_s: float = 0.0  # MB only
    intra_burst_rate_bps: float = 0.0  # MB line rate during a burst

    def __post_init__(self):
        if self.mode not in ("CBR", "MB"):
            raise ValueError(f"unknown traffic mode {self.mode!r}")
        if self.mode == "CBR" and self.rate_bps <= 0:
            raise ValueError("CBR requires rate_bps > 0")
        if self.mode == "MB":
            if self.packets_per_burst < 1:
                raise ValueError("MB requires packets_per_burst >= 1")
            if self.inter_burst_gap_s <= 0:
                raise ValueError("MB requires inter_burst_gap_s > 0")
            if self.intra_burst_rate_bps <= 0:
                raise ValueError("MB requires intra_burst_rate_bps > 0")
        if self.duration_s <= self.warmup_s:
            raise ValueError("duration must exceed warmup")


def emission_times(spec: TrafficSpec, phase: float = 0.0) -> np.ndarray:
    """Packet emission timestamps in [phase, duration)."""
    if spec.mode == "CBR":
        interval = spec.packet_size_bits / spec.rate_bps
        n = max(0, int(np.ceil((spec.duration_s - phase) / interval)))
        t = phase + interval * np.arange(n, dtype=np.float64)
        return t[t < spec.duration_s]
    # MB: bursts of back-to-back packets at the intra-burst line rate
    intra = spec.packet_size_bits / spec.intra_burst_rate_bps
    cycle = spec.inter_burst_gap_s + spec.packets_per_burst * intra
    n_bursts = max(0, int(np.ceil((spec.duration_s - phase) / cycle)))
    starts = phase + cycle * np.arange(n_bursts, dtype=np.float64)
    offs = intra * np.arange(spec.packets_per_burst, dtype=np.float64)
    t = (starts[:, None] + offs[None, :]).ravel()
    return t[t < spec.duration_s]


def measure_flow_features(spec: TrafficSpec, times: np.ndarray) -> dict:
    """Source-side feature measurements over the generated stream."""
    n = len(times)
    gaps = np.diff(times) if n >= 2 else np.zeros(0)
    return {
        "traffic_bps": n * spec.packet_size_bits / spec.duration_s,
        "packets_per_burst": float(spec.packets_per_burst if spec.mode == "MB" else 1),
        "packet_size_bits": float(spec.packet_size_bits),
        "p90_interarrival_s": float(np.percentile(gaps, 90)) if len(gaps) else 0.0,
        "interpkt_mean_s": float(gaps.mean()) if len(gaps) else 0.0,
        "interpkt_var_s2": float(gaps.var()) if len(gaps) else 0.0,
    }
