"""Independent brute-force replay of the FIFO network, for cross-checks.

Deliberately naive: a sorted event list instead of a heap, and queue
occupancy recomputed by scanning all accepted departure times. Shares no
code with the production kernels beyond the public semantics (same
tie-break key, same store-and-forward timing rules).
"""

from __future__ import annotations

import bisect

import numpy as np


def replay(emit_time, pkt_size_bits, path_flat, hops_off, hops_len,
           capacity_bps, prop_s, buffer_pkts, end_time):
    """Return (status, deliver_time) arrays matching the kernel contract."""
    n_pkts = len(emit_time)
    status = np.zeros(n_pkts, dtype=np.uint8)
    deliver = np.zeros(n_pkts, dtype=np.float64)

    accepted: dict[int, list[float]] = {l: [] for l in range(len(capacity_bps))}

    events: list[tuple[float, int, int, int]] = sorted(
        (float(emit_time[p]), int(path_flat[hops_off[p]]), p, 0)
        for p in range(n_pkts))

    while events:
        t, link, p, hop = events.pop(0)
        # occupancy by brute-force count of not-yet-departed packets
        occupancy = sum(1 for dep in accepted[link] if dep > t)
        if occupancy >= buffer_pkts[link]:
            status[p] = 2
            continue
        busy_until = max(accepted[link]) if accepted[link] else 0.0
        dep = max(t, busy_until) + pkt_size_bits[p] / capacity_bps[link]
        accepted[link].append(dep)
        arrive = dep + prop_s[link]
        if arrive > end_time:
            continue
        if hop + 1 >= hops_len[p]:
            status[p] = 1
            deliver[p] = arrive
        else:
            nxt = int(path_flat[hops_off[p] + hop + 1])
            bisect.insort(events, (arrive, nxt, p, hop + 1))

    return status, deliver
