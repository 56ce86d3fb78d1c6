"""Pure-Python FIFO event loop; semantics identical to the Cython kernel.

Event key is (arrival time, link index, packet id); keys are unique, so
processing order (and therefore every label) is bit-identical between
this fallback and the compiled kernel.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

# packet status codes shared with the compiled kernel
IN_FLIGHT = 0
DELIVERED = 1
DROPPED = 2


def run_fifo(emit_time, pkt_size_bits, path_flat, hops_off, hops_len,
             capacity_bps, prop_s, buffer_pkts, end_time):
    """Simulate store-and-forward FIFO queueing for every packet.

    Packet p traverses link indices path_flat[hops_off[p] : hops_off[p] + hops_len[p]].
    A packet arriving at a link whose queue already holds buffer_pkts
    packets is dropped; events later than end_time are left in flight.
    Returns (status[p], deliver_time[p]).
    """
    n_pkts = len(emit_time)
    n_links = len(capacity_bps)
    status = np.zeros(n_pkts, dtype=np.uint8)
    deliver = np.zeros(n_pkts, dtype=np.float64)

    last_dep = [0.0] * n_links
    queues = [deque() for _ in range(n_links)]  # departure times, FIFO

    heap = [(float(emit_time[p]), int(path_flat[hops_off[p]]), p, 0)
            for p in range(n_pkts)]
    heapq.heapify(heap)

    while heap:
        t, link, p, hop = heapq.heappop(heap)
        q = queues[link]
        while q and q[0] <= t:
            q.popleft()
        if len(q) >= buffer_pkts[link]:
            status[p] = DROPPED
            continue
        start = last_dep[link] if last_dep[link] > t else t
        dep = start + pkt_size_bits[p] / capacity_bps[link]
        last_dep[link] = dep
        q.append(dep)
        arrive_next = dep + prop_s[link]
        if arrive_next > end_time:
            continue  # still in flight when the capture window closes
        if hop + 1 >= hops_len[p]:
            status[p] = DELIVERED
            deliver[p] = arrive_next
        else:
            nxt = int(path_flat[hops_off[p] + hop + 1])
            heapq.heappush(heap, (arrive_next, nxt, p, hop + 1))

    return status, deliver
