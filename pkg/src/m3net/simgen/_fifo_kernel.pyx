# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled FIFO event loop.

Same event ordering, arithmetic, and status codes as _fifo_py.run_fifo;
the two are interchangeable and bit-identical. Selected at import by
m3net.simgen.core.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF IN_FLIGHT = 0
DEF DELIVERED = 1
DEF DROPPED = 2


cdef inline bint _lt(double t1, long l1, long p1,
                     double t2, long l2, long p2) nogil:
    if t1 != t2:
        return t1 < t2
    if l1 != l2:
        return l1 < l2
    return p1 < p2


def run_fifo(cnp.ndarray[cnp.float64_t, ndim=1] emit_time,
             cnp.ndarray[cnp.float64_t, ndim=1] pkt_size_bits,
             cnp.ndarray[cnp.int64_t, ndim=1] path_flat,
             cnp.ndarray[cnp.int64_t, ndim=1] hops_off,
             cnp.ndarray[cnp.int64_t, ndim=1] hops_len,
             cnp.ndarray[cnp.float64_t, ndim=1] capacity_bps,
             cnp.ndarray[cnp.float64_t, ndim=1] prop_s,
             cnp.ndarray[cnp.int64_t, ndim=1] buffer_pkts,
             double end_time):
    cdef long n_pkts = emit_time.shape[0]
    cdef long n_links = capacity_bps.shape[0]

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] status = np.zeros(n_pkts, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] deliver = np.zeros(n_pkts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] last_dep = np.zeros(n_links, dtype=np.float64)

    # per-link FIFO ring buffers of pending departure times
    cdef cnp.ndarray[cnp.int64_t, ndim=1] qoff = np.zeros(n_links + 1, dtype=np.int64)
    cdef long l
    for l in range(n_links):
        qoff[l + 1] = qoff[l] + buffer_pkts[l] + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qbuf = np.zeros(qoff[n_links], dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] qhead = np.zeros(n_links, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] qtail = np.zeros(n_links, dtype=np.int64)

    # binary min-heap keyed by (time, link, packet id); one pending event
    # per packet at most, so capacity n_pkts suffices
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ht = np.empty(n_pkts + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hl = np.empty(n_pkts + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hp = np.empty(n_pkts + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hh = np.empty(n_pkts + 1, dtype=np.int64)
    cdef long heap_size = 0

    cdef long p, i, parent, child, right, hop, nxt, cap_q, qlen
    cdef double t, tt, start, dep, arrive_next
    cdef long ll, pp, hhop

    # seed the heap with every packet's first-hop arrival
    for p in range(n_pkts):
        ht[heap_size] = emit_time[p]
        hl[heap_size] = path_flat[hops_off[p]]
        hp[heap_size] = p
        hh[heap_size] = 0
        heap_size += 1
        i = heap_size - 1
        while i > 0:
            parent = (i - 1) >> 1
            if _lt(ht[i], hl[i], hp[i], ht[parent], hl[parent], hp[parent]):
                ht[i], ht[parent] = ht[parent], ht[i]
                hl[i], hl[parent] = hl[parent], hl[i]
                hp[i], hp[parent] = hp[parent], hp[i]
                hh[i], hh[parent] = hh[parent], hh[i]
                i = parent
            else:
                break

    while heap_size > 0:
        t = ht[0]; l = hl[0]; p = hp[0]; hop = hh[0]
        # pop root
        heap_size -= 1
        ht[0] = ht[heap_size]; hl[0] = hl[heap_size]
        hp[0] = hp[heap_size]; hh[0] = hh[heap_size]
        i = 0
        while True:
            child = 2 * i + 1
            if child >= heap_size:
                break
            right = child + 1
            if right < heap_size and _lt(ht[right], hl[right], hp[right],
                                         ht[child], hl[child], hp[child]):
                child = right
            if _lt(ht[child], hl[child], hp[child], ht[i], hl[i], hp[i]):
                ht[i], ht[child] = ht[child], ht[i]
                hl[i], hl[child] = hl[child], hl[i]
                hp[i], hp[child] = hp[child], hp[i]
                hh[i], hh[child] = hh[child], hh[i]
                i = child
            else:
                break

        # drain packets that already departed this link
        cap_q = qoff[l + 1] - qoff[l]
        while qhead[l] != qtail[l] and qbuf[qoff[l] + qhead[l]] <= t:
            qhead[l] = (qhead[l] + 1) % cap_q
        qlen = (qtail[l] - qhead[l] + cap_q) % cap_q
        if qlen >= buffer_pkts[l]:
            status[p] = DROPPED
            continue
        start = last_dep[l] if last_dep[l] > t else t
        dep = start + pkt_size_bits[p] / capacity_bps[l]
        last_dep[l] = dep
        qbuf[qoff[l] + qtail[l]] = dep
        qtail[l] = (qtail[l] + 1) % cap_q
        arrive_next = dep + prop_s[l]
        if arrive_next > end_time:
            continue
        if hop + 1 >= hops_len[p]:
            status[p] = DELIVERED
            deliver[p] = arrive_next
        else:
            nxt = path_flat[hops_off[p] + hop + 1]
            # push
            ht[heap_size] = arrive_next; hl[heap_size] = nxt
            hp[heap_size] = p; hh[heap_size] = hop + 1
            heap_size += 1
            i = heap_size - 1
            while i > 0:
                parent = (i - 1) >> 1
                if _lt(ht[i], hl[i], hp[i], ht[parent], hl[parent], hp[parent]):
                    ht[i], ht[parent] = ht[parent], ht[i]
                    hl[i], hl[parent] = hl[parent], hl[i]
                    hp[i], hp[parent] = hp[parent], hp[i]
                    hh[i], hh[parent] = hh[parent], hh[i]
                    i = parent
                else:
                    break

    return status, deliver
