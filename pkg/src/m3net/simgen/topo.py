"""Random connected topologies and seeded shortest-path routing.

Topologies mirror the desk-scale testbed regime: 5-8 devices, physical
(undirected) node degree capped at 5, capacities from a small menu.
Each physical cable is materialized as two directed Link records so a
path's links are direction-consistent (dst of hop i == src of hop i+1).
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..netgraph import Link, Path, Topology

DEFAULT_CAPACITIES_BPS = (10e6, 25e6, 40e6, 100e6)


def gen_topology(
    seed: int,
    node_range: tuple[int, int] = (5, 8),
    capacities_bps: tuple[float, ...] = DEFAULT_CAPACITIES_BPS,
    buffer_pkts: int = 64,
    max_degree: int = 5,
    extra_edge_frac: float = 0.5,
) -> Topology:
    lo, hi = node_range
    if not 2 <= lo <= hi <= 8:
        raise ValueError(f"node range {node_range} outside [2, 8]")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(lo, hi + 1))

    degree = [0] * n
    edges: set[tuple[int, int]] = set()

    def add_edge(u, v):
        edges.add((min(u, v), max(u, v)))
        degree[u] += 1
        degree[v] += 1

    # random spanning tree, then extra edges while the degree cap allows
    for v in range(1, n):
        candidates = [u for u in range(v) if degree[u] < max_degree]
        if not candidates:
            raise ValueError("degree cap makes a connected topology infeasible")
        add_edge(int(rng.choice(candidates)), v)

    n_extra = int(round(extra_edge_frac * n))
    for _ in range(n_extra * 4):
        if n_extra == 0:
            break
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        key = (min(u, v), max(u, v))
        if key in edges or degree[u] >= max_degree or degree[v] >= max_degree:
            continue
        add_edge(u, v)
        n_extra -= 1

    links: list[Link] = []
    for u, v in sorted(edges):
        cap = float(rng.choice(capacities_bps))
        links.append(Link(len(links), u, v, cap, buffer_pkts))
        links.append(Link(len(links), v, u, cap, buffer_pkts))
    return Topology(node_count=n, links=tuple(links))


def undirected_degree(t: Topology, n: int) -> int:
    """Distinct physical neighbors of node n."""
    return len({l.dst for l in t.links if l.src == n} | {l.src for l in t.links if l.dst == n})


def gen_routing(t: Topology, seed: int) -> dict[tuple[int, int], Path]:
    """Shortest-path routes for every ordered (src, dst) pair.

    Ties between equal-length paths are broken by a seeded shuffle of the
    neighbor visit order, one shuffle per source node.
    """
    rng = np.random.default_rng(seed)
    by_pair = {(l.src, l.dst): l.id for l in t.links}
    adj: list[list[int]] = [[] for _ in range(t.node_count)]
    for l in t.links:
        adj[l.src].append(l.dst)

    routes: dict[tuple[int, int], Path] = {}
    for src in range(t.node_count):
        order = {v: list(rng.permutation(len(adj[v]))) for v in range(t.node_count)}
        parent: dict[int, int] = {src: -1}
        q = deque([src])
        while q:
            u = q.popleft()
            for j in order[u]:
                v = adj[u][j]
                if v not in parent:
                    parent[v] = u
                    q.append(v)
        for dst in range(t.node_count):
            if dst == src or dst not in parent:
                continue
            nodes = [dst]
            while nodes[-1] != src:
                nodes.append(parent[nodes[-1]])
            nodes.reverse()
            link_ids = tuple(by_pair[(a, b)] for a, b in zip(nodes, nodes[1:]))
            routes[(src, dst)] = Path(flow_id=-1, link_ids=link_ids)
    return routes
