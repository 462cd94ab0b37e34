"""Loop-free path enumeration with a fixed, portable ordering.

Paths come out ordered by hop count, then by switch-id sequence. The search is
best-first over partial paths keyed by ``(hops so far + BFS distance to the
target, prefix)``; the distance ignores the no-revisit rule so it never
overestimates, and every prefix of a path sorts before any complete path that
follows it, which yields the stated order.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Callable, Iterator, Sequence

from greensdn.model import Topology

INF = float("inf")


def hop_distances(adjacency: Sequence[Sequence[int]], target: int,
                  allowed: Callable[[int], bool] | None = None) -> list[float]:
    dist = [INF] * len(adjacency)
    if allowed is not None and not allowed(target):
        return dist
    dist[target] = 0
    queue = deque([target])
    while queue:
        u = queue.popleft()
        for w in adjacency[u]:
            if dist[w] == INF and (allowed is None or allowed(w)):
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def iter_simple_paths(t: Topology, source: int, target: int,
                      allowed_switch: Callable[[int], bool] | None = None,
                      allowed_hop: Callable[[int, int], bool] | None = None,
                      ) -> Iterator[tuple[int, ...]]:
    """Yield every simple ``source``-``target`` path in (hops, sequence) order.

    ``allowed_switch`` / ``allowed_hop`` restrict the graph searched.
    """
    adj = t.adjacency
    if allowed_hop is not None:
        adj = [tuple(w for w in nbrs if allowed_hop(u, w)) for u, nbrs in enumerate(adj)]
    dist = hop_distances(adj, target, allowed_switch)
    if dist[source] == INF:
        return
    heap = [(dist[source], (source,))]
    while heap:
        _, path = heapq.heappop(heap)
        u = path[-1]
        if u == target:
            yield path
            continue
        g = len(path)
        for w in adj[u]:
            if dist[w] == INF or w in path:
                continue
            heapq.heappush(heap, (g + dist[w], path + (w,)))


def k_shortest_paths(t: Topology, source: int, target: int, k: int,
                     **restrict) -> tuple[list[tuple[int, ...]], bool]:
    """First ``k`` paths of :func:`iter_simple_paths`.

    The flag is True when these are *all* simple paths between the two switches.
    """
    out = []
    for p in iter_simple_paths(t, source, target, **restrict):
        if len(out) == k:
            return out, False
        out.append(p)
    return out, True


def shortest_path(t: Topology, source: int, target: int, **restrict) -> tuple[int, ...] | None:
    for p in iter_simple_paths(t, source, target, **restrict):
        return p
    return None


def cheapest_residual_cost(t: Topology, source: int, target: int,
                           node_cost: Sequence[float], edge_cost: Sequence[float]) -> float:
    """Least total of node and edge costs over any source-target path (Dijkstra).

    Both endpoints' node costs are included. Costs must be non-negative.
    """
    n = len(t.switches)
    best = [INF] * n
    best[source] = node_cost[source]
    heap = [(best[source], source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > best[u]:
            continue
        if u == target:
            return d
        for w in t.adjacency[u]:
            nd = d + edge_cost[t.edge_between(u, w)] + node_cost[w]
            if nd < best[w]:
                best[w] = nd
                heapq.heappush(heap, (nd, w))
    return INF


STEINER_MAX_WORK = 2_000_000


def steiner_forest_cost(t: Topology, pairs: Sequence[tuple[int, int]],
                        node_cost: Sequence[float], edge_cost: Sequence[float]) -> float | None:
    """Cheapest subgraph (node plus edge costs) joining both ends of every pair.

    Exact node-weighted Steiner trees over every terminal subset by the
    Dreyfus-Wagner recursion, then the best grouping of the pairs' connected
    components into trees. Returns ``None`` when the terminal set is too large
    for the subset recursion to be cheap.
    """
    terminals = sorted({s for p in pairs for s in p})
    if not terminals:
        return 0.0
    n, m = t.n_switches, len(terminals)
    if n * 3 ** m > STEINER_MAX_WORK:
        return None
    pos = {s: i for i, s in enumerate(terminals)}
    full = (1 << m) - 1
    dp = [None] * (full + 1)

    def relax(row):
        heap = [(d, v) for v, d in enumerate(row) if d < INF]
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if d > row[u]:
                continue
            for w in t.adjacency[u]:
                nd = d + edge_cost[t.edge_between(u, w)] + node_cost[w]
                if nd < row[w]:
                    row[w] = nd
                    heapq.heappush(heap, (nd, w))
        return row

    for mask in range(1, full + 1):
        row = [INF] * n
        if mask & (mask - 1) == 0:
            s = terminals[mask.bit_length() - 1]
            row[s] = node_cost[s]
        else:
            low = mask & -mask
            sub = (mask - 1) & mask
            while sub:
                if sub & low:
                    a, b = dp[sub], dp[mask ^ sub]
                    for v in range(n):
                        c = a[v] + b[v] - node_cost[v]
                        if c < row[v]:
                            row[v] = c
                sub = (sub - 1) & mask
        dp[mask] = relax(row)
    tree = [0.0] + [min(dp[mask]) for mask in range(1, full + 1)]

    # components of the demand graph; a forest may still merge several of them
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        parent[find(pos[a])] = find(pos[b])
    comps = {}
    for i in range(m):
        comps[find(i)] = comps.get(find(i), 0) | (1 << i)
    comp_masks = list(comps.values())
    k = len(comp_masks)
    forest = [0.0] * (1 << k)
    for cs in range(1, 1 << k):
        union = 0
        for j in range(k):
            if cs >> j & 1:
                union |= comp_masks[j]
        best = tree[union]
        low = cs & -cs
        sub = (cs - 1) & cs
        while sub:
            if sub & low:
                best = min(best, forest[sub] + forest[cs ^ sub])
            sub = (sub - 1) & cs
        forest[cs] = best
    return forest[(1 << k) - 1]
