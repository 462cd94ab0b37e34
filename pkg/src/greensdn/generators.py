"""Instance generators. All randomness goes through :class:`greensdn.rng.SplitMix64`.

Fat-tree switch numbering for ``k`` pods: core switches first
(``0 .. k*k/4 - 1``), then aggregation switches pod by pod, then edge switches
pod by pod. Core switch ``c`` links to aggregation position ``c // (k/2)`` of
every pod; every edge switch links to every aggregation switch of its pod and
hosts ``k/2`` hosts named ``h0, h1, ...`` in switch order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from greensdn.model import EdgeSpec, Flow, SwitchSpec, Topology
from greensdn.placement import PlacementInstance
from greensdn.rng import SplitMix64

FAT_TREE = "fat-tree"
RING = "ring"
FULL_MESH = "full-mesh"


class Locality(str, enum.Enum):
    INTRA_POD = "intra-pod"
    CROSS_POD = "cross-pod"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    size: int  # k for fat-tree, n otherwise
    switch_watts: float = 1.0
    link_watts: float = 1.0
    bandwidth: float = 1.0e9
    rule_capacity: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind == FAT_TREE:
            if self.size < 2 or self.size % 2:
                raise ValueError(f"fat-tree k must be even and >= 2, got {self.size}")
        elif self.kind in (RING, FULL_MESH):
            if self.size < 3:
                raise ValueError(f"{self.kind} needs at least 3 switches, got {self.size}")
        else:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if min(self.switch_watts, self.link_watts, self.bandwidth) <= 0 or self.rule_capacity < 1:
            raise ValueError("generator defaults must be positive")

    @classmethod
    def parse(cls, text: str, **defaults) -> "GeneratorSpec":
        """``"fat-tree:4"``, ``"ring:6"`` or ``"full-mesh:5"``."""
        kind, _, size = text.partition(":")
        kind = {"fattree": FAT_TREE, "mesh": FULL_MESH, "fullmesh": FULL_MESH}.get(kind, kind)
        if not size.isdigit():
            raise ValueError(f"expected KIND:SIZE, got {text!r}")
        return cls(kind, int(size), **defaults)


def _fat_tree(spec: GeneratorSpec) -> Topology:
    k = spec.size
    half = k // 2
    n_core = half * half
    switches, edges = [], []

    def sw(pod, layer):
        switches.append(SwitchSpec(len(switches), spec.switch_watts, spec.rule_capacity, pod, layer))
        return switches[-1].id

    core = [sw(None, "core") for _ in range(n_core)]
    aggs = [[sw(p, "aggregation") for _ in range(half)] for p in range(k)]
    edge_sw = [[sw(p, "edge") for _ in range(half)] for p in range(k)]

    def link(a, b):
        edges.append(EdgeSpec(min(a, b), max(a, b), spec.bandwidth, spec.link_watts))

    for c in core:
        for p in range(k):
            link(c, aggs[p][c // half])
    for p in range(k):
        for e in edge_sw[p]:
            for a in aggs[p]:
                link(e, a)
    hosts = {}
    for p in range(k):
        for e in edge_sw[p]:
            for _ in range(half):
                hosts[f"h{len(hosts)}"] = e
    edges.sort(key=lambda x: (x.u, x.v))
    return Topology(tuple(switches), tuple(edges), hosts, hosts)


def generate_topology(spec: GeneratorSpec) -> Topology:
    if spec.kind == FAT_TREE:
        return _fat_tree(spec)
    n = spec.size
    switches = tuple(SwitchSpec(i, spec.switch_watts, spec.rule_capacity) for i in range(n))
    if spec.kind == RING:
        pairs = sorted((min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n))
    else:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = tuple(EdgeSpec(a, b, spec.bandwidth, spec.link_watts) for a, b in pairs)
    hosts = {f"h{i}": i for i in range(n)}
    return Topology(switches, edges, hosts, hosts)


def generate_flows(t: Topology, count: int, rate_fraction: float,
                   locality: Locality = Locality.UNIFORM, seed: int = 0) -> list[Flow]:
    """``count`` host-to-host flows, each at ``rate_fraction`` of the narrowest link.

    Hosts are not reused while unused ones remain: the source is drawn among
    unused ingress hosts that still have an admissible unused egress host,
    then the destination among those. When no such pair is left the pool of
    hosts starts over.
    """
    locality = Locality(locality)
    if not 0 < rate_fraction <= 1:
        raise ValueError(f"rate_fraction must be in (0, 1], got {rate_fraction}")
    if count < 0:
        raise ValueError("count must be >= 0")
    if locality != Locality.UNIFORM and not t.is_fat_tree:
        raise ValueError(f"{locality.value} locality needs a fat-tree topology")
    if count == 0:
        return []
    if not t.ingress_hosts or not t.egress_hosts or not t.edges:
        raise ValueError("topology has no hosts or links to draw flows from")
    rate = rate_fraction * min(e.bandwidth for e in t.edges)
    pod = [s.pod for s in t.switches]

    def admissible(a, b):
        if a == b:
            return False
        if locality == Locality.INTRA_POD:
            return pod[a] is not None and pod[a] == pod[b]
        if locality == Locality.CROSS_POD:
            return pod[a] is not None and pod[b] is not None and pod[a] != pod[b]
        return True

    ingress = sorted(t.ingress_hosts.items())
    egress = sorted(t.egress_hosts.items())
    rng = SplitMix64(seed)
    used: set[str] = set()
    flows = []
    for i in range(count):
        for pool_used in (used, set()):
            options = []
            for host, a in ingress:
                if host in pool_used:
                    continue
                dests = [(h, b) for h, b in egress
                         if h != host and h not in pool_used and admissible(a, b)]
                if dests:
                    options.append((host, a, dests))
            if options:
                break
            used = set()
        if not options:
            raise ValueError(f"no host pair satisfies {locality.value} locality")
        host, src, dests = rng.choice(options)
        dhost, dst = rng.choice(dests)
        used.update((host, dhost))
        flows.append(Flow(i, src, dst, rate))
    return flows


def random_topology(n: int, seed: int, extra_edge_prob: float = 0.4,
                    switch_watts: tuple[float, float] = (1.0, 4.0),
                    link_watts: tuple[float, float] = (0.5, 2.0),
                    bandwidth: tuple[float, float] = (5.0, 15.0),
                    rule_capacity: tuple[int, int] = (1, 4),
                    integral: bool = True) -> Topology:
    """Connected random topology with one host per switch.

    A random spanning tree (switch ``i`` joins an earlier switch) plus every
    other pair with probability ``extra_edge_prob``. With ``integral`` the
    power costs and bandwidths are whole numbers, which makes ties common.
    """
    if n < 2:
        raise ValueError("need at least two switches")
    rng = SplitMix64(seed)

    def draw(lo, hi):
        if integral:
            return float(int(lo) + rng.below(int(hi) - int(lo) + 1))
        return rng.between(lo, hi)

    switches = tuple(SwitchSpec(i, draw(*switch_watts),
                                rule_capacity[0] + rng.below(rule_capacity[1] - rule_capacity[0] + 1))
                     for i in range(n))
    pairs = set()
    for i in range(1, n):
        pairs.add((rng.below(i), i))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.uniform() < extra_edge_prob:
                pairs.add((i, j))
    edges = tuple(EdgeSpec(a, b, draw(*bandwidth), draw(*link_watts)) for a, b in sorted(pairs))
    hosts = {f"h{i}": i for i in range(n)}
    return Topology(switches, edges, hosts, hosts)


def random_flows(t: Topology, count: int, seed: int,
                 rate: tuple[float, float] = (1.0, 6.0), integral: bool = True) -> list[Flow]:
    rng = SplitMix64(seed)
    flows = []
    for i in range(count):
        a, b = rng.sample_pair(t.n_switches)
        if integral:
            r = float(int(rate[0]) + rng.below(int(rate[1]) - int(rate[0]) + 1))
        else:
            r = rng.between(*rate)
        flows.append(Flow(i, a, b, r))
    return flows


def random_placement_instance(n_pms: int, n_vms: int, seed: int,
                              resources: Sequence[str] = ("cpu", "memory"),
                              capacity: tuple[float, float] = (4.0, 8.0),
                              demand: tuple[float, float] = (1.0, 4.0),
                              traffic_prob: float = 0.4,
                              max_hops: int = 5) -> PlacementInstance:
    """Random instance with integral capacities, demands, traffic and hop counts."""
    rng = SplitMix64(seed)

    def whole(lo, hi):
        return float(int(lo) + rng.below(int(hi) - int(lo) + 1))

    pms = [[whole(*capacity) for _ in resources] for _ in range(n_pms)]
    vms = [[whole(*demand) for _ in resources] for _ in range(n_vms)]
    traffic = [[0.0] * n_vms for _ in range(n_vms)]
    for u in range(n_vms):
        for v in range(n_vms):
            if u != v and rng.uniform() < traffic_prob:
                traffic[u][v] = whole(1, 10)
    hops = [[0.0] * n_pms for _ in range(n_pms)]
    for i in range(n_pms):
        for j in range(i + 1, n_pms):
            hops[i][j] = hops[j][i] = whole(1, max_hops)
    return PlacementInstance(pms, vms, tuple(resources), traffic, hops)
