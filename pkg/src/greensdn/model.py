"""Shared network model: topology, flows, routings, on/off state.

Links are undirected with a single bandwidth budget shared by both traversal
directions. A flow follows one simple path (unsplittable), stored as the
sequence of switch ids it visits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from greensdn.errors import ConstraintViolationError

CAPACITY_RTOL = 1e-9


def within_capacity(load: float, capacity: float) -> bool:
    return load <= capacity * (1.0 + CAPACITY_RTOL)


class ObjectiveMode(str, enum.Enum):
    """How link power enters the traffic objective.

    ``PER_FLOW_LINK`` charges a link's power once for every flow crossing it,
    ``PER_ACTIVE_LINK`` once per active link.
    """

    PER_FLOW_LINK = "per-flow-link"
    PER_ACTIVE_LINK = "per-active-link"


@dataclass(frozen=True)
class SwitchSpec:
    id: int
    power_cost: float = 1.0
    rule_capacity: int = 1000
    # fat-tree metadata, None on other topologies
    pod: int | None = None
    layer: str | None = None


@dataclass(frozen=True)
class EdgeSpec:
    u: int
    v: int
    bandwidth: float = 1.0
    power_cost: float = 1.0

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u <= self.v else (self.v, self.u)


@dataclass(frozen=True)
class Topology:
    switches: tuple[SwitchSpec, ...]
    edges: tuple[EdgeSpec, ...]
    ingress_hosts: Mapping[str, int] = field(default_factory=dict)
    egress_hosts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "switches", tuple(self.switches))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "ingress_hosts", dict(sorted(self.ingress_hosts.items())))
        object.__setattr__(self, "egress_hosts", dict(sorted(self.egress_hosts.items())))

    def __hash__(self):
        return hash((self.switches, self.edges, tuple(self.ingress_hosts.items()),
                     tuple(self.egress_hosts.items())))

    @property
    def n_switches(self) -> int:
        return len(self.switches)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        index = {}
        for i, e in enumerate(self.edges):
            index.setdefault(e.key, i)
        return index

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Sorted neighbour ids per switch (valid topologies only)."""
        nbrs: list[set[int]] = [set() for _ in self.switches]
        for e in self.edges:
            if 0 <= e.u < len(nbrs) and 0 <= e.v < len(nbrs) and e.u != e.v:
                nbrs[e.u].add(e.v)
                nbrs[e.v].add(e.u)
        return tuple(tuple(sorted(n)) for n in nbrs)

    def edge_between(self, a: int, b: int) -> int | None:
        return self.edge_index.get((a, b) if a <= b else (b, a))

    @property
    def is_fat_tree(self) -> bool:
        return bool(self.switches) and all(s.layer is not None for s in self.switches)


@dataclass(frozen=True)
class Flow:
    id: int
    source: int
    destination: int
    rate: float

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError(f"flow {self.id}: source equals destination ({self.source})")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"flow {self.id}: rate must be positive and finite, got {self.rate}")


@dataclass(frozen=True)
class FlowRouting:
    """flow id -> switch sequence from source to destination."""

    paths: Mapping[int, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(self, "paths",
                           {fid: tuple(p) for fid, p in sorted(self.paths.items())})

    def __hash__(self):
        return hash(tuple(self.paths.items()))

    def edges_of(self, t: Topology, flow_id: int) -> list[int]:
        """Edge indices along the flow's path; ``KeyError`` for a missing hop."""
        path = self.paths[flow_id]
        out = []
        for a, b in zip(path, path[1:]):
            e = t.edge_between(a, b)
            if e is None:
                raise KeyError((a, b))
            out.append(e)
        return out


@dataclass(frozen=True)
class NetworkState:
    switch_on: tuple[bool, ...]
    link_active: tuple[bool, ...]
    link_used: tuple[bool, ...]

    def active_switches(self) -> list[int]:
        return [i for i, on in enumerate(self.switch_on) if on]

    def active_links(self) -> list[int]:
        return [e for e, on in enumerate(self.link_active) if on]


@dataclass(frozen=True)
class Violation:
    """One broken constraint. ``code`` is e.g. ``"link-capacity"`` or ``"duplicate-edge"``."""

    code: str
    element: str
    detail: str

    def __str__(self):
        return f"[{self.code}] {self.element}: {self.detail}"


def validate_topology(t: Topology) -> list[Violation]:
    out = []
    n = len(t.switches)
    for pos, s in enumerate(t.switches):
        if s.id != pos:
            out.append(Violation("switch-id", f"switch {s.id}",
                                 f"ids must be dense 0..{n - 1}; found {s.id} at position {pos}"))
        if not (math.isfinite(s.power_cost) and s.power_cost >= 0):
            out.append(Violation("switch-power", f"switch {s.id}",
                                 f"power cost must be finite and >= 0, got {s.power_cost}"))
        if s.rule_capacity < 1:
            out.append(Violation("rule-capacity", f"switch {s.id}",
                                 f"rule capacity must be >= 1, got {s.rule_capacity}"))
    seen: dict[tuple[int, int], int] = {}
    for i, e in enumerate(t.edges):
        name = f"edge {i} ({e.u}-{e.v})"
        dangling = [x for x in (e.u, e.v) if not 0 <= x < n]
        for x in dangling:
            out.append(Violation("dangling-edge", name, f"references missing switch {x}"))
        if e.u == e.v:
            out.append(Violation("self-loop", name, "edge joins a switch to itself"))
        if e.key in seen:
            out.append(Violation("duplicate-edge", name, f"duplicates edge {seen[e.key]}"))
        else:
            seen[e.key] = i
        if not (e.bandwidth > 0 and math.isfinite(e.bandwidth)):
            out.append(Violation("edge-bandwidth", name, f"bandwidth must be > 0, got {e.bandwidth}"))
        if not (math.isfinite(e.power_cost) and e.power_cost >= 0):
            out.append(Violation("edge-power", name,
                                 f"power cost must be finite and >= 0, got {e.power_cost}"))
    for kind, hosts in (("ingress", t.ingress_hosts), ("egress", t.egress_hosts)):
        for host, sw in hosts.items():
            if not 0 <= sw < n:
                out.append(Violation("dangling-host", f"{kind} host {host}",
                                     f"attached to missing switch {sw}"))
    return out


def check_path(t: Topology, flow: Flow, path: Sequence[int] | None) -> list[Violation]:
    """Path-shape checks shared by the traffic and rule models."""
    name = f"flow {flow.id}"
    if not path:
        return [Violation("path-endpoints", name, "flow is not routed")]
    out = []
    if path[0] != flow.source or path[-1] != flow.destination:
        out.append(Violation("path-endpoints", name, f"path {list(path)} does not join "
                                          f"{flow.source} to {flow.destination}"))
    if len(set(path)) != len(path):
        out.append(Violation("path-continuity", name, f"path {list(path)} revisits a switch"))
    for a, b in zip(path, path[1:]):
        if t.edge_between(a, b) is None:
            out.append(Violation("path-continuity", name, f"hop {a}-{b} is not a link"))
    return out


def _link_loads(t: Topology, flows: Sequence[Flow], routing: FlowRouting):
    load = [0.0] * len(t.edges)
    users = [0] * len(t.edges)
    for f in flows:
        path = routing.paths.get(f.id)
        if not path:
            continue
        for a, b in zip(path, path[1:]):
            e = t.edge_between(a, b)
            if e is not None:
                load[e] += f.rate
                users[e] += 1
    return load, users


def check_traffic_constraints(t: Topology, flows: Sequence[Flow], routing: FlowRouting,
                              state: NetworkState) -> list[Violation]:
    """All violations of the traffic model's capacity, conservation and on/off coupling."""
    out: list[Violation] = []
    for f in flows:
        out.extend(check_path(t, f, routing.paths.get(f.id)))

    load, users = _link_loads(t, flows, routing)
    for e, edge in enumerate(t.edges):
        if not within_capacity(load[e], edge.bandwidth):
            out.append(Violation("link-capacity", f"edge {e} ({edge.u}-{edge.v})",
                                 f"load {load[e]:g} exceeds bandwidth {edge.bandwidth:g}"))

    touched = [False] * len(t.switches)
    for f in flows:
        path = routing.paths.get(f.id) or ()
        for a, b in zip(path, path[1:]):
            if not 0 <= a < len(t.switches) or not 0 <= b < len(t.switches):
                continue
            touched[a] = touched[b] = True
            if not state.switch_on[b]:
                out.append(Violation("enters-off-switch", f"switch {b}",
                                     f"flow {f.id} enters switch {b} which is off"))
            if not state.switch_on[a]:
                out.append(Violation("leaves-off-switch", f"switch {a}",
                                     f"flow {f.id} leaves switch {a} which is off"))
    for i, on in enumerate(state.switch_on):
        if on and not touched[i]:
            out.append(Violation("idle-switch-on", f"switch {i}", "switch is on but carries no flow"))

    for e in range(len(t.edges)):
        used = users[e] > 0
        if state.link_used[e] != used:
            out.append(Violation("link-used", f"edge {e}",
                                 f"link_used={state.link_used[e]} but {users[e]} flows use it"))
        if used and not state.link_active[e]:
            out.append(Violation("link-active", f"edge {e}", "link carries flow but is inactive"))
    return out


def derive_network_state(t: Topology, flows: Sequence[Flow], routing: FlowRouting) -> NetworkState:
    """Minimal on/off state consistent with a routing."""
    on = [False] * len(t.switches)
    used = [False] * len(t.edges)
    for f in flows:
        path = routing.paths.get(f.id) or ()
        for s in path:
            on[s] = True
        for a, b in zip(path, path[1:]):
            used[t.edge_between(a, b)] = True
    return NetworkState(tuple(on), tuple(used), tuple(used))


def traffic_objective_terms(t: Topology, flows: Sequence[Flow], routing: FlowRouting,
                            state: NetworkState, mode: ObjectiveMode) -> tuple[float, float]:
    """(link term, switch term) of the objective, without any feasibility check."""
    if mode == ObjectiveMode.PER_FLOW_LINK:
        link = 0.0
        for f in flows:
            path = routing.paths.get(f.id) or ()
            for a, b in zip(path, path[1:]):
                link += t.edges[t.edge_between(a, b)].power_cost
    else:
        link = sum(t.edges[e].power_cost for e, on in enumerate(state.link_active) if on)
    switch = sum(t.switches[i].power_cost for i, on in enumerate(state.switch_on) if on)
    return link, switch


def evaluate_traffic_objective(t: Topology, flows: Sequence[Flow], routing: FlowRouting,
                               state: NetworkState,
                               mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK) -> float:
    violations = check_traffic_constraints(t, flows, routing, state)
    if violations:
        raise ConstraintViolationError(
            f"routing violates {len(violations)} constraint(s); first: {violations[0]}",
            violations)
    link, switch = traffic_objective_terms(t, flows, routing, state, mode)
    return link + switch


def flows_by_id(flows: Iterable[Flow]) -> list[Flow]:
    out = sorted(flows, key=lambda f: f.id)
    ids = [f.id for f in out]
    if len(set(ids)) != len(ids):
        raise ValueError("flow ids must be unique")
    return out
