"""Rule placement: route flows so the network holds as few forwarding rules as possible.

Every switch on a flow's path carries one rule for that flow, so the total is
the sum of path lengths in switches; flow-table sizes and link bandwidth make
the problem hard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from greensdn.errors import BudgetExhaustedError, InfeasibleError
from greensdn.model import (
    CAPACITY_RTOL,
    Flow,
    FlowRouting,
    Topology,
    Violation,
    check_path,
    flows_by_id,
    validate_topology,
    within_capacity,
)
from greensdn.paths import iter_simple_paths, k_shortest_paths
from greensdn.traffic import EXACT, INCUMBENT, SolverBudget


@dataclass(frozen=True)
class RuleAllocation:
    flow_ids: tuple[int, ...]               # column order of ``rules``
    rules: tuple[tuple[bool, ...], ...]     # |Z| x |F|
    routing: FlowRouting
    link_state: tuple[bool, ...]

    def rules_on(self, switch: int) -> int:
        return sum(self.rules[switch])


@dataclass(frozen=True)
class RuleSolution:
    allocation: RuleAllocation
    total_rules: int
    optimality: str
    nodes: int = 0

    @property
    def is_exact(self) -> bool:
        return self.optimality == EXACT


def allocation_from_paths(t: Topology, flows: Sequence[Flow],
                          paths: dict[int, Sequence[int]]) -> RuleAllocation:
    """Rules on every on-path switch and exactly the used links active."""
    flows = flows_by_id(flows)
    rules = [[False] * len(flows) for _ in range(t.n_switches)]
    links = [False] * len(t.edges)
    for col, f in enumerate(flows):
        path = paths[f.id]
        for s in path:
            rules[s][col] = True
        for a, b in zip(path, path[1:]):
            links[t.edge_between(a, b)] = True
    return RuleAllocation(tuple(f.id for f in flows), tuple(map(tuple, rules)),
                          FlowRouting(paths), tuple(links))


def _admissibility(t: Topology, f: Flow) -> list[Violation]:
    out = []
    if f.source not in t.ingress_hosts.values():
        out.append(Violation("host-admissibility", f"flow {f.id}",
                             f"source switch {f.source} has no ingress host"))
    if f.destination not in t.egress_hosts.values():
        out.append(Violation("host-admissibility", f"flow {f.id}",
                             f"destination switch {f.destination} has no egress host"))
    return out


def check_rule_constraints(t: Topology, flows: Sequence[Flow],
                           alloc: RuleAllocation) -> list[Violation]:
    flows = flows_by_id(flows)
    if list(alloc.flow_ids) != [f.id for f in flows] or len(alloc.rules) != t.n_switches \
            or len(alloc.link_state) != len(t.edges):
        return [Violation("shape", "allocation", "allocation does not match the instance")]
    out: list[Violation] = []
    load = [0.0] * len(t.edges)
    users = [0] * len(t.edges)
    for col, f in enumerate(flows):
        out.extend(_admissibility(t, f))
        path = alloc.routing.paths.get(f.id)
        out.extend(check_path(t, f, path))
        path = path or ()
        on_path = set(path)
        for i in range(t.n_switches):
            if alloc.rules[i][col] and i not in on_path:
                out.append(Violation("rule-coverage", f"switch {i}",
                                     f"holds a rule for flow {f.id} which does not pass it"))
            elif not alloc.rules[i][col] and i in on_path:
                out.append(Violation("rule-coverage", f"switch {i}",
                                     f"flow {f.id} passes it but no rule is installed"))
        for a, b in zip(path, path[1:]):
            e = t.edge_between(a, b)
            if e is None:
                continue
            load[e] += f.rate
            users[e] += 1
            if not alloc.link_state[e]:
                out.append(Violation("inactive-link-used",
                                     f"edge {e} ({t.edges[e].u}-{t.edges[e].v})",
                                     f"flow {f.id} uses an inactive link"))
    for e, edge in enumerate(t.edges):
        if not within_capacity(load[e], edge.bandwidth):
            out.append(Violation("link-capacity", f"edge {e} ({edge.u}-{edge.v})",
                                 f"load {load[e]:g} exceeds bandwidth {edge.bandwidth:g}"))
        if alloc.link_state[e] and users[e] == 0:
            out.append(Violation("idle-link-active", f"edge {e} ({edge.u}-{edge.v})",
                                 "link is active but carries no flow"))
    for s in t.switches:
        count = alloc.rules_on(s.id)
        if count > s.rule_capacity:
            out.append(Violation("table-capacity", f"switch {s.id}",
                                 f"{count} rules exceed table capacity {s.rule_capacity}"))
    return out


def _solution(t, flows, paths, optimality, nodes=0) -> RuleSolution:
    alloc = allocation_from_paths(t, flows, paths)
    total = sum(sum(row) for row in alloc.rules)
    assert total == sum(len(p) for p in paths.values())
    return RuleSolution(alloc, total, optimality, nodes)


def _prepare(t: Topology, flows: Sequence[Flow]) -> list[Flow]:
    problems = validate_topology(t)
    if problems:
        raise ValueError(f"invalid topology: {problems[0]}")
    flows = flows_by_id(flows)
    for f in flows:
        if not (0 <= f.source < t.n_switches and 0 <= f.destination < t.n_switches):
            raise ValueError(f"flow {f.id} references a switch outside the topology")
        bad = _admissibility(t, f)
        if bad:
            raise ValueError(str(bad[0]))
    return flows


def heuristic_shortest_admissible(t: Topology, flows: Sequence[Flow]) -> RuleSolution:
    """Flows by id, each on the fewest-switch path that still has table room and bandwidth."""
    flows = _prepare(t, flows)
    tables = [s.rule_capacity for s in t.switches]
    load = [0.0] * len(t.edges)
    paths = {}
    for pos, f in enumerate(flows):
        def hop_ok(a, b, rate=f.rate):
            e = t.edge_between(a, b)
            return within_capacity(load[e] + rate, t.edges[e].bandwidth)

        path = None
        for path in iter_simple_paths(t, f.source, f.destination,
                                      allowed_switch=lambda s: tables[s] >= 1,
                                      allowed_hop=hop_ok):
            break
        if path is None:
            full = [s.id for s in t.switches if tables[s.id] < 1]
            sat = [e for e, edge in enumerate(t.edges)
                   if not within_capacity(load[e] + f.rate, edge.bandwidth)]
            raise InfeasibleError(
                f"flow {f.id} has no path with free table space and bandwidth "
                f"(full tables: {full})",
                flows=[g.id for g in flows[:pos + 1]], saturated_edges=sat, proven=False)
        paths[f.id] = path
        for s in path:
            tables[s] -= 1
        for a, b in zip(path, path[1:]):
            load[t.edge_between(a, b)] += f.rate
    return _solution(t, flows, paths, "shortest-admissible")


def solve_exact_rules(t: Topology, flows: Sequence[Flow],
                      budget: SolverBudget = SolverBudget()) -> RuleSolution:
    """Fewest total rules by branch-and-bound over each flow's shortest candidate paths.

    The result is ``"exact"`` when either every simple path was a candidate or
    any routing leaving the candidate lists provably needs at least as many
    rules.
    """
    flows = _prepare(t, flows)
    if not flows:
        return _solution(t, flows, {}, EXACT)
    n = len(flows)
    lists, complete = [], []
    for f in flows:
        paths, done = k_shortest_paths(t, f.source, f.destination, budget.k_paths)
        if not paths:
            raise InfeasibleError(f"flow {f.id}: destination unreachable", flows=[f.id])
        lists.append([(p, tuple(t.edge_between(a, b) for a, b in zip(p, p[1:])))
                      for p in paths])
        complete.append(done)
    rates = [f.rate for f in flows]
    tables = [s.rule_capacity for s in t.switches]
    cap = [e.bandwidth * (1.0 + CAPACITY_RTOL) for e in t.edges]
    load = [0.0] * len(t.edges)
    shortest = [len(c[0][0]) for c in lists]
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + shortest[i]
    root_lb = suffix[0]

    best = {"cost": math.inf, "choice": None}
    choice = [0] * n
    nodes = 0
    exhausted = False

    def fits(i, nodes_, edges_):
        return all(tables[s] >= 1 for s in nodes_) and \
            all(load[e] + rates[i] <= cap[e] for e in edges_)

    def search(depth, cost):
        nonlocal nodes, exhausted
        if exhausted or best["cost"] == root_lb:
            return
        nodes += 1
        if nodes > budget.max_nodes:
            exhausted = True
            return
        if depth == n:
            if cost < best["cost"]:
                best["cost"], best["choice"] = cost, list(choice)
            return
        if cost + suffix[depth] >= best["cost"]:
            return
        rate = rates[depth]
        for r, (p, edges) in enumerate(lists[depth]):
            if cost + len(p) + suffix[depth + 1] >= best["cost"]:
                break  # candidates are sorted by length
            if not fits(depth, p, edges):
                continue
            for s in p:
                tables[s] -= 1
            for e in edges:
                load[e] += rate
            choice[depth] = r
            search(depth + 1, cost + len(p))
            for s in p:
                tables[s] += 1
            for e in edges:
                load[e] -= rate
            if exhausted:
                return

    search(0, 0)
    if best["choice"] is None:
        if exhausted:
            raise BudgetExhaustedError(f"no feasible allocation within {budget.max_nodes} nodes")
        try:
            fallback = heuristic_shortest_admissible(t, flows)
        except InfeasibleError as exc:
            cert = exc
        else:
            # feasible only through paths outside the candidate lists
            return RuleSolution(fallback.allocation, fallback.total_rules, INCUMBENT, nodes)
        raise InfeasibleError("table or link capacities cannot be met jointly: " + str(cert),
                              cert.flows, cert.saturated_edges, proven=all(complete))

    value = best["cost"]
    # a routing that leaves the candidate list of flow i uses a path at least as
    # long as that list's last entry
    escape = min((suffix[0] - shortest[i] + len(lists[i][-1][0])
                  for i in range(n) if not complete[i]), default=math.inf)
    proven = not exhausted and (all(complete) or escape >= value) or value == root_lb
    paths = {f.id: lists[i][best["choice"][i]][0] for i, f in enumerate(flows)}
    return _solution(t, flows, paths, EXACT if proven else INCUMBENT, nodes)
