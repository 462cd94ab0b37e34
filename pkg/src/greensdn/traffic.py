"""Traffic-aware energy minimisation: pick one path per flow and switch off the rest.

The exact solver is a depth-first branch-and-bound over per-flow candidate
paths (flows in id order, candidates in switch-sequence order), seeded with the
greedy bin-packing result. Ties are resolved towards the lexicographically
smallest routing, so the answer does not depend on the seed or on cost scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from greensdn.errors import BudgetExhaustedError, InfeasibleError
from greensdn.model import (
    CAPACITY_RTOL,
    Flow,
    FlowRouting,
    NetworkState,
    ObjectiveMode,
    Topology,
    derive_network_state,
    evaluate_traffic_objective,
    flows_by_id,
    traffic_objective_terms,
    validate_topology,
)
from greensdn.paths import (cheapest_residual_cost, hop_distances, iter_simple_paths,
                            k_shortest_paths, steiner_forest_cost)

EXACT = "exact"
INCUMBENT = "incumbent"
TIE_RTOL = 1e-9


def _clearly_below(a: float, b: float) -> bool:
    """``a < b`` by more than the tie tolerance; an infinite ``b`` has no slack."""
    if b == math.inf:
        return a < b
    return a < b - TIE_RTOL * abs(b)


@dataclass(frozen=True)
class SolverBudget:
    max_nodes: int = 200_000
    k_paths: int = 16

    def __post_init__(self):
        if self.max_nodes < 1 or self.k_paths < 1:
            raise ValueError("max_nodes and k_paths must both be >= 1")


@dataclass(frozen=True)
class TrafficSolution:
    routing: FlowRouting
    state: NetworkState
    objective: float
    optimality: str  # "exact" or the heuristic's name
    nodes: int = 0

    @property
    def is_exact(self) -> bool:
        return self.optimality == EXACT


class PathOrder(str, enum.Enum):
    SHORTEST_FIRST = "shortest-first"
    LONGEST_FIRST = "longest-first"
    SMALLEST_DEMAND_FIRST = "smallest-demand-first"
    HIGHEST_DEMAND_FIRST = "highest-demand-first"


def _check_instance(t: Topology, flows: Sequence[Flow]):
    problems = validate_topology(t)
    if problems:
        raise ValueError(f"invalid topology: {problems[0]}")
    n = t.n_switches
    for f in flows:
        if not (0 <= f.source < n and 0 <= f.destination < n):
            raise ValueError(f"flow {f.id} references a switch outside 0..{n - 1}")


@dataclass
class _Path:
    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    link_cost: float


def _candidates(t: Topology, flow: Flow, k: int) -> tuple[list[_Path], bool]:
    paths, complete = k_shortest_paths(t, flow.source, flow.destination, k)
    paths.sort()  # leftmost first
    out = []
    for p in paths:
        edges = tuple(t.edge_between(a, b) for a, b in zip(p, p[1:]))
        out.append(_Path(p, edges, sum(t.edges[e].power_cost for e in edges)))
    return out, complete


class _Usage:
    """Incremental switch/link usage counters for a partial routing."""

    def __init__(self, t: Topology, mode: ObjectiveMode):
        self.t = t
        self.mode = mode
        self.sw = [0] * t.n_switches
        self.ln = [0] * len(t.edges)
        self.load = [0.0] * len(t.edges)
        self.cost = 0.0
        self.sw_cost = [s.power_cost for s in t.switches]
        self.ln_cost = [e.power_cost for e in t.edges]
        self.cap = [e.bandwidth * (1.0 + CAPACITY_RTOL) for e in t.edges]

    def fits(self, p: _Path, rate: float) -> bool:
        load, cap = self.load, self.cap
        return all(load[e] + rate <= cap[e] for e in p.edges)

    def marginal(self, p: _Path) -> float:
        sw, sw_cost = self.sw, self.sw_cost
        c = sum(sw_cost[s] for s in p.nodes if not sw[s])
        if self.mode == ObjectiveMode.PER_FLOW_LINK:
            return c + p.link_cost
        ln, ln_cost = self.ln, self.ln_cost
        return c + sum(ln_cost[e] for e in p.edges if not ln[e])

    def add(self, p: _Path, rate: float) -> float:
        delta = self.marginal(p)
        for s in p.nodes:
            self.sw[s] += 1
        for e in p.edges:
            self.ln[e] += 1
            self.load[e] += rate
        self.cost += delta
        return delta

    def remove(self, p: _Path, rate: float, delta: float):
        for s in p.nodes:
            self.sw[s] -= 1
        for e in p.edges:
            self.ln[e] -= 1
            self.load[e] -= rate
        self.cost -= delta


def _saturated(usage: _Usage, cands: list[_Path], rate: float) -> list[int]:
    return sorted({e for p in cands for e in p.edges if usage.load[e] + rate > usage.cap[e]})


def _build(t: Topology, flows: Sequence[Flow], paths: dict[int, tuple[int, ...]],
           mode: ObjectiveMode, optimality: str, nodes: int = 0) -> TrafficSolution:
    routing = FlowRouting(paths)
    state = derive_network_state(t, flows, routing)
    objective = evaluate_traffic_objective(t, flows, routing, state, mode)
    return TrafficSolution(routing, state, objective, optimality, nodes)


def _greedy_route(t: Topology, order: Sequence[Flow], mode: ObjectiveMode,
                  cands: dict[int, list[_Path]]) -> dict[int, int]:
    """Route flows one by one on the feasible candidate with least marginal cost.

    Returns flow id -> index into ``cands[flow id]``.
    """
    usage = _Usage(t, mode)
    chosen: dict[int, int] = {}
    for pos, f in enumerate(order):
        best, best_m = None, math.inf
        for r, p in enumerate(cands[f.id]):
            if not usage.fits(p, f.rate):
                continue
            m = usage.marginal(p)
            if best is None or m < best_m - TIE_RTOL * abs(best_m):
                best, best_m = r, m
        if best is None:
            raise InfeasibleError(
                f"flow {f.id} ({f.source}->{f.destination}, rate {f.rate:g}) has no path "
                "with enough residual bandwidth",
                flows=[g.id for g in order[:pos + 1]],
                saturated_edges=_saturated(usage, cands[f.id], f.rate), proven=False)
        chosen[f.id] = best
        usage.add(cands[f.id][best], f.rate)
    return chosen


def _all_candidates(t, flows, k):
    cands, complete = {}, True
    for f in flows:
        cands[f.id], done = _candidates(t, f, k)
        complete = complete and done
    return cands, complete


def heuristic_greedy_binpack(t: Topology, flows: Sequence[Flow],
                             mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK,
                             k_paths: int = 16, name: str = "greedy-binpack") -> TrafficSolution:
    """Greedy bin-packing: flows in the given order, each on its cheapest leftmost path."""
    _check_instance(t, flows)
    flows = list(flows)
    cands, _ = _all_candidates(t, flows, k_paths)
    chosen = _greedy_route(t, flows, mode, cands)
    paths = {fid: cands[fid][r].nodes for fid, r in chosen.items()}
    return _build(t, flows, paths, mode, name)


def order_flows(t: Topology, flows: Sequence[Flow], order: PathOrder) -> list[Flow]:
    order = PathOrder(order)
    if order in (PathOrder.SHORTEST_FIRST, PathOrder.LONGEST_FIRST):
        dists = {}
        for f in flows:
            if f.destination not in dists:
                dists[f.destination] = hop_distances(t.adjacency, f.destination)
        sign = 1 if order == PathOrder.SHORTEST_FIRST else -1
        return sorted(flows, key=lambda f: (sign * dists[f.destination][f.source], f.id))
    sign = 1 if order == PathOrder.SMALLEST_DEMAND_FIRST else -1
    return sorted(flows, key=lambda f: (sign * f.rate, f.id))


def heuristic_path_first(t: Topology, flows: Sequence[Flow],
                         mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK,
                         order: PathOrder = PathOrder.SHORTEST_FIRST,
                         k_paths: int = 16) -> TrafficSolution:
    """Sort flows by path length or demand, then route greedily in that order."""
    _check_instance(t, flows)
    ordered = order_flows(t, flows, order)
    return heuristic_greedy_binpack(t, ordered, mode, k_paths, name=PathOrder(order).value)


def heuristic_fattree_topology_aware(t: Topology, flows: Sequence[Flow],
                                     mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK,
                                     k_paths: int = 16) -> TrafficSolution:
    """Size the active aggregation/core layers from demand, then route leftmost-first.

    Aggregation switches per pod: enough uplinks to carry the busiest edge
    switch's traffic; core switches: enough to carry the busiest pod's
    cross-pod traffic (one link per core per pod). Flows that do not fit in
    that subset fall back to cheapest-marginal routing over the whole tree.
    """
    if not t.is_fat_tree:
        raise ValueError("topology-aware heuristic needs fat-tree pod/layer metadata")
    _check_instance(t, flows)
    flows = list(flows)
    sw = t.switches
    core = [s.id for s in sw if s.layer == "core"]
    aggs_by_pod: dict[int, list[int]] = {}
    for s in sw:
        if s.layer == "aggregation":
            aggs_by_pod.setdefault(s.pod, []).append(s.id)

    def min_bw(layer_a, layer_b):
        bws = [e.bandwidth for e in t.edges
               if {sw[e.u].layer, sw[e.v].layer} == {layer_a, layer_b}]
        return min(bws) if bws else math.inf

    w_edge, w_core = min_bw("edge", "aggregation"), min_bw("aggregation", "core")
    up: dict[int, float] = {}
    down: dict[int, float] = {}
    cross_up: dict[int, float] = {}
    cross_down: dict[int, float] = {}
    for f in flows:
        a, b = sw[f.source], sw[f.destination]
        if a.layer == "edge":
            up[a.id] = up.get(a.id, 0.0) + f.rate
        if b.layer == "edge":
            down[b.id] = down.get(b.id, 0.0) + f.rate
        if a.pod != b.pod:
            if a.pod is not None:
                cross_up[a.pod] = cross_up.get(a.pod, 0.0) + f.rate
            if b.pod is not None:
                cross_down[b.pod] = cross_down.get(b.pod, 0.0) + f.rate

    def links_needed(demand, bw):
        return max(1, math.ceil(demand / bw - CAPACITY_RTOL)) if demand > 0 else 0

    cross = max([*cross_up.values(), *cross_down.values(), 0.0])
    n_core = min(len(core), links_needed(cross, w_core))
    active = set(core[:n_core])
    for pod, aggs in aggs_by_pod.items():
        edge_demand = max([max(up.get(s.id, 0.0), down.get(s.id, 0.0))
                           for s in sw if s.pod == pod and s.layer == "edge"] + [0.0])
        n_agg = min(len(aggs), links_needed(edge_demand, w_edge))
        active.update(aggs[:n_agg])
        if cross_up.get(pod, 0.0) > 0 or cross_down.get(pod, 0.0) > 0:
            # each chosen core hangs off one aggregation position in every pod
            for c in core[:n_core]:
                active.update(a for a in aggs if t.edge_between(a, c) is not None)
    for s in sw:
        if s.layer == "edge":
            active.add(s.id)
    for f in flows:
        active.update((f.source, f.destination))

    usage = _Usage(t, mode)
    paths = {}
    for pos, f in enumerate(flows):
        chosen = None
        for count, p in enumerate(iter_simple_paths(t, f.source, f.destination,
                                                    allowed_switch=active.__contains__)):
            if count >= k_paths:
                break
            cand = _Path(p, tuple(t.edge_between(a, b) for a, b in zip(p, p[1:])), 0.0)
            if usage.fits(cand, f.rate):
                chosen = cand
                break
        if chosen is None:
            full, _ = _candidates(t, f, k_paths)
            fitting = [p for p in full if usage.fits(p, f.rate)]
            if not fitting:
                raise InfeasibleError(
                    f"flow {f.id} has no path with enough residual bandwidth",
                    flows=[g.id for g in flows[:pos + 1]],
                    saturated_edges=_saturated(usage, full, f.rate), proven=False)
            chosen = min(fitting, key=usage.marginal)
        chosen.link_cost = sum(t.edges[e].power_cost for e in chosen.edges)
        usage.add(chosen, f.rate)
        paths[f.id] = chosen.nodes
    return _build(t, flows, paths, mode, "topology-aware")


def _global_lower_bound(t: Topology, flows: Sequence[Flow], mode: ObjectiveMode) -> float:
    """Admissible bound on the optimum over *all* simple paths, capacities ignored."""
    if not flows:
        return 0.0
    forced = {s for f in flows for s in (f.source, f.destination)}
    forced_cost = sum(t.switches[s].power_cost for s in forced)
    node_cost = [0.0 if i in forced else s.power_cost for i, s in enumerate(t.switches)]
    edge_cost = [e.power_cost for e in t.edges]
    zeros_n = [0.0] * t.n_switches
    full = [cheapest_residual_cost(t, f.source, f.destination, node_cost, edge_cost)
            for f in flows]
    pairs = [(f.source, f.destination) for f in flows]
    switch_cost = [s.power_cost for s in t.switches]
    if mode == ObjectiveMode.PER_ACTIVE_LINK:
        bound = forced_cost + max(full)
        forest = steiner_forest_cost(t, pairs, switch_cost, edge_cost)
        return bound if forest is None else max(bound, forest)
    links = [cheapest_residual_cost(t, f.source, f.destination, zeros_n, edge_cost)
             for f in flows]
    total_links = sum(links)
    bound = forced_cost + total_links + max(c - l for c, l in zip(full, links))
    # the two objective terms are bounded separately: per-flow link costs and
    # the switches any connecting subgraph must power
    forest = steiner_forest_cost(t, pairs, switch_cost, [0.0] * len(t.edges))
    return bound if forest is None else max(bound, total_links + forest)


def solve_exact_traffic(t: Topology, flows: Sequence[Flow],
                        mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK,
                        budget: SolverBudget = SolverBudget()) -> TrafficSolution:
    """Minimum-power routing by branch-and-bound.

    ``optimality`` is ``"exact"`` when the candidate lists held every simple
    path and the search finished, or when the result meets a global lower
    bound; otherwise ``"incumbent"``. Raises :class:`InfeasibleError` when no
    candidate combination respects capacities and :class:`BudgetExhaustedError`
    when the node budget ran out before any feasible routing was seen.
    """
    _check_instance(t, flows)
    flows = flows_by_id(flows)
    mode = ObjectiveMode(mode)
    if not flows:
        return _build(t, flows, {}, mode, EXACT)

    cands, complete = _all_candidates(t, flows, budget.k_paths)
    lists = [cands[f.id] for f in flows]
    rates = [f.rate for f in flows]
    n = len(flows)

    best_cost = math.inf
    best_ranks: list[int] | None = None
    seed_error = None
    try:
        seeded = _greedy_route(t, flows, mode, cands)
        best_ranks = [seeded[f.id] for f in flows]
        u = _Usage(t, mode)
        for i, r in enumerate(best_ranks):
            u.add(lists[i][r], rates[i])
        best_cost = u.cost
    except InfeasibleError as exc:
        seed_error = exc

    usage = _Usage(t, mode)
    per_flow = mode == ObjectiveMode.PER_FLOW_LINK
    ends = [(f.source, f.destination) for f in flows]
    sw_cost, ln_cost = usage.sw_cost, usage.ln_cost
    ranks = [0] * n
    nodes = 0
    exhausted = False
    # set once the search itself has produced an incumbent; from then on every
    # explored routing is lexicographically larger, so only strict gains count
    found_by_search = False

    def lower_bound(depth: int) -> float:
        sw, ln, load, cap = usage.sw, usage.ln, usage.load, usage.cap
        forced = set()
        for i in range(depth, n):
            for s in ends[i]:
                if not sw[s]:
                    forced.add(s)
        forced_cost = sum(sw_cost[s] for s in forced)
        link_sum = 0.0
        worst = 0.0
        for i in range(depth, n):
            rate = rates[i]
            best_full = best_link = math.inf
            for p in lists[i]:
                if not all(load[e] + rate <= cap[e] for e in p.edges):
                    continue
                extra = 0.0
                for s in p.nodes:
                    if not sw[s] and s not in forced:
                        extra += sw_cost[s]
                if per_flow:
                    lc = p.link_cost
                else:
                    lc = 0.0
                    for e in p.edges:
                        if not ln[e]:
                            lc += ln_cost[e]
                if extra + lc < best_full:
                    best_full = extra + lc
                if lc < best_link:
                    best_link = lc
            if best_full == math.inf:
                return math.inf
            if per_flow:
                link_sum += best_link
                worst = max(worst, best_full - best_link)
            else:
                worst = max(worst, best_full)
        return usage.cost + forced_cost + link_sum + worst

    def search(depth: int, tie_state: int):
        # tie_state: -1 prefix < incumbent's, 0 equal, 1 greater
        nonlocal nodes, exhausted, best_cost, best_ranks, found_by_search
        if exhausted:
            return
        nodes += 1
        if nodes > budget.max_nodes:
            exhausted = True
            return
        may_tie = tie_state <= 0 and not found_by_search and best_ranks is not None
        if depth == n:
            c = usage.cost
            if _clearly_below(c, best_cost) or (
                    may_tie and tie_state < 0 and c <= best_cost + TIE_RTOL * abs(best_cost)):
                best_cost = c
                best_ranks = list(ranks)
                found_by_search = True
            return
        lb = lower_bound(depth)
        if lb == math.inf:
            return
        if may_tie:
            if lb > best_cost + TIE_RTOL * abs(best_cost):
                return
        elif not _clearly_below(lb, best_cost):
            return
        rate = rates[depth]
        for r, p in enumerate(lists[depth]):
            if not usage.fits(p, rate):
                continue
            if tie_state == 0 and best_ranks is not None and not found_by_search:
                child = -1 if r < best_ranks[depth] else (0 if r == best_ranks[depth] else 1)
            else:
                child = tie_state if tie_state != 0 else 1
            delta = usage.add(p, rate)
            ranks[depth] = r
            search(depth + 1, child)
            usage.remove(p, rate, delta)
            if exhausted:
                return

    search(0, 0 if best_ranks is not None else 1)

    if best_ranks is None:
        if exhausted:
            raise BudgetExhaustedError(
                f"no feasible routing found within {budget.max_nodes} nodes")
        if seed_error is None:  # pragma: no cover - greedy success implies an incumbent
            raise AssertionError("search lost the greedy incumbent")
        raise InfeasibleError(str(seed_error), seed_error.flows, seed_error.saturated_edges,
                              proven=complete)

    proven = (complete and not exhausted) or \
        best_cost <= _global_lower_bound(t, flows, mode) * (1 + TIE_RTOL)
    paths = {f.id: lists[i][best_ranks[i]].nodes for i, f in enumerate(flows)}
    return _build(t, flows, paths, mode, EXACT if proven else INCUMBENT, nodes)


@dataclass(frozen=True)
class SavingsReport:
    baseline_watts: float
    optimized_watts: float
    savings_fraction: float
    # layer -> (baseline watts, optimized watts); links under "link"
    per_layer: dict = field(default_factory=dict)


def baseline_routing(t: Topology, flows: Sequence[Flow]) -> FlowRouting:
    """Hop-count shortest paths (lowest switch sequence on ties), capacities ignored."""
    paths = {}
    for f in flows:
        for p in iter_simple_paths(t, f.source, f.destination):
            paths[f.id] = p
            break
        else:
            raise InfeasibleError(f"flow {f.id}: destination unreachable", flows=[f.id])
    return FlowRouting(paths)


def savings_report(t: Topology, flows: Sequence[Flow], solution: TrafficSolution,
                   mode: ObjectiveMode = ObjectiveMode.PER_FLOW_LINK) -> SavingsReport:
    """Compare a solution against the always-on network.

    The baseline keeps every switch on and routes on shortest paths; in
    per-active-link mode every link is also charged, in per-flow-link mode each
    flow pays for the links of its shortest path.
    """
    mode = ObjectiveMode(mode)
    all_on = NetworkState(tuple([True] * t.n_switches), tuple([True] * len(t.edges)),
                          tuple([True] * len(t.edges)))
    base_link, _ = traffic_objective_terms(t, flows, baseline_routing(t, flows), all_on, mode)
    opt_link, _ = traffic_objective_terms(t, flows, solution.routing, solution.state, mode)

    per_layer: dict[str, list[float]] = {}
    for s in t.switches:
        row = per_layer.setdefault(s.layer or "switch", [0.0, 0.0])
        row[0] += s.power_cost
        if solution.state.switch_on[s.id]:
            row[1] += s.power_cost
    per_layer["link"] = [base_link, opt_link]
    baseline = sum(b for b, _ in per_layer.values())
    optimized = solution.objective
    savings = 1.0 - optimized / baseline if baseline > 0 else 0.0
    return SavingsReport(baseline, optimized, savings,
                         {k: (v[0], v[1]) for k, v in per_layer.items()})
