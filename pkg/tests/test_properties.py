"""Invariants checked over seeded random instances."""

import dataclasses
import itertools

import pytest
from hypothesis import given, settings, strategies as st

from greensdn.errors import InfeasibleError
from greensdn.generators import (
    FAT_TREE,
    GeneratorSpec,
    generate_flows,
    generate_topology,
    random_flows,
    random_placement_instance,
    random_topology,
)
from greensdn.model import (
    EdgeSpec,
    Flow,
    FlowRouting,
    ObjectiveMode,
    Topology,
    check_traffic_constraints,
    derive_network_state,
    traffic_objective_terms,
)
from greensdn.placement import (
    LEXICOGRAPHIC,
    PMS_ONLY,
    PlacementInstance,
    score_placement,
    solve_exact_placement,
)
from greensdn.rules import heuristic_shortest_admissible, solve_exact_rules
from greensdn.paths import shortest_path
from greensdn.traffic import savings_report, solve_exact_traffic
from oracles import all_paths, traffic_cost

PF, PA = ObjectiveMode.PER_FLOW_LINK, ObjectiveMode.PER_ACTIVE_LINK
seeds = st.integers(0, 10**6)


def scaled(t, factor):
    return dataclasses.replace(
        t,
        switches=tuple(dataclasses.replace(s, power_cost=s.power_cost * factor) for s in t.switches),
        edges=tuple(dataclasses.replace(e, power_cost=e.power_cost * factor) for e in t.edges))


def some_routing(t, flows, seed):
    paths = {}
    for i, f in enumerate(flows):
        options = all_paths(t, f.source, f.destination)
        paths[f.id] = options[(seed + i) % len(options)]
    return FlowRouting(paths)


def total(t, flows, routing, mode):
    return sum(traffic_objective_terms(t, flows, routing, derive_network_state(t, flows, routing),
                                       mode))


@given(st.integers(2, 6), st.integers(1, 4), seeds)
@settings(max_examples=60, deadline=None)
def test_active_link_charge_never_exceeds_per_flow_charge(n, k, seed):
    t = random_topology(n, seed)
    flows = random_flows(t, k, seed)
    routing = some_routing(t, flows, seed)
    assert total(t, flows, routing, PA) <= total(t, flows, routing, PF) + 1e-9


@given(st.integers(2, 6), st.integers(1, 4), seeds)
@settings(max_examples=60, deadline=None)
def test_derived_state_only_ever_breaks_capacity(n, k, seed):
    t = random_topology(n, seed)
    flows = random_flows(t, k, seed)
    routing = some_routing(t, flows, seed)
    report = check_traffic_constraints(t, flows, routing, derive_network_state(t, flows, routing))
    assert {v.code for v in report} <= {"link-capacity"}


def _disjoint_union(a, b):
    off = a.n_switches
    switches = a.switches + tuple(dataclasses.replace(s, id=s.id + off) for s in b.switches)
    edges = a.edges + tuple(EdgeSpec(e.u + off, e.v + off, e.bandwidth, e.power_cost)
                            for e in b.edges)
    return Topology(switches, edges, {}, {}), off


@given(st.integers(2, 5), st.integers(2, 5), seeds, st.sampled_from([PF, PA]))
@settings(max_examples=40, deadline=None)
def test_objective_adds_over_disjoint_parts(n1, n2, seed, mode):
    a, b = random_topology(n1, seed), random_topology(n2, seed + 1)
    fa, fb = random_flows(a, 2, seed), random_flows(b, 2, seed + 1)
    ra, rb = some_routing(a, fa, seed), some_routing(b, fb, seed)
    u, off = _disjoint_union(a, b)
    fu = fa + [Flow(f.id + 10, f.source + off, f.destination + off, f.rate) for f in fb]
    ru = FlowRouting({**ra.paths, **{fid + 10: tuple(s + off for s in p)
                                     for fid, p in rb.paths.items()}})
    assert total(u, fu, ru, mode) == pytest.approx(total(a, fa, ra, mode) + total(b, fb, rb, mode))


def _optimal_set(t, flows, per_active):
    flows = sorted(flows, key=lambda f: f.id)
    options = [all_paths(t, f.source, f.destination) for f in flows]
    feasible = []
    for combo in itertools.product(*options):
        load = {}
        for f, p in zip(flows, combo):
            for x, y in zip(p, p[1:]):
                load[t.edge_between(x, y)] = load.get(t.edge_between(x, y), 0.0) + f.rate
        if all(v <= t.edges[e].bandwidth * (1 + 1e-9) for e, v in load.items()):
            feasible.append((traffic_cost(t, flows, combo, per_active), combo))
    if not feasible:
        return set()
    best = min(c for c, _ in feasible)
    return {combo for c, combo in feasible if c <= best * (1 + 1e-9)}


@given(st.integers(2, 5), st.integers(1, 3), seeds, st.sampled_from([PF, PA]))
@settings(max_examples=40, deadline=None)
def test_scaling_power_keeps_the_set_of_optimal_routings(n, k, seed, mode):
    t = random_topology(n, seed, integral=False)
    flows = random_flows(t, k, seed)
    assert _optimal_set(t, flows, mode == PA) == _optimal_set(scaled(t, 7.3), flows, mode == PA)


@given(st.integers(2, 6), st.integers(1, 4), seeds, st.sampled_from([PF, PA]))
@settings(max_examples=30, deadline=None)
def test_exact_solver_is_deterministic(n, k, seed, mode):
    t = random_topology(n, seed)
    flows = random_flows(t, k, seed)
    try:
        a = solve_exact_traffic(t, flows, mode)
    except InfeasibleError:
        return
    b = solve_exact_traffic(t, flows, mode)
    assert (a.routing, a.state, a.objective) == (b.routing, b.state, b.objective)


def test_savings_do_not_grow_with_load():
    t = generate_topology(GeneratorSpec(FAT_TREE, 4))
    values = []
    for factor in (0.05, 0.25, 0.5, 0.9):
        flows = generate_flows(t, 8, factor, "cross-pod", 4)
        values.append(savings_report(t, flows, solve_exact_traffic(t, flows, PA), PA)
                      .savings_fraction)
    assert values == sorted(values, reverse=True)
    # same host pairs at every load
    pairs = {tuple((f.source, f.destination) for f in generate_flows(t, 8, x, "cross-pod", 4))
             for x in (0.05, 0.9)}
    assert len(pairs) == 1


@given(st.integers(2, 7), st.integers(1, 4), seeds)
@settings(max_examples=60, deadline=None)
def test_rule_totals_are_path_lengths_and_links_are_tight(n, k, seed):
    t = random_topology(n, seed)
    flows = random_flows(t, k, seed)
    for solve in (solve_exact_rules, heuristic_shortest_admissible):
        try:
            sol = solve(t, flows)
        except InfeasibleError:
            continue
        paths = sol.allocation.routing.paths
        assert sol.total_rules == sum(len(p) for p in paths.values())
        used = {t.edge_between(a, b) for p in paths.values() for a, b in zip(p, p[1:])}
        assert {e for e, on in enumerate(sol.allocation.link_state) if on} == used


@given(st.integers(2, 7), st.integers(1, 4), seeds)
@settings(max_examples=60, deadline=None)
def test_roomy_tables_reduce_to_shortest_paths(n, k, seed):
    t = random_topology(n, seed, bandwidth=(1000.0, 1000.0))
    t = dataclasses.replace(t, switches=tuple(dataclasses.replace(s, rule_capacity=k)
                                               for s in t.switches))
    flows = random_flows(t, k, seed)
    expected = sum(len(shortest_path(t, f.source, f.destination)) for f in flows)
    assert solve_exact_rules(t, flows).total_rules == expected


@given(st.integers(1, 4), st.integers(1, 6), seeds)
@settings(max_examples=60, deadline=None)
def test_lexicographic_never_uses_more_machines(n_pms, n_vms, seed):
    inst = random_placement_instance(n_pms, n_vms, seed)
    try:
        pms = score_placement(inst, solve_exact_placement(inst, PMS_ONLY))
    except InfeasibleError:
        return
    lex = score_placement(inst, solve_exact_placement(inst, LEXICOGRAPHIC))
    assert lex.active_pms == pms.active_pms
    assert lex.network_cost <= pms.network_cost


@given(st.integers(2, 4), st.integers(2, 6), seeds)
@settings(max_examples=60, deadline=None)
def test_chatty_vms_share_a_machine_when_everything_fits(n_pms, n_vms, seed):
    base = random_placement_instance(n_pms, n_vms, seed)
    big = [[100.0, 100.0]] * n_pms
    inst = PlacementInstance(big, base.vm_demands, base.resource_names, base.vm_traffic,
                             base.pm_hops)
    p = solve_exact_placement(inst, LEXICOGRAPHIC)
    score = score_placement(inst, p)
    assert score.network_cost == 0.0
    assert score.active_pms == 1


@given(st.integers(2, 8), seeds, st.floats(0.01, 1.0))
@settings(max_examples=40, deadline=None)
def test_generated_rates_fit_every_link(n, seed, fraction):
    t = random_topology(n, seed)
    for f in generate_flows(t, 5, fraction, seed=seed):
        assert f.rate <= min(e.bandwidth for e in t.edges)
