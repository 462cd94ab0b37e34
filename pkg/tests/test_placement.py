import itertools

import pytest
from hypothesis import given, settings, strategies as st

from builders import triangle
from greensdn.errors import ConstraintViolationError, InfeasibleError
from greensdn.generators import random_placement_instance
from greensdn.placement import (
    LEXICOGRAPHIC,
    PMS_ONLY,
    Placement,
    PlacementInstance,
    Weighted,
    check_placement,
    heuristic_bfd,
    heuristic_ffd,
    network_cost,
    pm_hops_from_topology,
    score_placement,
    solve_exact_placement,
)
from oracles import placement_oracle


def one_cpu(demands, pms=3, capacity=1.0, traffic=None, hops=None):
    return PlacementInstance([[capacity]] * pms, [[d] for d in demands], ("cpu",), traffic, hops)


def pair(score):
    return (score.active_pms, score.network_cost)


def codes(violations):
    return sorted({v.code for v in violations})


def test_single_vm_fits():
    inst = one_cpu([0.5], pms=1)
    assert check_placement(inst, Placement.from_hosts([0], 1)) == []


def test_overfull_machine_is_reported():
    inst = one_cpu([0.5, 0.5, 0.5], pms=1)
    assert codes(check_placement(inst, Placement.from_hosts([0, 0, 0], 1))) == ["pm-capacity"]


def test_vm_on_two_machines_is_reported():
    inst = one_cpu([0.5], pms=2)
    p = Placement(((True,), (True,)), (True, True))
    assert codes(check_placement(inst, p)) == ["vm-placed-once"]


def test_power_must_follow_hosting():
    inst = one_cpu([0.5], pms=2)
    assert codes(check_placement(inst, Placement(((True,), (False,)), (False, True)))) == ["pm-power"]


def test_score_rejects_infeasible_placements():
    inst = one_cpu([0.7, 0.7], pms=1)
    with pytest.raises(ConstraintViolationError):
        score_placement(inst, Placement.from_hosts([0, 0], 1))


def test_network_cost_examples():
    traffic = [[0, 10], [0, 0]]
    inst = one_cpu([0.3, 0.3], pms=2, traffic=traffic)
    assert network_cost(inst, [0, 0]) == 0.0
    assert network_cost(inst, [0, 1]) == 10.0
    # every entry of the traffic matrix counts, so a symmetric matrix counts a pair twice
    sym = one_cpu([0.3, 0.3], pms=2, traffic=[[0, 10], [10, 0]])
    assert network_cost(sym, [0, 1]) == 20.0
    empty = one_cpu([], pms=2)
    assert pair(score_placement(empty, solve_exact_placement(empty))) == (0, 0.0)


def test_ffd_example_bins():
    inst = one_cpu([0.6, 0.5, 0.4, 0.3, 0.2])
    p = heuristic_ffd(inst)
    assert p.hosts() == [0, 1, 0, 1, 1]
    assert score_placement(inst, p).active_pms == 2
    assert score_placement(inst, solve_exact_placement(inst, PMS_ONLY)).active_pms == 2


def test_bfd_picks_tightest_machine():
    inst = PlacementInstance([[1.0], [0.35]], [[0.6], [0.3]], ("cpu",))
    # 0.6 only fits machine 0; 0.3 then leaves less slack on machine 1
    assert heuristic_bfd(inst).hosts() == [0, 1]
    assert heuristic_ffd(inst).hosts() == [0, 0]


def test_heuristics_trivial_cases():
    assert score_placement(one_cpu([0.4], pms=2), heuristic_bfd(one_cpu([0.4], pms=2))).active_pms == 1
    inst = one_cpu([1.0, 1.0, 1.0])
    for solve in (heuristic_ffd, heuristic_bfd, solve_exact_placement):
        assert score_placement(inst, solve(inst)).active_pms == 3


def test_four_halves_need_two_machines():
    inst = one_cpu([0.5] * 4, pms=4)
    assert score_placement(inst, solve_exact_placement(inst, PMS_ONLY)).active_pms == 2


def test_chatty_pair_is_co_located():
    inst = one_cpu([0.4, 0.4], pms=2, traffic=[[0, 10], [0, 0]])
    assert pair(score_placement(inst, solve_exact_placement(inst, LEXICOGRAPHIC))) == (1, 0.0)


def test_oversized_vm_is_infeasible():
    inst = one_cpu([2.0], pms=2)
    for solve in (heuristic_ffd, heuristic_bfd, solve_exact_placement):
        with pytest.raises(InfeasibleError):
            solve(inst)


def test_packing_infeasible_even_though_each_vm_fits():
    inst = one_cpu([0.6, 0.6, 0.6], pms=2)
    with pytest.raises(InfeasibleError):
        solve_exact_placement(inst)


def test_weighted_trades_machines_for_traffic():
    # two big VMs cannot share; the chatty small one follows its partner
    inst = PlacementInstance([[1.0], [1.0], [1.0]], [[0.7], [0.7], [0.3]], ("cpu",),
                             [[0, 0, 5], [0, 0, 0], [0, 0, 0]],
                             [[0, 4, 4], [4, 0, 4], [4, 4, 0]])
    p = solve_exact_placement(inst, Weighted(1.0, 1.0))
    assert p.hosts()[2] == p.hosts()[0]
    assert pair(score_placement(inst, p)) == (2, 0.0)


def test_bad_objective_rejected():
    with pytest.raises(ValueError):
        solve_exact_placement(one_cpu([0.5]), "fastest")
    with pytest.raises(ValueError):
        solve_exact_placement(one_cpu([0.5]), Weighted(-1, 1))


@pytest.mark.parametrize("kwargs", [
    {"pm_resources": [[-1.0]], "vm_demands": [[0.5]]},
    {"pm_resources": [[1.0]], "vm_demands": [[0.5]], "vm_traffic": [[1.0]]},
    {"pm_resources": [[1.0], [1.0]], "vm_demands": [[0.5]], "pm_hops": [[0, 1], [2, 0]]},
    {"pm_resources": [[1.0, 2.0]], "vm_demands": [[0.5]]},
])
def test_instance_validation(kwargs):
    with pytest.raises(ValueError):
        PlacementInstance(**kwargs)


def test_hops_from_topology_count_switches():
    hops = pm_hops_from_topology(triangle(), [0, 0, 1])
    assert hops == ((0.0, 1.0, 2.0), (1.0, 0.0, 2.0), (2.0, 2.0, 0.0))


@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_exact_matches_brute_force_for_every_objective(n_pms, n_vms, seed):
    inst = random_placement_instance(n_pms, n_vms, seed)
    pms, cost = placement_oracle(inst)
    if pms == float("inf"):
        with pytest.raises(InfeasibleError):
            solve_exact_placement(inst)
        return
    assert score_placement(inst, solve_exact_placement(inst, PMS_ONLY)).active_pms == pms
    assert pair(score_placement(inst, solve_exact_placement(inst, LEXICOGRAPHIC))) == (pms, cost)
    w = Weighted(3.0, 0.25)
    best_w = min(w.alpha * len(set(h)) + w.beta * network_cost(inst, h)
                 for h in itertools.product(range(n_pms), repeat=n_vms)
                 if check_placement(inst, Placement.from_hosts(h, n_pms)) == [])
    s = score_placement(inst, solve_exact_placement(inst, w))
    assert w.alpha * s.active_pms + w.beta * s.network_cost == pytest.approx(best_w)


@given(st.integers(2, 4), st.integers(1, 6), st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_relabelling_interchangeable_machines_keeps_the_score(n_pms, n_vms, seed):
    base = random_placement_instance(n_pms, n_vms, seed)
    # machines 0 and 1 made identical in capacity and in distance to everyone else
    res = [list(r) for r in base.pm_resources]
    res[1] = list(res[0])
    hops = [list(r) for r in base.pm_hops]
    for x in range(2, n_pms):
        hops[1][x] = hops[x][1] = hops[0][x]
    inst = PlacementInstance(res, base.vm_demands, base.resource_names, base.vm_traffic, hops)
    try:
        p = heuristic_ffd(inst)
    except InfeasibleError:
        return
    swapped = [{0: 1, 1: 0}.get(h, h) for h in p.hosts()]
    assert pair(score_placement(inst, p)) == pair(
        score_placement(inst, Placement.from_hosts(swapped, n_pms)))
