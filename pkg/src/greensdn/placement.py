"""VM consolidation: fewest powered-on physical machines, then least inter-VM traffic cost.

Network cost of a placement is ``sum_{u,v} q[u][v] * b[pm(u)][pm(v)]`` where
``q`` is the VM traffic matrix and ``b`` the switch count between physical
machines. Every entry of ``q`` is summed, so a symmetric matrix counts each
VM pair twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from greensdn.errors import ConstraintViolationError, InfeasibleError
from greensdn.model import CAPACITY_RTOL, Topology, Violation, within_capacity
from greensdn.paths import hop_distances

PMS_ONLY = "pms"
LEXICOGRAPHIC = "lex"
COST_RTOL = 1e-9


class Weighted(NamedTuple):
    alpha: float
    beta: float


Objective = Union[str, Weighted]


def _matrix(rows, ncols=None, name="matrix"):
    out = tuple(tuple(float(x) for x in row) for row in rows)
    for row in out:
        if ncols is not None and len(row) != ncols:
            raise ValueError(f"{name}: expected {ncols} columns, got {len(row)}")
        for x in row:
            if not (math.isfinite(x) and x >= 0):
                raise ValueError(f"{name}: entries must be finite and >= 0, got {x}")
    return out


@dataclass(frozen=True)
class PlacementInstance:
    pm_resources: tuple[tuple[float, ...], ...]   # |P| x |R|
    vm_demands: tuple[tuple[float, ...], ...]     # |V| x |R|
    resource_names: tuple[str, ...] = ("cpu",)
    vm_traffic: tuple[tuple[float, ...], ...] | None = None  # |V| x |V|
    pm_hops: tuple[tuple[float, ...], ...] | None = None     # |P| x |P|

    def __post_init__(self):
        r = len(self.resource_names)
        object.__setattr__(self, "resource_names", tuple(self.resource_names))
        object.__setattr__(self, "pm_resources", _matrix(self.pm_resources, r, "pm_resources"))
        object.__setattr__(self, "vm_demands", _matrix(self.vm_demands, r, "vm_demands"))
        nv, np_ = len(self.vm_demands), len(self.pm_resources)
        traffic = self.vm_traffic if self.vm_traffic is not None else [[0.0] * nv] * nv
        hops = self.pm_hops if self.pm_hops is not None else \
            [[0.0 if i == j else 1.0 for j in range(np_)] for i in range(np_)]
        traffic = _matrix(traffic, nv, "vm_traffic")
        hops = _matrix(hops, np_, "pm_hops")
        if len(traffic) != nv or len(hops) != np_:
            raise ValueError("vm_traffic must be |V|x|V| and pm_hops |P|x|P|")
        if any(traffic[j][j] != 0 for j in range(nv)):
            raise ValueError("vm_traffic diagonal must be zero")
        for i in range(np_):
            if hops[i][i] != 0:
                raise ValueError("pm_hops diagonal must be zero")
            for j in range(i):
                if hops[i][j] != hops[j][i]:
                    raise ValueError("pm_hops must be symmetric")
        object.__setattr__(self, "vm_traffic", traffic)
        object.__setattr__(self, "pm_hops", hops)

    @property
    def n_pms(self) -> int:
        return len(self.pm_resources)

    @property
    def n_vms(self) -> int:
        return len(self.vm_demands)


@dataclass(frozen=True)
class Placement:
    assignment: tuple[tuple[bool, ...], ...]  # |P| x |V|, X[i][j]: VM j on PM i
    pm_on: tuple[bool, ...]

    @classmethod
    def from_hosts(cls, hosts: Sequence[int], n_pms: int) -> "Placement":
        """Build from ``hosts[j]`` = PM of VM j, with the tight on/off closure."""
        x = [[hosts[j] == i for j in range(len(hosts))] for i in range(n_pms)]
        return cls(tuple(map(tuple, x)), tuple(any(row) for row in x))

    def hosts(self) -> list[int]:
        """PM index of each VM; requires every VM placed exactly once."""
        out = []
        for j in range(len(self.assignment[0]) if self.assignment else 0):
            (i,) = [i for i, row in enumerate(self.assignment) if row[j]]
            out.append(i)
        return out


@dataclass(frozen=True)
class PlacementScore:
    active_pms: int
    network_cost: float


def check_placement(inst: PlacementInstance, placement: Placement) -> list[Violation]:
    out = []
    x = placement.assignment
    if len(x) != inst.n_pms or any(len(row) != inst.n_vms for row in x) \
            or len(placement.pm_on) != inst.n_pms:
        return [Violation("shape", "placement", "matrix shapes do not match the instance")]
    for i in range(inst.n_pms):
        for r, name in enumerate(inst.resource_names):
            used = sum(inst.vm_demands[j][r] for j in range(inst.n_vms) if x[i][j])
            cap = inst.pm_resources[i][r]
            if not within_capacity(used, cap):
                out.append(Violation("pm-capacity", f"pm {i}",
                                     f"{name} demand {used:g} exceeds capacity {cap:g}"))
    for j in range(inst.n_vms):
        count = sum(1 for i in range(inst.n_pms) if x[i][j])
        if count != 1:
            out.append(Violation("vm-placed-once", f"vm {j}", f"placed on {count} machines, expected 1"))
    for i in range(inst.n_pms):
        hosting = any(x[i])
        if hosting and not placement.pm_on[i]:
            out.append(Violation("pm-power", f"pm {i}", "hosts a VM but is off"))
        elif placement.pm_on[i] and not hosting:
            out.append(Violation("pm-power", f"pm {i}", "is on but hosts no VM"))
    return out


def network_cost(inst: PlacementInstance, hosts: Sequence[int]) -> float:
    if not hosts:
        return 0.0
    q = np.asarray(inst.vm_traffic)
    b = np.asarray(inst.pm_hops)
    h = np.asarray(hosts)
    return float((q * b[np.ix_(h, h)]).sum())


def score_placement(inst: PlacementInstance, placement: Placement) -> PlacementScore:
    violations = check_placement(inst, placement)
    if violations:
        raise ConstraintViolationError(f"infeasible placement: {violations[0]}", violations)
    return PlacementScore(sum(placement.pm_on), network_cost(inst, placement.hosts()))


def _scalar_sizes(inst: PlacementInstance) -> list[float]:
    means = np.asarray(inst.pm_resources).mean(axis=0) if inst.n_pms else None
    sizes = []
    for row in inst.vm_demands:
        sizes.append(sum(d / m for d, m in zip(row, means) if m > 0))
    return sizes


def _decreasing(inst: PlacementInstance) -> list[int]:
    sizes = _scalar_sizes(inst)
    return sorted(range(inst.n_vms), key=lambda j: (-sizes[j], j))


def _fits(inst, used, i, j) -> bool:
    return all(within_capacity(used[i][r] + inst.vm_demands[j][r], inst.pm_resources[i][r])
               for r in range(len(inst.resource_names)))


def _unplaceable(inst: PlacementInstance) -> list[int]:
    zero = [[0.0] * len(inst.resource_names) for _ in range(inst.n_pms)]
    return [j for j in range(inst.n_vms)
            if not any(_fits(inst, zero, i, j) for i in range(inst.n_pms))]


def _sweep(inst: PlacementInstance, best_fit: bool) -> Placement:
    nr = len(inst.resource_names)
    means = np.asarray(inst.pm_resources).mean(axis=0) if inst.n_pms else []
    used = [[0.0] * nr for _ in range(inst.n_pms)]
    hosts = [-1] * inst.n_vms
    for j in _decreasing(inst):
        feasible = [i for i in range(inst.n_pms) if _fits(inst, used, i, j)]
        if not feasible:
            raise InfeasibleError(f"vm {j} fits on no physical machine", flows=[j],
                                  proven=j in _unplaceable(inst))
        if best_fit:
            def residual(i):
                return sum((inst.pm_resources[i][r] - used[i][r] - inst.vm_demands[j][r]) / means[r]
                           for r in range(nr) if means[r] > 0)
            target = min(feasible, key=lambda i: (residual(i), i))
        else:
            target = feasible[0]
        hosts[j] = target
        for r in range(nr):
            used[target][r] += inst.vm_demands[j][r]
    return Placement.from_hosts(hosts, inst.n_pms)


def heuristic_ffd(inst: PlacementInstance) -> Placement:
    """First Fit Decreasing: largest VM first, into the lowest-numbered machine with room."""
    return _sweep(inst, best_fit=False)


def heuristic_bfd(inst: PlacementInstance) -> Placement:
    """Best Fit Decreasing: largest VM first, into the machine left with the least slack."""
    return _sweep(inst, best_fit=True)


def _interchangeable(inst: PlacementInstance) -> list[list[int]]:
    """For each PM, the lower-numbered PMs it can swap labels with without changing any score."""
    res, hops = inst.pm_resources, inst.pm_hops
    n = inst.n_pms
    out = []
    for i in range(n):
        twins = []
        for k in range(i):
            if res[k] != res[i]:
                continue
            if all(hops[i][x] == hops[k][x] for x in range(n) if x not in (i, k)):
                twins.append(k)
        out.append(twins)
    return out


def solve_exact_placement(inst: PlacementInstance, objective: Objective = LEXICOGRAPHIC,
                          ) -> Placement:
    """Optimal placement by depth-first branch-and-bound.

    ``"pms"`` minimises active machines, ``"lex"`` then network cost among
    those, ``Weighted(a, b)`` minimises ``a * active + b * cost``.
    """
    if isinstance(objective, tuple) and not isinstance(objective, Weighted):
        objective = Weighted(*objective)
    if not isinstance(objective, Weighted) and objective not in (PMS_ONLY, LEXICOGRAPHIC):
        raise ValueError(f"unknown placement objective {objective!r}")
    if isinstance(objective, Weighted) and (objective.alpha < 0 or objective.beta < 0):
        raise ValueError("weights must be non-negative")
    nv, npm, nr = inst.n_vms, inst.n_pms, len(inst.resource_names)
    if nv == 0:
        return Placement(tuple(() for _ in range(npm)), tuple([False] * npm))
    stuck = _unplaceable(inst)
    if stuck:
        raise InfeasibleError(f"vm {stuck[0]} fits on no physical machine alone", flows=stuck)

    order = _decreasing(inst)
    cap = inst.pm_resources
    dem = inst.vm_demands
    q, b = inst.vm_traffic, inst.pm_hops
    twins = _interchangeable(inst)
    # remaining[d][r]: total demand of VMs order[d:]
    remaining = [[0.0] * nr for _ in range(nv + 1)]
    for d in range(nv - 1, -1, -1):
        for r in range(nr):
            remaining[d][r] = remaining[d + 1][r] + dem[order[d]][r]
    want_cost = objective != PMS_ONLY

    used = [[0.0] * nr for _ in range(npm)]
    load = [0] * npm
    hosts = [-1] * nv
    state = {"opened": 0, "cost": 0.0}
    best = {"key": None, "hosts": None}

    def key(opened, cost):
        if objective == PMS_ONLY:
            return (opened, 0.0)
        if objective == LEXICOGRAPHIC:
            return (opened, cost)
        return (objective.alpha * opened + objective.beta * cost, 0.0)

    def better(k, ref):
        if ref is None:
            return True
        if k[0] != ref[0]:
            return k[0] < ref[0] - COST_RTOL * abs(ref[0])
        return k[1] < ref[1] - COST_RTOL * abs(ref[1])

    def extra_pms(depth) -> int:
        need = 0
        for r in range(nr):
            deficit = remaining[depth][r] - sum(cap[i][r] - used[i][r] for i in range(npm) if load[i])
            if deficit <= CAPACITY_RTOL * max(1.0, remaining[depth][r]):
                continue
            spare = sorted((cap[i][r] for i in range(npm) if not load[i]), reverse=True)
            got, k = 0.0, 0
            while got < deficit * (1 - CAPACITY_RTOL) and k < len(spare):
                got += spare[k]
                k += 1
            if got < deficit * (1 - CAPACITY_RTOL):
                return npm + 1
            need = max(need, k)
        return need

    def search(depth):
        if depth == nv:
            k = key(state["opened"], state["cost"])
            if better(k, best["key"]):
                best["key"], best["hosts"] = k, list(hosts)
            return
        lb_pms = state["opened"] + extra_pms(depth)
        if lb_pms > npm:
            return
        if best["key"] is not None and not better(key(lb_pms, state["cost"]), best["key"]):
            return
        j = order[depth]
        for i in range(npm):
            if not load[i] and any(not load[k] for k in twins[i]):
                continue
            if not _fits(inst, used, i, j):
                continue
            delta = 0.0
            if want_cost:
                for d in range(depth):
                    u = order[d]
                    delta += (q[u][j] + q[j][u]) * b[hosts[d]][i]
            for r in range(nr):
                used[i][r] += dem[j][r]
            if not load[i]:
                state["opened"] += 1
            load[i] += 1
            hosts[depth] = i
            state["cost"] += delta
            search(depth + 1)
            state["cost"] -= delta
            load[i] -= 1
            if not load[i]:
                state["opened"] -= 1
            for r in range(nr):
                used[i][r] -= dem[j][r]

    search(0)
    if best["hosts"] is None:
        raise InfeasibleError("no placement respects every machine's capacity",
                              flows=list(range(nv)))
    by_vm = [0] * nv
    for d, i in enumerate(best["hosts"]):
        by_vm[order[d]] = i
    return Placement.from_hosts(by_vm, npm)


def pm_hops_from_topology(t: Topology, pm_switch: Sequence[int]) -> tuple[tuple[float, ...], ...]:
    """Switches traversed between each pair of PMs attached at ``pm_switch``.

    Counts switches on a hop-shortest path with both attachment switches
    included; distinct PMs on the same switch are 1 apart, a PM from itself 0.
    """
    dist = {}
    out = []
    for i, a in enumerate(pm_switch):
        row = []
        for j, c in enumerate(pm_switch):
            if i == j:
                row.append(0.0)
                continue
            if c not in dist:
                dist[c] = hop_distances(t.adjacency, c)
            h = dist[c][a]
            if h == math.inf:
                raise ValueError(f"pm {i} and pm {j} are not connected")
            row.append(float(h + 1))
        out.append(tuple(row))
    return tuple(out)
