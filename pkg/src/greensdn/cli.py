"""greensdn command line.

Exit codes: 0 success, 1 infeasible instance or failed verification,
2 malformed input or flags, 3 search budget ran out before optimality was
proven (the incumbent is still reported).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from greensdn import placement as pl
from greensdn import rules as ru
from greensdn import traffic as tr
from greensdn.errors import BudgetExhaustedError, InfeasibleError, InstanceParseError
from greensdn.generators import GeneratorSpec, Locality, generate_flows, generate_topology, \
    random_placement_instance
from greensdn.instance_io import Instance, parse_instance, parse_sndlib, write_instance
from greensdn.model import FlowRouting, NetworkState, ObjectiveMode, check_traffic_constraints
from greensdn.paths import shortest_path

SCHEMA = "greensdn.report/1"

TRAFFIC_SOLVERS = ["exact", "greedy-binpack", *[o.value for o in tr.PathOrder], "topology-aware"]
RULE_SOLVERS = ["exact", "shortest-admissible"]
PLACEMENT_SOLVERS = ["exact", "ffd", "bfd"]

EXIT_OK, EXIT_INFEASIBLE, EXIT_MALFORMED, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load(path) -> Instance:
    try:
        return parse_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read instance: {exc}") from None


def _budget(args) -> tr.SolverBudget:
    return tr.SolverBudget(max_nodes=args.budget_nodes, k_paths=args.k_paths)


def _placement_objective(text: str):
    if text in (pl.PMS_ONLY, pl.LEXICOGRAPHIC):
        return text
    if text.startswith("weighted:"):
        try:
            a, b = (float(x) for x in text.split(":", 1)[1].split(","))
        except ValueError:
            raise UsageError(f"bad weighted objective {text!r}; use weighted:A,B") from None
        return pl.Weighted(a, b)
    raise UsageError(f"unknown objective {text!r}")


def _load_factor(inst: Instance) -> float:
    if not inst.flows or not inst.topology.edges:
        return 0.0
    return max(f.rate for f in inst.flows) / min(e.bandwidth for e in inst.topology.edges)


def run_traffic_solver(inst: Instance, solver: str, mode: ObjectiveMode,
                       budget: tr.SolverBudget) -> tr.TrafficSolution:
    t, flows = inst.topology, list(inst.flows)
    if solver == "exact":
        return tr.solve_exact_traffic(t, flows, mode, budget)
    if solver == "greedy-binpack":
        return tr.heuristic_greedy_binpack(t, flows, mode, budget.k_paths)
    if solver == "topology-aware":
        return tr.heuristic_fattree_topology_aware(t, flows, mode, budget.k_paths)
    if solver in {o.value for o in tr.PathOrder}:
        return tr.heuristic_path_first(t, flows, mode, tr.PathOrder(solver), budget.k_paths)
    raise UsageError(f"unknown traffic solver {solver!r}")


def traffic_report(inst, solver, params, mode, sol: tr.TrafficSolution, elapsed):
    t = inst.topology
    sav = tr.savings_report(t, list(inst.flows), sol, mode)
    return {
        "schema": SCHEMA,
        "problem": "traffic",
        "instance_digest": inst.digest(),
        "solver": {"name": solver, "params": params},
        "mode": mode.value,
        "objective": sol.objective,
        "baseline": sav.baseline_watts,
        "savings_fraction": sav.savings_fraction,
        "per_layer": {k: {"baseline": b, "optimized": o} for k, (b, o) in sav.per_layer.items()},
        "wall_time_s": elapsed,
        "optimality": sol.optimality,
        "switches": [{"id": i, "on": on} for i, on in enumerate(sol.state.switch_on)],
        "links": [{"edge": e, "u": t.edges[e].u, "v": t.edges[e].v, "active": a, "used": u}
                  for e, (a, u) in enumerate(zip(sol.state.link_active, sol.state.link_used))],
        "routing": {str(fid): list(p) for fid, p in sol.routing.paths.items()},
    }


def rules_baseline(inst: Instance) -> int:
    """Rules needed on plain shortest paths, table sizes ignored."""
    total = 0
    for f in inst.flows:
        p = shortest_path(inst.topology, f.source, f.destination)
        if p is None:
            raise InfeasibleError(f"flow {f.id}: destination unreachable", flows=[f.id])
        total += len(p)
    return total


def rules_report(inst, solver, params, sol: ru.RuleSolution, elapsed):
    t = inst.topology
    base = rules_baseline(inst)
    alloc = sol.allocation
    return {
        "schema": SCHEMA,
        "problem": "rules",
        "instance_digest": inst.digest(),
        "solver": {"name": solver, "params": params},
        "mode": None,
        "objective": sol.total_rules,
        "baseline": base,
        "savings_fraction": 1.0 - sol.total_rules / base if base > 0 else 0.0,
        "wall_time_s": elapsed,
        "optimality": sol.optimality,
        "switches": [{"id": s.id, "rules": alloc.rules_on(s.id), "capacity": s.rule_capacity}
                     for s in t.switches],
        "links": [{"edge": e, "u": t.edges[e].u, "v": t.edges[e].v, "active": a}
                  for e, a in enumerate(alloc.link_state)],
        "routing": {str(fid): list(p) for fid, p in alloc.routing.paths.items()},
    }


def placement_value(score: pl.PlacementScore, objective) -> float:
    if isinstance(objective, pl.Weighted):
        return objective.alpha * score.active_pms + objective.beta * score.network_cost
    return float(score.active_pms)


def placement_report(inst, solver, params, objective, placement: pl.Placement, elapsed):
    p = inst.placement
    score = pl.score_placement(p, placement)
    return {
        "schema": SCHEMA,
        "problem": "placement",
        "instance_digest": inst.digest(),
        "solver": {"name": solver, "params": params},
        "mode": None,
        "objective": placement_value(score, objective),
        "active_pms": score.active_pms,
        "network_cost": score.network_cost,
        "baseline": p.n_pms,
        "savings_fraction": 1.0 - score.active_pms / p.n_pms if p.n_pms else 0.0,
        "wall_time_s": elapsed,
        "optimality": "exact" if solver == "exact" else solver,
        "pms": [{"id": i, "on": on} for i, on in enumerate(placement.pm_on)],
        "assignment": {str(j): i for j, i in enumerate(placement.hosts())},
    }


def _timed(fn, deterministic):
    start = time.perf_counter()
    out = fn()
    return out, (None if deterministic else round(time.perf_counter() - start, 6))


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["load_factor", "solver", "savings"])
        for row in rows:
            writer.writerow(row)


def cmd_gen(args):
    if args.sndlib:
        if args.switch_watts is None or args.link_watts is None:
            raise UsageError("SNDlib import needs explicit --switch-watts and --link-watts")
        try:
            text = Path(args.sndlib).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read SNDlib file: {exc}") from None
        inst = parse_sndlib(text, args.switch_watts, args.link_watts, args.rule_capacity or 1000)
    else:
        defaults = {k: v for k, v in (("switch_watts", args.switch_watts),
                                      ("link_watts", args.link_watts),
                                      ("bandwidth", args.bandwidth),
                                      ("rule_capacity", args.rule_capacity)) if v is not None}
        try:
            spec = GeneratorSpec.parse(args.topology, seed=args.seed, **defaults)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        t = generate_topology(spec)
        try:
            flows = generate_flows(t, args.flows, args.rate_fraction, Locality(args.locality),
                                   args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        placement = None
        if args.placement:
            try:
                n_pms, n_vms = (int(x) for x in args.placement.split(","))
            except ValueError:
                raise UsageError("--placement takes PMS,VMS") from None
            placement = random_placement_instance(n_pms, n_vms, args.seed)
        inst = Instance(t, tuple(flows), placement)
    write_instance(inst, args.out)
    _emit({"schema": SCHEMA, "written": str(args.out), "instance_digest": inst.digest(),
           "switches": len(inst.topology.switches), "links": len(inst.topology.edges),
           "hosts": len(set(inst.topology.ingress_hosts) | set(inst.topology.egress_hosts)),
           "flows": len(inst.flows)})
    return EXIT_OK


def cmd_solve_traffic(args):
    inst = _load(args.instance)
    mode = ObjectiveMode(args.mode)
    budget = _budget(args)
    sol, elapsed = _timed(lambda: run_traffic_solver(inst, args.solver, mode, budget),
                          args.deterministic)
    params = {"budget_nodes": budget.max_nodes, "k_paths": budget.k_paths}
    report = traffic_report(inst, args.solver, params, mode, sol, elapsed)
    _emit(report)
    if args.csv:
        _write_csv(args.csv, [(_load_factor(inst), args.solver, report["savings_fraction"])])
    if args.solver == "exact" and not sol.is_exact:
        return EXIT_BUDGET
    return EXIT_OK


def cmd_solve_rules(args):
    inst = _load(args.instance)
    budget = _budget(args)
    if args.solver == "exact":
        fn = lambda: ru.solve_exact_rules(inst.topology, list(inst.flows), budget)  # noqa: E731
    elif args.solver == "shortest-admissible":
        fn = lambda: ru.heuristic_shortest_admissible(inst.topology, list(inst.flows))  # noqa: E731
    else:
        raise UsageError(f"unknown rules solver {args.solver!r}")
    sol, elapsed = _timed(fn, args.deterministic)
    params = {"budget_nodes": budget.max_nodes, "k_paths": budget.k_paths}
    _emit(rules_report(inst, args.solver, params, sol, elapsed))
    if args.solver == "exact" and not sol.is_exact:
        return EXIT_BUDGET
    return EXIT_OK


def _placement_solver(inst, solver, objective):
    p = inst.placement
    if p is None:
        raise UsageError("instance has no PLACEMENT section")
    if solver == "exact":
        return pl.solve_exact_placement(p, objective)
    if solver == "ffd":
        return pl.heuristic_ffd(p)
    if solver == "bfd":
        return pl.heuristic_bfd(p)
    raise UsageError(f"unknown placement solver {solver!r}")


def _objective_label(objective):
    if isinstance(objective, pl.Weighted):
        return f"weighted:{objective.alpha!r},{objective.beta!r}"
    return objective


def cmd_solve_placement(args):
    inst = _load(args.instance)
    objective = _placement_objective(args.objective)
    placement, elapsed = _timed(lambda: _placement_solver(inst, args.solver, objective),
                                args.deterministic)
    params = {"objective": _objective_label(objective)}
    _emit(placement_report(inst, args.solver, params, objective, placement, elapsed))
    return EXIT_OK


def _gap(value, reference):
    if reference == 0:
        return 0.0 if value == 0 else None
    return (value - reference) / reference


def _rescaled(inst: Instance, factor: float) -> Instance:
    bw = min(e.bandwidth for e in inst.topology.edges)
    return replace(inst, flows=tuple(replace(f, rate=factor * bw) for f in inst.flows))


def cmd_compare(args):
    inst = _load(args.instance)
    csv_rows = []
    if args.problem == "traffic":
        mode = ObjectiveMode(args.mode)
        budget = _budget(args)
        solvers = [s for s in TRAFFIC_SOLVERS
                   if s != "topology-aware" or inst.topology.is_fat_tree]
        factors = [float(x) for x in args.load_factors.split(",")] if args.load_factors else [None]
        tables = []
        status = EXIT_OK
        for factor in factors:
            case = inst if factor is None else _rescaled(inst, factor)
            results = {}
            for s in sorted(solvers):
                try:
                    results[s] = run_traffic_solver(case, s, mode, budget)
                except InfeasibleError as exc:
                    results[s] = exc
            exact = results["exact"]
            if isinstance(exact, Exception):
                raise exact
            if not exact.is_exact:
                status = EXIT_BUDGET
            rows = []
            for s in sorted(results):
                sol = results[s]
                if isinstance(sol, Exception):
                    rows.append({"solver": s, "objective": None, "gap": None,
                                 "optimality": "infeasible", "savings_fraction": None})
                    continue
                sav = tr.savings_report(case.topology, list(case.flows), sol, mode)
                rows.append({"solver": s, "objective": sol.objective,
                             "gap": _gap(sol.objective, exact.objective),
                             "optimality": sol.optimality,
                             "savings_fraction": sav.savings_fraction})
                csv_rows.append((factor if factor is not None else _load_factor(case), s,
                                 sav.savings_fraction))
            tables.append({"load_factor": factor if factor is not None else _load_factor(case),
                           "rows": rows})
        payload = {"schema": SCHEMA, "problem": "traffic", "instance_digest": inst.digest(),
                   "mode": mode.value, "tables": tables}
    elif args.problem == "rules":
        budget = _budget(args)
        exact = ru.solve_exact_rules(inst.topology, list(inst.flows), budget)
        rows = []
        for s in RULE_SOLVERS:
            try:
                sol = exact if s == "exact" else ru.heuristic_shortest_admissible(
                    inst.topology, list(inst.flows))
            except InfeasibleError:
                rows.append({"solver": s, "objective": None, "gap": None,
                             "optimality": "infeasible"})
                continue
            rows.append({"solver": s, "objective": sol.total_rules,
                         "gap": _gap(sol.total_rules, exact.total_rules),
                         "optimality": sol.optimality})
        payload = {"schema": SCHEMA, "problem": "rules", "instance_digest": inst.digest(),
                   "mode": None, "tables": [{"load_factor": _load_factor(inst), "rows": rows}]}
        status = EXIT_OK if exact.is_exact else EXIT_BUDGET
    else:
        objective = _placement_objective(args.objective)
        exact = pl.score_placement(inst.placement, _placement_solver(inst, "exact", objective)) \
            if inst.placement is not None else None
        if exact is None:
            raise UsageError("instance has no PLACEMENT section")
        ref = placement_value(exact, objective)
        rows = []
        for s in PLACEMENT_SOLVERS:
            try:
                score = pl.score_placement(inst.placement,
                                           _placement_solver(inst, s, objective))
            except InfeasibleError:
                rows.append({"solver": s, "objective": None, "gap": None,
                             "optimality": "infeasible"})
                continue
            value = placement_value(score, objective)
            rows.append({"solver": s, "objective": value, "gap": _gap(value, ref),
                         "active_pms": score.active_pms, "network_cost": score.network_cost,
                         "optimality": "exact" if s == "exact" else s})
        payload = {"schema": SCHEMA, "problem": "placement", "instance_digest": inst.digest(),
                   "mode": None, "objective": _objective_label(objective),
                   "tables": [{"load_factor": None, "rows": rows}]}
        status = EXIT_OK
    _emit(payload)
    if args.csv:
        _write_csv(args.csv, csv_rows)
    return status


def verify_report(inst: Instance, report: dict) -> list[dict]:
    """Re-run the constraint checkers on a report produced by one of the solve commands."""
    problem = report.get("problem")
    t, flows = inst.topology, list(inst.flows)
    if report.get("instance_digest") not in (None, inst.digest()):
        return [{"code": "digest", "element": "report",
                 "detail": "report was produced for a different instance"}]
    if problem == "traffic":
        routing = FlowRouting({int(k): tuple(v) for k, v in report["routing"].items()})
        switch_on = [False] * t.n_switches
        for s in report["switches"]:
            switch_on[s["id"]] = bool(s["on"])
        active = [False] * len(t.edges)
        used = [False] * len(t.edges)
        for link in report["links"]:
            active[link["edge"]] = bool(link["active"])
            used[link["edge"]] = bool(link.get("used", link["active"]))
        state = NetworkState(tuple(switch_on), tuple(active), tuple(used))
        found = check_traffic_constraints(t, flows, routing, state)
        out = [vars(v) for v in found]
        if not found and report.get("mode"):
            from greensdn.model import traffic_objective_terms
            value = sum(traffic_objective_terms(t, flows, routing, state,
                                                ObjectiveMode(report["mode"])))
            if abs(value - report["objective"]) > 1e-9 * max(1.0, abs(value)):
                out.append({"code": "objective", "element": "report",
                            "detail": f"reported {report['objective']} but routing costs {value}"})
        return out
    if problem == "rules":
        paths = {int(k): tuple(v) for k, v in report["routing"].items()}
        alloc = ru.allocation_from_paths(t, flows, paths) if all(
            fid in paths for fid in (f.id for f in flows)) else None
        if alloc is None:
            return [{"code": "path-endpoints", "element": "routing", "detail": "a flow is not routed"}]
        active = [False] * len(t.edges)
        for link in report["links"]:
            active[link["edge"]] = bool(link["active"])
        alloc = replace(alloc, link_state=tuple(active))
        out = [vars(v) for v in ru.check_rule_constraints(t, flows, alloc)]
        total = sum(len(p) for p in paths.values())
        if total != report["objective"]:
            out.append({"code": "rule-count", "element": "report",
                        "detail": f"reported {report['objective']} rules, routing needs {total}"})
        return out
    if problem == "placement":
        p = inst.placement
        if p is None:
            return [{"code": "shape", "element": "instance", "detail": "no PLACEMENT section"}]
        hosts = report["assignment"]
        x = [[hosts.get(str(j)) == i for j in range(p.n_vms)] for i in range(p.n_pms)]
        pm_on = [False] * p.n_pms
        for row in report["pms"]:
            pm_on[row["id"]] = bool(row["on"])
        placement = pl.Placement(tuple(map(tuple, x)), tuple(pm_on))
        return [vars(v) for v in pl.check_placement(p, placement)]
    raise UsageError(f"unknown problem {problem!r} in solution file")


def cmd_verify(args):
    inst = _load(args.instance)
    try:
        report = json.loads(Path(args.solution).read_text())
        violations = verify_report(inst, report)
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise UsageError(f"malformed solution file: {exc}") from None
    _emit({"schema": SCHEMA, "ok": not violations, "violations": violations})
    return EXIT_OK if not violations else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greensdn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, budget=True):
        p.add_argument("--instance", required=True, help="native instance file")
        p.add_argument("--deterministic", action="store_true",
                       help="omit wall-clock timings so reports are byte-stable")
        p.add_argument("--seed", type=int, default=0)
        if budget:
            p.add_argument("--budget-nodes", type=int, default=tr.SolverBudget.max_nodes)
            p.add_argument("--k-paths", type=int, default=tr.SolverBudget.k_paths)

    g = sub.add_parser("gen", help="generate or import an instance")
    g.add_argument("--topology", default="fat-tree:4", help="fat-tree:K, ring:N or full-mesh:N")
    g.add_argument("--sndlib", help="import an SNDlib native-format network instead")
    g.add_argument("--flows", type=int, default=0)
    g.add_argument("--rate-fraction", type=float, default=0.05)
    g.add_argument("--locality", choices=[l.value for l in Locality], default="uniform")
    g.add_argument("--placement", help="also generate a placement section: PMS,VMS")
    g.add_argument("--switch-watts", type=float)
    g.add_argument("--link-watts", type=float)
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--rule-capacity", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve-traffic", help="link/switch power minimisation")
    common(s)
    s.add_argument("--mode", choices=[m.value for m in ObjectiveMode], default="per-flow-link")
    s.add_argument("--solver", choices=TRAFFIC_SOLVERS, default="exact")
    s.add_argument("--csv", help="write load_factor,solver,savings rows here")
    s.set_defaults(func=cmd_solve_traffic)

    s = sub.add_parser("solve-placement", help="VM consolidation")
    common(s, budget=False)
    s.add_argument("--objective", default="lex", help="pms, lex or weighted:A,B")
    s.add_argument("--solver", choices=PLACEMENT_SOLVERS, default="exact")
    s.set_defaults(func=cmd_solve_placement)

    s = sub.add_parser("solve-rules", help="rule-count minimisation")
    common(s)
    s.add_argument("--solver", choices=RULE_SOLVERS, default="exact")
    s.set_defaults(func=cmd_solve_rules)

    s = sub.add_parser("compare", help="exact solver against every heuristic")
    common(s)
    s.add_argument("--problem", choices=["traffic", "rules", "placement"], default="traffic")
    s.add_argument("--mode", choices=[m.value for m in ObjectiveMode], default="per-flow-link")
    s.add_argument("--objective", default="lex")
    s.add_argument("--load-factors", help="comma-separated flow rates as fractions of bandwidth")
    s.add_argument("--csv", help="write load_factor,solver,savings rows here")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("verify", help="check a solution report against its instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--solution", required=True)
    s.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        _emit({"schema": SCHEMA, "error": "infeasible", "message": str(exc),
               "certificate": {"flows": list(exc.flows),
                               "saturated_edges": list(exc.saturated_edges),
                               "proven": exc.proven}})
        return EXIT_INFEASIBLE
    except BudgetExhaustedError as exc:
        _emit({"schema": SCHEMA, "error": "budget-exhausted", "message": str(exc)})
        return EXIT_BUDGET
    except (InstanceParseError, UsageError, ValueError) as exc:
        print(f"greensdn: error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
