"""Native instance files and SNDlib import.

Native format (version 1), canonical form as written by :func:`serialize`::

    GREENSDN-INSTANCE 1
    SWITCHES <n>
    <id> <power> <rule_capacity> <pod|-> <layer|->      (n lines, id order)
    EDGES <m>
    <u> <v> <bandwidth> <power>                         (m lines, file order)
    HOSTS <h>
    <host> <switch> <in|eg|both>                        (h lines, by host, then role)
    FLOWS <f>
    <id> <source> <destination> <rate>                  (f lines, id order)
    PLACEMENT <pms> <vms>                               (optional section)
    RESOURCES <name> ...
    PM <capacity per resource>                          (pms lines)
    VM <demand per resource>                            (vms lines)
    TRAFFIC <row of |V| rates>                          (vms lines)
    HOPS <row of |P| switch counts>                     (pms lines)
    END

Tokens are separated by one space, lines end with ``\\n``, floats are
written as the shortest decimal string that reads back to the same double
(Python ``repr``), integers in plain decimal. The parser also accepts blank
lines, ``#`` comments and runs of whitespace.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path

from greensdn.errors import InstanceParseError, UnsupportedVersionError
from greensdn.model import EdgeSpec, Flow, SwitchSpec, Topology, validate_topology
from greensdn.placement import PlacementInstance

MAGIC = "GREENSDN-INSTANCE"
VERSION = 1


@dataclass(frozen=True)
class Instance:
    topology: Topology
    flows: tuple[Flow, ...] = ()
    placement: PlacementInstance | None = None

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


def _num(x: float) -> str:
    return repr(float(x))


def serialize(inst: Instance) -> str:
    t = inst.topology
    lines = [f"{MAGIC} {VERSION}", f"SWITCHES {len(t.switches)}"]
    for s in t.switches:
        pod = "-" if s.pod is None else str(s.pod)
        lines.append(f"{s.id} {_num(s.power_cost)} {s.rule_capacity} {pod} {s.layer or '-'}")
    lines.append(f"EDGES {len(t.edges)}")
    for e in t.edges:
        lines.append(f"{e.u} {e.v} {_num(e.bandwidth)} {_num(e.power_cost)}")
    host_lines = []
    for host in sorted(set(t.ingress_hosts) | set(t.egress_hosts)):
        a, b = t.ingress_hosts.get(host), t.egress_hosts.get(host)
        if a is not None and a == b:
            host_lines.append(f"{host} {a} both")
            continue
        if b is not None:
            host_lines.append(f"{host} {b} eg")
        if a is not None:
            host_lines.append(f"{host} {a} in")
    lines.append(f"HOSTS {len(host_lines)}")
    lines.extend(host_lines)
    flows = sorted(inst.flows, key=lambda f: f.id)
    lines.append(f"FLOWS {len(flows)}")
    for f in flows:
        lines.append(f"{f.id} {f.source} {f.destination} {_num(f.rate)}")
    p = inst.placement
    if p is not None:
        lines.append(f"PLACEMENT {p.n_pms} {p.n_vms}")
        lines.append(" ".join(["RESOURCES", *p.resource_names]))
        for tag, rows in (("PM", p.pm_resources), ("VM", p.vm_demands),
                          ("TRAFFIC", p.vm_traffic), ("HOPS", p.pm_hops)):
            for row in rows:
                lines.append(" ".join([tag, *map(_num, row)]))
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(serialize(inst))


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for no, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0]
            tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", body)]
            if tokens:
                self.items.append((no, tokens))
        self.pos = 0
        self.last_line = len(text.splitlines())

    def next(self, expecting: str):
        if self.pos >= len(self.items):
            raise InstanceParseError(f"truncated file: missing {expecting}", self.last_line + 1)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def peek_keyword(self):
        if self.pos >= len(self.items):
            return None
        return self.items[self.pos][1][0][0]


def _int(tok, line):
    text, col = tok
    try:
        return int(text)
    except ValueError:
        raise InstanceParseError(f"expected an integer, got {text!r}", line, col) from None


def _float(tok, line):
    text, col = tok
    try:
        x = float(text)
    except ValueError:
        raise InstanceParseError(f"expected a number, got {text!r}", line, col) from None
    if not math.isfinite(x):
        raise InstanceParseError(f"non-finite number {text!r}", line, col)
    return x


def _expect_fields(tokens, n, line, what):
    if len(tokens) != n:
        col = tokens[min(len(tokens), n) - 1][1] if tokens else 1
        raise InstanceParseError(f"{what}: expected {n} fields, got {len(tokens)}", line, col)


def _header(lines: _Lines, keyword: str, n_values: int = 1):
    line, tokens = lines.next(f"{keyword} section")
    if tokens[0][0] != keyword:
        raise InstanceParseError(f"expected {keyword} section, got {tokens[0][0]!r}",
                                 line, tokens[0][1])
    _expect_fields(tokens, 1 + n_values, line, keyword)
    return [_int(tok, line) for tok in tokens[1:]]


def parse_text(text: str) -> Instance:
    lines = _Lines(text)
    line, tokens = lines.next("header")
    if tokens[0][0] != MAGIC:
        raise InstanceParseError(f"not a {MAGIC} file", line, tokens[0][1])
    _expect_fields(tokens, 2, line, "header")
    version = _int(tokens[1], line)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported instance version {version}", line, tokens[1][1])

    (n,) = _header(lines, "SWITCHES")
    switches, where = [], {}
    for _ in range(n):
        line, tok = lines.next("switch line")
        where[f"switch {tok[0][0]}"] = line
        _expect_fields(tok, 5, line, "switch")
        pod = None if tok[3][0] == "-" else _int(tok[3], line)
        layer = None if tok[4][0] == "-" else tok[4][0]
        switches.append(SwitchSpec(_int(tok[0], line), _float(tok[1], line),
                                   _int(tok[2], line), pod, layer))
    (m,) = _header(lines, "EDGES")
    edges = []
    for _ in range(m):
        line, tok = lines.next("edge line")
        where[f"edge {len(edges)}"] = line
        _expect_fields(tok, 4, line, "edge")
        edges.append(EdgeSpec(_int(tok[0], line), _int(tok[1], line),
                              _float(tok[2], line), _float(tok[3], line)))
    (h,) = _header(lines, "HOSTS")
    ingress, egress = {}, {}
    for _ in range(h):
        line, tok = lines.next("host line")
        _expect_fields(tok, 3, line, "host")
        name, sw, role = tok[0][0], _int(tok[1], line), tok[2][0]
        where[f"host {name}"] = line
        if role not in ("in", "eg", "both"):
            raise InstanceParseError(f"host role must be in/eg/both, got {role!r}", line, tok[2][1])
        if role in ("in", "both"):
            ingress[name] = sw
        if role in ("eg", "both"):
            egress[name] = sw
    (nf,) = _header(lines, "FLOWS")
    flows = []
    for _ in range(nf):
        line, tok = lines.next("flow line")
        _expect_fields(tok, 4, line, "flow")
        try:
            flows.append(Flow(_int(tok[0], line), _int(tok[1], line), _int(tok[2], line),
                              _float(tok[3], line)))
            where[f"flow {flows[-1].id}"] = line
        except ValueError as exc:
            if isinstance(exc, InstanceParseError):
                raise
            raise InstanceParseError(str(exc), line, 1) from None

    placement = None
    if lines.peek_keyword() == "PLACEMENT":
        n_pms, n_vms = _header(lines, "PLACEMENT", 2)
        line, tok = lines.next("RESOURCES line")
        if tok[0][0] != "RESOURCES":
            raise InstanceParseError("expected RESOURCES line", line, tok[0][1])
        names = tuple(t[0] for t in tok[1:])
        rows = {}
        for tag, count, width in (("PM", n_pms, len(names)), ("VM", n_vms, len(names)),
                                  ("TRAFFIC", n_vms, n_vms), ("HOPS", n_pms, n_pms)):
            rows[tag] = []
            for _ in range(count):
                line, tok = lines.next(f"{tag} line")
                if tok[0][0] != tag:
                    raise InstanceParseError(f"expected {tag} line", line, tok[0][1])
                _expect_fields(tok, 1 + width, line, tag)
                rows[tag].append([_float(x, line) for x in tok[1:]])
        try:
            placement = PlacementInstance(rows["PM"], rows["VM"], names,
                                          rows["TRAFFIC"], rows["HOPS"])
        except ValueError as exc:
            raise InstanceParseError(f"invalid placement section: {exc}", line) from None

    line, tok = lines.next("END marker")
    if tok[0][0] != "END":
        raise InstanceParseError(f"expected END, got {tok[0][0]!r}", line, tok[0][1])
    if lines.pos != len(lines.items):
        line, tok = lines.items[lines.pos]
        raise InstanceParseError("content after END", line, tok[0][1])
    topo = Topology(tuple(switches), tuple(edges), ingress, egress)
    problems = validate_topology(topo)
    if problems:
        first = problems[0]
        key = " ".join(first.element.replace("ingress ", "").replace("egress ", "")
                       .split()[:2])
        raise InstanceParseError(f"invalid topology: {first}", where.get(key))
    ids = set()
    for f in flows:
        if f.id in ids:
            raise InstanceParseError(f"duplicate flow id {f.id}", where[f"flow {f.id}"])
        ids.add(f.id)
        for end in (f.source, f.destination):
            if not 0 <= end < len(switches):
                raise InstanceParseError(f"flow {f.id} references missing switch {end}",
                                         where[f"flow {f.id}"])
    return Instance(topo, tuple(flows), placement)


def parse_instance(path) -> Instance:
    return parse_text(Path(path).read_text())


_SECTION = re.compile(r"^\s*(NODES|LINKS|DEMANDS|META|ADMISSIBLE_PATHS)\s*\(\s*$")
_NODE = re.compile(r"^\s*(\S+)\s*\(\s*([^)]*)\)\s*$")
_ENDPOINTS = re.compile(r"^\s*(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)\s*(.*)$")


def parse_sndlib(text: str, switch_watts: float, link_watts: float,
                 rule_capacity: int = 1000) -> Instance:
    """Import the plain-text SNDlib network subset: NODES, LINKS, DEMANDS.

    Nodes become switches (file order) with one host each, named after the
    node. Link bandwidth is the pre-installed capacity, or the largest module
    capacity when nothing is pre-installed; parallel links between the same
    pair are merged by adding their bandwidths. Demands with value 0 are
    dropped, the rest become flows in file order.
    """
    if switch_watts < 0 or link_watts < 0:
        raise ValueError("power costs must be non-negative")
    section = None
    names: list[str] = []
    index: dict[str, int] = {}
    links: dict[tuple[int, int], float] = {}
    flows = []
    seen_sections = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip() or body.lstrip().startswith("?"):
            continue
        m = _SECTION.match(body)
        if m and section is None:
            section = m.group(1)
            seen_sections.add(section)
            continue
        if body.strip() == ")":
            if section is None:
                raise InstanceParseError("unbalanced ')'", no, body.index(")") + 1)
            section = None
            continue
        if section == "NODES":
            nm = _NODE.match(body)
            name = nm.group(1) if nm else body.split()[0]
            if name in index:
                raise InstanceParseError(f"duplicate node {name!r}", no, body.index(name) + 1)
            index[name] = len(names)
            names.append(name)
        elif section in ("LINKS", "DEMANDS"):
            em = _ENDPOINTS.match(body)
            if not em:
                raise InstanceParseError(f"malformed {section[:-1].lower()} line", no, 1)
            ident, a, b, rest = em.groups()
            for end in (a, b):
                if end not in index:
                    raise InstanceParseError(f"unknown node {end!r}", no, body.index(end) + 1)
            u, v = index[a], index[b]
            rest_tokens = rest.replace("(", " ").replace(")", " ").split()
            try:
                values = [float(x) for x in rest_tokens if x != "UNLIMITED"]
            except ValueError:
                raise InstanceParseError(f"non-numeric field in {ident!r}", no, 1) from None
            if section == "LINKS":
                if u == v:
                    raise InstanceParseError(f"link {ident!r} is a self-loop", no, 1)
                if len(values) < 4:
                    raise InstanceParseError(f"link {ident!r}: too few fields", no, 1)
                capacity = values[0] if values[0] > 0 else max(values[4::2], default=0.0)
                if capacity <= 0:
                    raise InstanceParseError(f"link {ident!r} has no capacity", no, 1)
                key = (min(u, v), max(u, v))
                links[key] = links.get(key, 0.0) + capacity
            else:
                if len(values) < 2:
                    raise InstanceParseError(f"demand {ident!r}: too few fields", no, 1)
                if u == v:
                    raise InstanceParseError(f"demand {ident!r} starts and ends at one node", no, 1)
                if values[1] > 0:
                    flows.append(Flow(len(flows), u, v, values[1]))
        # META / ADMISSIBLE_PATHS bodies are ignored
    if section is not None:
        raise InstanceParseError(f"truncated file: {section} section is not closed",
                                 len(text.splitlines()) + 1)
    for needed in ("NODES", "LINKS"):
        if needed not in seen_sections:
            raise InstanceParseError(f"missing {needed} section")
    switches = tuple(SwitchSpec(i, switch_watts, rule_capacity) for i in range(len(names)))
    edges = tuple(EdgeSpec(u, v, bw, link_watts) for (u, v), bw in sorted(links.items()))
    hosts = {name: i for i, name in enumerate(names)}
    return Instance(Topology(switches, edges, hosts, hosts), tuple(flows))
