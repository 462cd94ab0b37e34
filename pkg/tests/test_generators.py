import itertools
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from greensdn.generators import (
    FAT_TREE,
    GeneratorSpec,
    Locality,
    generate_flows,
    generate_topology,
    random_flows,
    random_placement_instance,
    random_topology,
)
from greensdn.instance_io import Instance, serialize
from greensdn.model import validate_topology

GOLDEN_PAIRS = [(14, 18), (16, 18), (12, 17), (13, 19)]


def count_fat_tree(k):
    """Element counts of a k-ary fat-tree from its textbook description."""
    pods, half = k, k // 2
    switches = half * half + pods * k
    core_links = half * half * pods
    pod_links = pods * half * half
    hosts = pods * half * half
    return switches, core_links + pod_links, hosts


@pytest.mark.parametrize("k", [2, 4, 6, 8])
def test_fat_tree_counts(k):
    t = generate_topology(GeneratorSpec(FAT_TREE, k))
    assert validate_topology(t) == []
    switches, links, hosts = count_fat_tree(k)
    assert (len(t.switches), len(t.edges), len(t.ingress_hosts)) == (switches, links, hosts)
    assert t.is_fat_tree


def test_fat_tree_four_layout():
    t = generate_topology(GeneratorSpec.parse("fat-tree:4"))
    assert (len(t.switches), len(t.edges), len(t.ingress_hosts)) == (20, 32, 16)
    # 32 switch links plus 16 host access links
    assert len(t.edges) + len(t.ingress_hosts) == 48
    layers = Counter(s.layer for s in t.switches)
    assert layers == {"core": 4, "aggregation": 8, "edge": 8}
    degree = Counter(x for e in t.edges for x in (e.u, e.v))
    for s in t.switches:
        assert degree[s.id] == (4 if s.layer == "core" else (4 if s.layer == "aggregation" else 2))
    # every core reaches every pod exactly once
    for c in range(4):
        pods = sorted(t.switches[w].pod for w in t.adjacency[c])
        assert pods == [0, 1, 2, 3]
    assert Counter(t.ingress_hosts.values()) == {e: 2 for e in range(12, 20)}


def test_ring_and_mesh():
    ring = generate_topology(GeneratorSpec.parse("ring:3"))
    assert [(e.u, e.v) for e in ring.edges] == [(0, 1), (0, 2), (1, 2)]
    mesh = generate_topology(GeneratorSpec.parse("mesh:5"))
    assert len(mesh.edges) == 10
    assert not mesh.is_fat_tree


@pytest.mark.parametrize("text", ["fat-tree:3", "ring:2", "torus:4", "ring", "ring:x"])
def test_bad_generator_specs(text):
    with pytest.raises(ValueError):
        GeneratorSpec.parse(text)


def test_locality_constraints():
    t = generate_topology(GeneratorSpec(FAT_TREE, 4))
    pod = {s.id: s.pod for s in t.switches}
    for f in generate_flows(t, 8, 0.1, Locality.CROSS_POD, 3):
        assert pod[f.source] != pod[f.destination]
    for f in generate_flows(t, 8, 0.1, Locality.INTRA_POD, 3):
        assert pod[f.source] == pod[f.destination]
        assert f.source != f.destination
    with pytest.raises(ValueError):
        generate_flows(generate_topology(GeneratorSpec.parse("ring:4")), 2, 0.1, "cross-pod")


def test_flow_rate_is_fraction_of_narrowest_link():
    t = generate_topology(GeneratorSpec(FAT_TREE, 4, bandwidth=10.0))
    assert {f.rate for f in generate_flows(t, 5, 0.25, seed=1)} == {2.5}
    with pytest.raises(ValueError):
        generate_flows(t, 1, 1.5)


def test_hosts_are_not_reused_while_fresh_ones_remain():
    t = generate_topology(GeneratorSpec(FAT_TREE, 4))
    # 8 flows use 16 endpoints; with 2 hosts per edge switch each switch appears twice
    flows = generate_flows(t, 8, 0.1, "cross-pod", 11)
    ends = Counter(s for f in flows for s in (f.source, f.destination))
    assert max(ends.values()) <= 2


@given(st.integers(0, 2**63), st.sampled_from(list(Locality)))
@settings(max_examples=30, deadline=None)
def test_generators_reproduce_bitwise(seed, locality):
    t = generate_topology(GeneratorSpec(FAT_TREE, 4))
    a = serialize(Instance(t, generate_flows(t, 10, 0.3, locality, seed)))
    b = serialize(Instance(t, generate_flows(t, 10, 0.3, locality, seed)))
    assert a == b
    r1 = serialize(Instance(random_topology(6, seed), random_flows(random_topology(6, seed), 3, seed),
                            random_placement_instance(3, 4, seed)))
    r2 = serialize(Instance(random_topology(6, seed), random_flows(random_topology(6, seed), 3, seed),
                            random_placement_instance(3, 4, seed)))
    assert r1 == r2


def test_golden_flow_sample():
    # pinned so that a change in the PRNG or the sampler is noticed
    t = generate_topology(GeneratorSpec(FAT_TREE, 4))
    flows = generate_flows(t, 4, 0.05, "cross-pod", 4)
    assert [(f.source, f.destination) for f in flows] == GOLDEN_PAIRS


@given(st.integers(2, 9), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_random_topologies_are_connected_and_valid(n, seed):
    t = random_topology(n, seed)
    assert validate_topology(t) == []
    seen, stack = {0}, [0]
    while stack:
        for w in t.adjacency[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    assert len(seen) == n
    assert all(1 <= s.rule_capacity <= 4 for s in t.switches)
    for f in random_flows(t, 4, seed):
        assert f.source != f.destination and 1 <= f.rate <= 6


def test_random_placement_shapes():
    inst = random_placement_instance(3, 5, 2)
    assert len(inst.pm_resources) == 3 and len(inst.vm_demands) == 5
    assert all(inst.pm_hops[i][j] == inst.pm_hops[j][i] for i, j in itertools.product(range(3), repeat=2))

