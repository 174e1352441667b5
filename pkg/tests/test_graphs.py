import itertools
import random

import pytest

from tautring.graphs import (
    InvalidGraphError,
    StableGraph,
    automorphism_count,
    canonical_graph,
    contract_edge,
    edge_profile,
    enumerate_stable_graphs,
    graph_from_json,
    graph_to_json,
    one_edge_degenerations,
    relabel_legs,
    stable_graph,
    trivial_graph,
)


def test_validate_examples():
    g = stable_graph((1,), (0,), ())
    assert g.genus == 1 and g.n_legs == 1
    loop = stable_graph((0,), (0,), ((0, 0),))
    assert loop.genus == 1
    with pytest.raises(InvalidGraphError):
        stable_graph((0,), (0, 0), ())


def test_validate_rejects_disconnected():
    with pytest.raises(InvalidGraphError):
        stable_graph((1, 1), (0, 1, 1), ())


def test_enumerate_small_spaces():
    assert len(enumerate_stable_graphs(0, 3, 5)) == 1
    assert len(enumerate_stable_graphs(1, 1, 1)) == 2
    assert len(enumerate_stable_graphs(0, 4, 1)) == 4
    with pytest.raises(InvalidGraphError):
        enumerate_stable_graphs(0, 2, 1)


def test_enumerate_deterministic_order():
    first = enumerate_stable_graphs(1, 2, 2)
    second = enumerate_stable_graphs(1, 2, 2)
    assert first == second
    edge_counts = [g.n_edges for g in first]
    assert edge_counts == sorted(edge_counts)


def _brute_force_graphs(g, n, max_edges, max_vertices):
    """Directly generate every labeled stable graph; exponential, test-only.

    The edge count is forced: E = g - sum(genera) + V - 1."""
    found = {}
    for nv in range(1, max_vertices + 1):
        slots = [(a, b) for a in range(nv) for b in range(a, nv)]
        for genera in itertools.product(range(g + 1), repeat=nv):
            ne = g - sum(genera) + nv - 1
            if ne < 0 or ne > max_edges:
                continue
            combos = list(itertools.combinations_with_replacement(slots, ne))
            for legs in itertools.product(range(nv), repeat=n):
                for combo in combos:
                    try:
                        graph = stable_graph(genera, legs, combo)
                    except InvalidGraphError:
                        continue
                    found[graph.canonical_key()] = graph
    return found


@pytest.mark.parametrize("g,n", [(0, 4), (1, 1), (0, 5), (1, 2), (2, 0),
                                 (0, 6), (1, 3), (2, 1), (1, 4)])
def test_enumeration_complete_against_brute_force(g, n):
    dim = 3 * g - 3 + n
    enumerated = {gr.canonical_key() for gr in enumerate_stable_graphs(g, n, dim)}
    brute = _brute_force_graphs(g, n, dim, dim + 1)
    assert set(brute) == enumerated


def test_known_stratum_counts():
    assert len(enumerate_stable_graphs(2, 0, 3)) == 7
    assert len(enumerate_stable_graphs(1, 2, 2)) == 5


def test_canonical_separates_leg_splits():
    k = {}
    for pair in ((1, 2), (1, 3), (1, 4)):
        legs = tuple(0 if i in pair else 1 for i in range(1, 5))
        k[pair] = stable_graph((0, 0), legs, ((0, 1),)).canonical_key()
    assert len(set(k.values())) == 3


def test_canonical_loop_presentation_invariance():
    a = stable_graph((0,), (0,), ((0, 0),))
    assert a.canonical_key() == canonical_graph(a).canonical_key()


def test_canonical_random_relabeling_oracle():
    rng = random.Random(41)
    base = stable_graph((0, 1, 1), (0, 0, 1), ((0, 1), (0, 2), (1, 2), (0, 0)))
    key = base.canonical_key()
    nv = base.n_vertices
    for _ in range(100):
        perm = list(range(nv))
        rng.shuffle(perm)
        genera = [0] * nv
        for old, new in enumerate(perm):
            genera[new] = base.genera[old]
        legs = tuple(perm[v] for v in base.legs)
        edges = []
        for a, b in base.edges:
            e = (perm[a], perm[b])
            edges.append(e if rng.random() < 0.5 else (e[1], e[0]))
        rng.shuffle(edges)
        relabeled = stable_graph(genera, legs, edges)
        assert relabeled.canonical_key() == key


def _brute_force_automorphisms(graph):
    """Count (vertex, half-edge) permutations preserving everything; only for
    graphs with few half-edges."""
    halves = [(e, s) for e in range(graph.n_edges) for s in (0, 1)]
    count = 0
    for image in itertools.permutations(halves):
        mapping = dict(zip(halves, image))
        ok = True
        vertex_map = {}
        for (e, s), (e2, s2) in mapping.items():
            # involution equivariance
            if mapping[(e, 1 - s)] != (e2, 1 - s2):
                ok = False
                break
            src = graph.edges[e][s]
            dst = graph.edges[e2][s2]
            if vertex_map.setdefault(src, dst) != dst:
                ok = False
                break
        if not ok:
            continue
        # extend over leg-only vertices; legs force the identity there
        for v in graph.legs:
            vertex_map.setdefault(v, v)
        if len(set(vertex_map.values())) != len(vertex_map):
            continue
        if any(vertex_map.get(v, v) != v for v in graph.legs):
            continue
        if any(graph.genera[src] != graph.genera[dst]
               for src, dst in vertex_map.items()):
            continue
        # leg multisets must be carried along
        legs_at = {v: graph.legs_at(v) for v in range(graph.n_vertices)}
        if any(legs_at[src] != legs_at[dst] for src, dst in vertex_map.items()):
            continue
        count += 1
    return count


def test_automorphism_examples():
    assert automorphism_count(trivial_graph(1, 1)) == 1
    loop = stable_graph((0,), (0,), ((0, 0),))
    assert automorphism_count(loop) == 2
    banana = stable_graph((0, 0), (1, 1, 1, 1, 0), ((0, 1), (0, 1)))
    assert automorphism_count(banana) == 2


def test_automorphisms_match_brute_force():
    for g, n in [(1, 1), (1, 2), (2, 0), (0, 4), (0, 5), (2, 1)]:
        for graph in enumerate_stable_graphs(g, n, 3 * g - 3 + n):
            if 2 * graph.n_edges > 6:
                continue
            assert automorphism_count(graph) == _brute_force_automorphisms(graph)


def test_automorphism_divides_half_edge_bound():
    import math
    for graph in enumerate_stable_graphs(2, 0, 3):
        bound = math.factorial(2 * graph.n_edges)
        assert bound % automorphism_count(graph) == 0


def test_contract_examples():
    d12 = stable_graph((0, 0), (0, 0, 1, 1), ((0, 1),))
    assert contract_edge(d12, 0).canonical_key() == trivial_graph(0, 4).canonical_key()
    loop = stable_graph((0,), (0,), ((0, 0),))
    assert contract_edge(loop, 0).canonical_key() == trivial_graph(1, 1).canonical_key()


def test_contract_preserves_genus_on_one_edge_graphs():
    for graph in enumerate_stable_graphs(2, 0, 1):
        for e in range(graph.n_edges):
            contracted = contract_edge(graph, e)
            assert contracted.genus == graph.genus
            assert contracted.n_legs == graph.n_legs


def test_degeneration_examples():
    assert len(one_edge_degenerations(trivial_graph(1, 1))) == 1
    assert len(one_edge_degenerations(trivial_graph(0, 4))) == 3
    assert len(one_edge_degenerations(trivial_graph(2, 0))) == 2


def test_degeneration_contract_round_trip():
    for g, n in [(1, 2), (2, 0), (0, 5)]:
        for graph in enumerate_stable_graphs(g, n, 2):
            for degen, e in one_edge_degenerations(graph):
                back = contract_edge(degen, e)
                assert back.canonical_key() == graph.canonical_key()


def test_edge_profile():
    d12 = stable_graph((0, 0), (0, 0, 1, 1), ((0, 1),))
    assert edge_profile(d12, 0) == ("sep", 0, (1, 2))
    loop = stable_graph((0,), (0,), ((0, 0),))
    assert edge_profile(loop, 0) == ("irr",)
    # side data includes cycle rank: a loop on one side adds genus; the
    # canonical side is the lexicographically smaller (genus, legs) pair
    g = stable_graph((0, 1), (0, 0), ((0, 0), (0, 1)))
    assert edge_profile(g, 1) == ("sep", 1, ())


def test_relabel_legs():
    d12 = stable_graph((0, 0), (0, 0, 1, 1), ((0, 1),))
    moved = relabel_legs(d12, {1: 3, 2: 4, 3: 1, 4: 2})
    d34 = stable_graph((0, 0), (1, 1, 0, 0), ((0, 1),))
    assert moved.canonical_key() == d34.canonical_key()


def test_graph_json_round_trip():
    for graph in enumerate_stable_graphs(1, 2, 2):
        data = graph_to_json(graph)
        back = graph_from_json(data)
        assert back.canonical_key() == graph.canonical_key()


def test_canonical_key_is_hex():
    key = trivial_graph(1, 1).canonical_key()
    assert set(key) <= set("0123456789abcdef")
