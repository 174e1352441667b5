"""Stable graphs (dual graphs of stable curves).

A stable graph is stored as a tuple of vertex genera, a tuple assigning each
leg label 1..n to a vertex, and a tuple of edges, each an ordered pair of
vertex indices.  Half-edges are addressed as (edge index, side) with side 0
or 1; side s of edge e sits on vertex edges[e][s].  Legs are always fixed
pointwise by isomorphisms, so two graphs are isomorphic exactly when some
relabeling of vertices and edges carries one presentation to the other while
keeping every leg label on a matching vertex.

Canonical labeling is by exhaustive search over vertex orderings refined by
(genus, attached legs, valence) invariants; graphs at desk scale have at most
a handful of vertices, so certified exactness is cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache


class InvalidGraphError(ValueError):
    """The candidate data do not describe a connected stable graph."""


@dataclass(frozen=True)
class StableGraph:
    genera: tuple
    legs: tuple
    edges: tuple

    @property
    def n_vertices(self) -> int:
        return len(self.genera)

    @property
    def n_legs(self) -> int:
        return len(self.legs)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h1(self) -> int:
        return self.n_edges - self.n_vertices + 1

    @property
    def genus(self) -> int:
        return self.h1 + sum(self.genera)

    def legs_at(self, v: int) -> tuple:
        return tuple(i + 1 for i, w in enumerate(self.legs) if w == v)

    def half_edges_at(self, v: int) -> tuple:
        out = []
        for e, (a, b) in enumerate(self.edges):
            if a == v:
                out.append((e, 0))
            if b == v:
                out.append((e, 1))
        return tuple(out)

    def valence(self, v: int) -> int:
        return len(self.legs_at(v)) + len(self.half_edges_at(v))

    def is_tree(self) -> bool:
        return self.h1 == 0

    def canonical_key(self) -> str:
        return _encode_hex(_canonical(self)[0])

    def __repr__(self):
        return f"StableGraph(genera={self.genera}, legs={self.legs}, edges={self.edges})"


def stable_graph(genera, legs, edges) -> StableGraph:
    """Validate and build a stable graph; raises InvalidGraphError."""
    graph = StableGraph(tuple(genera), tuple(legs), tuple(tuple(e) for e in edges))
    nv = graph.n_vertices
    if nv == 0:
        raise InvalidGraphError("graph has no vertices")
    if any(g < 0 for g in graph.genera):
        raise InvalidGraphError("negative genus")
    for v in graph.legs:
        if not 0 <= v < nv:
            raise InvalidGraphError("leg attached to a missing vertex")
    for a, b in graph.edges:
        if not (0 <= a < nv and 0 <= b < nv):
            raise InvalidGraphError("edge attached to a missing vertex")
    # connectivity
    parent = list(range(nv))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in graph.edges:
        parent[find(a)] = find(b)
    if len({find(v) for v in range(nv)}) != 1:
        raise InvalidGraphError("graph is not connected")
    for v in range(nv):
        if 2 * graph.genera[v] - 2 + graph.valence(v) <= 0:
            raise InvalidGraphError(f"vertex {v} is unstable")
    return graph


def trivial_graph(g: int, n: int) -> StableGraph:
    if 2 * g - 2 + n <= 0:
        raise InvalidGraphError(f"(g, n) = ({g}, {n}) is not a stable pair")
    return stable_graph((g,), (0,) * n, ())


# ---------------------------------------------------------------------------
# Canonical labeling
# ---------------------------------------------------------------------------

def _vertex_invariant(graph: StableGraph, v: int):
    loops = sum(1 for a, b in graph.edges if a == v and b == v)
    return (graph.genera[v], graph.legs_at(v), graph.valence(v), loops)


def _candidate_orders(graph: StableGraph):
    """Vertex orderings consistent with the sorted invariant refinement."""
    inv = [_vertex_invariant(graph, v) for v in range(graph.n_vertices)]
    groups: dict = {}
    for v, key in enumerate(inv):
        groups.setdefault(key, []).append(v)
    keys = sorted(groups)
    for perm_blocks in itertools.product(
            *[itertools.permutations(groups[k]) for k in keys]):
        order = []
        for block in perm_blocks:
            order.extend(block)
        yield tuple(order)


def _relabel_encoding(graph: StableGraph, order):
    """Encoding of the graph under the vertex ordering; lower is canonical."""
    pos = [0] * graph.n_vertices
    for new, old in enumerate(order):
        pos[old] = new
    genera = tuple(graph.genera[old] for old in order)
    legs = tuple(pos[v] for v in graph.legs)
    edge_items = []
    for e, (a, b) in enumerate(graph.edges):
        na, nb = pos[a], pos[b]
        if na <= nb:
            edge_items.append(((na, nb), e, False))
        else:
            edge_items.append(((nb, na), e, True))
    edge_items.sort(key=lambda item: item[0])
    encoding = (genera, legs, tuple(item[0] for item in edge_items))
    return encoding, edge_items


@lru_cache(maxsize=None)
def _canonical(graph: StableGraph):
    """Minimal encoding plus every vertex ordering achieving it."""
    best = None
    best_orders = []
    for order in _candidate_orders(graph):
        encoding, _ = _relabel_encoding(graph, order)
        if best is None or encoding < best:
            best = encoding
            best_orders = [order]
        elif encoding == best:
            best_orders.append(order)
    return best, tuple(best_orders)


def _encode_hex(encoding) -> str:
    genera, legs, edges = encoding
    text = "g:" + ",".join(map(str, genera)) + \
        ";l:" + ",".join(map(str, legs)) + \
        ";e:" + ",".join(f"{a}-{b}" for a, b in edges)
    return text.encode().hex()


def canonical_form(graph: StableGraph) -> str:
    return graph.canonical_key()


def canonical_graph(graph: StableGraph) -> StableGraph:
    encoding, _ = _canonical(graph)
    genera, legs, edges = encoding
    return StableGraph(genera, legs, edges)


def graph_transports(graph: StableGraph):
    """All relabelings onto the canonical representative.

    Yields (vertex_order, edge_map) pairs where edge_map[old_edge] is a
    (new_edge, flipped) pair.  Parallel edges between the same vertex pair may
    be assigned to their slots in any order, and each loop may flip its two
    half-edges; every such choice is produced, which is exactly what the
    decoration transport in the strata layer needs to minimize over.
    """
    _, orders = _canonical(graph)
    for order in orders:
        _, edge_items = _relabel_encoding(graph, order)
        # group canonical slots by equal vertex pairs
        slots_by_pair: dict = {}
        for slot, (pair, e, flip) in enumerate(edge_items):
            slots_by_pair.setdefault(pair, []).append(slot)
        class_members: dict = {}
        for pair, e, flip in edge_items:
            class_members.setdefault(pair, []).append((e, flip))
        pairs = sorted(slots_by_pair)
        for assignment in itertools.product(
                *[itertools.permutations(slots_by_pair[p]) for p in pairs]):
            edge_map = {}
            for p_idx, pair in enumerate(pairs):
                for (e, flip), slot in zip(class_members[pair], assignment[p_idx]):
                    edge_map[e] = (slot, flip)
            loops = [e for e, (a, b) in enumerate(graph.edges) if a == b]
            for flips in itertools.product((False, True), repeat=len(loops)):
                final = dict(edge_map)
                for e, extra in zip(loops, flips):
                    slot, flip = final[e]
                    final[e] = (slot, flip ^ extra)
                yield order, final


def _vertex_automorphisms(graph: StableGraph):
    """Vertex permutations (old -> image) preserving genus, legs pointwise
    and the edge multiset."""
    inv = [_vertex_invariant(graph, v) for v in range(graph.n_vertices)]
    groups: dict = {}
    for v, key in enumerate(inv):
        groups.setdefault(key, []).append(v)
    keys = sorted(groups)
    base_edges = sorted((min(a, b), max(a, b)) for a, b in graph.edges)
    for images in itertools.product(
            *[itertools.permutations(groups[k]) for k in keys]):
        pos = [0] * graph.n_vertices
        for k, image_block in zip(keys, images):
            for old, new in zip(groups[k], image_block):
                pos[old] = new
        if any(pos[v] != v for v in graph.legs):
            continue
        mapped = sorted((min(pos[a], pos[b]), max(pos[a], pos[b]))
                        for a, b in graph.edges)
        if mapped != base_edges:
            continue
        yield tuple(pos)


@lru_cache(maxsize=None)
def automorphism_count(graph: StableGraph) -> int:
    """Order of the automorphism group (vertex and half-edge permutations
    preserving incidence, involution and genera, fixing legs pointwise)."""
    classes: dict = {}
    for a, b in graph.edges:
        key = (min(a, b), max(a, b))
        classes[key] = classes.get(key, 0) + 1
    lifts = 1
    for (a, b), m in classes.items():
        lifts *= _factorial(m)
        if a == b:
            lifts *= 2 ** m
    return sum(lifts for _ in _vertex_automorphisms(graph))


def _factorial(m: int) -> int:
    out = 1
    for i in range(2, m + 1):
        out *= i
    return out


# ---------------------------------------------------------------------------
# Surgery: contraction, splitting, degeneration
# ---------------------------------------------------------------------------

def contract_edge(graph: StableGraph, e: int) -> StableGraph:
    """Contract edge e: merge its endpoints (genus adds) or, for a loop,
    remove it and raise the vertex genus by one."""
    a, b = graph.edges[e]
    if a == b:
        genera = list(graph.genera)
        genera[a] += 1
        edges = tuple(ed for i, ed in enumerate(graph.edges) if i != e)
        return stable_graph(genera, graph.legs, edges)
    keep, drop = min(a, b), max(a, b)
    genera = []
    remap = {}
    for v in range(graph.n_vertices):
        if v == drop:
            remap[v] = keep
            continue
        remap[v] = len(genera)
        genera.append(graph.genera[v])
    genera[remap[keep]] += graph.genera[drop]
    legs = tuple(remap[v] for v in graph.legs)
    edges = tuple((remap[x], remap[y]) for i, (x, y) in enumerate(graph.edges) if i != e)
    return stable_graph(genera, legs, edges)


@lru_cache(maxsize=None)
def edge_profile(graph: StableGraph, e: int):
    """Isomorphism type of the one-edge graph obtained by contracting every
    edge except e: ('irr',) for a non-separating edge, else
    ('sep', h, sorted legs of the smaller side)."""
    nv = graph.n_vertices
    parent = list(range(nv))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, (a, b) in enumerate(graph.edges):
        if i != e:
            parent[find(a)] = find(b)
    a, b = graph.edges[e]
    if find(a) == find(b):
        return ("irr",)
    sides = []
    for root_of in (a, b):
        root = find(root_of)
        verts = [v for v in range(nv) if find(v) == root]
        inner = sum(1 for i, (x, y) in enumerate(graph.edges)
                    if i != e and find(x) == root)
        h = sum(graph.genera[v] for v in verts) + inner - len(verts) + 1
        legs = tuple(sorted(i + 1 for i, v in enumerate(graph.legs) if find(v) == root))
        sides.append((h, legs))
    return ("sep",) + min(sides)


def separating_spec(g: int, n: int, h: int, legs) -> tuple:
    """Canonical ('sep', h, legs) key for the divisor with a genus-h side
    carrying the given legs (the complementary description is identified)."""
    legs = tuple(sorted(legs))
    other = (g - h, tuple(sorted(set(range(1, n + 1)) - set(legs))))
    return ("sep",) + min((h, legs), other)


def vertex_attachments(graph: StableGraph, v: int):
    """Attachment tags at v: ('l', label) legs then ('h', edge, side) halves."""
    tags = [("l", lab) for lab in graph.legs_at(v)]
    tags += [("h", e, s) for e, s in graph.half_edges_at(v)]
    return tags


def split_vertex(graph: StableGraph, v: int, g1: int, tags1) -> tuple:
    """Split v into (g1, tags1) and (g(v)-g1, complement) joined by a new
    edge; tags1 keeps vertex index v, the complement gets a fresh index.
    Returns (graph', new_edge_index).  Leg and edge identifiers are stable."""
    tags1 = set(tags1)
    nv = graph.n_vertices
    genera = list(graph.genera)
    genera[v] = g1
    genera.append(graph.genera[v] - g1)
    legs = list(graph.legs)
    edges = [list(e) for e in graph.edges]
    for tag in vertex_attachments(graph, v):
        if tag in tags1:
            continue
        if tag[0] == "l":
            legs[tag[1] - 1] = nv
        else:
            edges[tag[1]][tag[2]] = nv
    edges.append([v, nv])
    return (stable_graph(genera, legs, [tuple(e) for e in edges]),
            len(edges) - 1)


def add_loop(graph: StableGraph, v: int) -> tuple:
    """Genus-reducing loop at v (inverse of loop contraction)."""
    genera = list(graph.genera)
    genera[v] -= 1
    edges = list(graph.edges) + [(v, v)]
    return stable_graph(genera, graph.legs, edges), len(edges) - 1


def vertex_split_options(graph: StableGraph, v: int):
    """Labeled separating splits of v: (g1, tags1) with both sides stable,
    one per unordered split.  Multiplicities matter for divisor products, so
    no isomorphism deduplication happens here."""
    tags = vertex_attachments(graph, v)
    gv = graph.genera[v]
    for g1 in range(gv + 1):
        for bits in itertools.product((0, 1), repeat=len(tags)):
            side1 = tuple(t for t, b in zip(tags, bits) if b)
            side2 = tuple(t for t, b in zip(tags, bits) if not b)
            if (g1, side1) > (gv - g1, side2):
                continue
            if 2 * g1 - 2 + len(side1) + 1 <= 0:
                continue
            if 2 * (gv - g1) - 2 + len(side2) + 1 <= 0:
                continue
            yield g1, side1


def one_edge_degenerations(graph: StableGraph):
    """All (graph', new_edge) with one more edge whose contraction at that
    edge returns the input, up to isomorphism of the pair."""
    found = {}
    for v in range(graph.n_vertices):
        if graph.genera[v] >= 1:
            candidate, e = add_loop(graph, v)
            found.setdefault(_pair_key(candidate, e), (candidate, e))
        for g1, side1 in vertex_split_options(graph, v):
            candidate, e = split_vertex(graph, v, g1, side1)
            found.setdefault(_pair_key(candidate, e), (candidate, e))
    return [found[k] for k in sorted(found)]


def _pair_key(graph: StableGraph, e: int) -> str:
    best = None
    for order, edge_map in graph_transports(graph):
        key = (_relabel_encoding(graph, order)[0], edge_map[e][0])
        if best is None or key < best:
            best = key
    return _encode_hex(best[0]) + f"#{best[1]}"


def enumerate_stable_graphs(g: int, n: int, max_edges: int):
    """Every isomorphism class of genus-g, n-leg stable graphs with at most
    max_edges edges, ordered by edge count then canonical key."""
    if 2 * g - 2 + n <= 0:
        raise InvalidGraphError(f"(g, n) = ({g}, {n}) is not a stable pair")
    if max_edges < 0:
        raise InvalidGraphError("max_edges must be non-negative")
    return list(_enumerate_cached(g, n, min(max_edges, 3 * g - 3 + n)))


@lru_cache(maxsize=None)
def _enumerate_cached(g: int, n: int, limit: int) -> tuple:
    start = canonical_graph(trivial_graph(g, n))
    levels = [{start.canonical_key(): start}]
    for _ in range(limit):
        nxt: dict = {}
        for parent in levels[-1].values():
            for candidate, _e in one_edge_degenerations(parent):
                canon = canonical_graph(candidate)
                nxt.setdefault(canon.canonical_key(), canon)
        if not nxt:
            break
        levels.append(nxt)
    out = []
    for level in levels:
        out.extend(level[k] for k in sorted(level))
    return tuple(out)


def relabel_legs(graph: StableGraph, perm: dict) -> StableGraph:
    """Relabel legs by a permutation {old label: new label}."""
    if sorted(perm) != list(range(1, graph.n_legs + 1)) or \
            sorted(perm.values()) != list(range(1, graph.n_legs + 1)):
        raise InvalidGraphError("leg relabeling is not a permutation of 1..n")
    legs = [0] * graph.n_legs
    for old, new in perm.items():
        legs[new - 1] = graph.legs[old - 1]
    return StableGraph(graph.genera, tuple(legs), graph.edges)


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------

def graph_to_json(graph: StableGraph) -> dict:
    local_index: dict = {}
    halves = []
    for e, (a, b) in enumerate(graph.edges):
        pair = []
        for s, v in enumerate((a, b)):
            idx = local_index.get(v, 0)
            local_index[v] = idx + 1
            pair.append([v, idx])
        halves.append(pair)
    return {
        "vertices": list(graph.genera),
        "legs": [[i + 1, v] for i, v in enumerate(graph.legs)],
        "edges": halves,
    }


def graph_from_json(data: dict) -> StableGraph:
    genera = tuple(data["vertices"])
    legs_map = {label: v for label, v in data["legs"]}
    legs = tuple(legs_map[i + 1] for i in range(len(legs_map)))
    edges = tuple((pair[0][0], pair[1][0]) for pair in data["edges"])
    return stable_graph(genera, legs, edges)
