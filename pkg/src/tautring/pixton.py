"""Pixton's double ramification cycle class.

For a ramification vector A summing to zero, the class on the moduli of
stable curves is assembled as a sum over stable graphs together with
weightings modulo r of the half-edges: each leg carries exp(a_i^2 psi_i / 2),
each edge the series (1 - exp(-w(h) w(h') (psi' + psi'') / 2)) / (psi' + psi'').
The resulting stratum coefficients are polynomials in r for large r; the
class itself is the constant term, recovered here by exact interpolation over
two disjoint sample sets that must agree.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from .algebra import InterpolationError, lagrange_interpolate
from .graphs import StableGraph, enumerate_stable_graphs, vertex_attachments, \
    automorphism_count
from .strata import TautClass, canonical_term


class WeightingSystemError(RuntimeError):
    """Internal defect: the weighting system on a graph was inconsistent."""


def validate_ramification(A) -> tuple:
    A = tuple(int(a) for a in A)
    if sum(A) != 0:
        raise ValueError(f"ramification vector {A} does not sum to zero")
    return A


def _spanning_tree(graph: StableGraph):
    """Edge indices of a spanning tree (loops and extra edges excluded)."""
    parent = list(range(graph.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    rest = []
    for e, (a, b) in enumerate(graph.edges):
        ra, rb = find(a), find(b)
        if ra == rb:
            rest.append(e)
        else:
            parent[ra] = rb
            tree.append(e)
    return tree, rest


def enumerate_weightings(graph: StableGraph, A, r: int):
    """All weightings modulo r: legs carry the residues of A, edge halves sum
    to zero over each edge and around every vertex.  Exactly r**h1 of them,
    generated lazily from free residues on the complement of a spanning tree.
    """
    A = validate_ramification(A)
    if len(A) != graph.n_legs:
        raise ValueError("ramification vector length differs from leg count")
    if r < 1:
        raise ValueError("modulus must be >= 1")
    tree, rest = _spanning_tree(graph)
    leg_w = {}
    for lab, v in enumerate(graph.legs, start=1):
        leg_w[lab] = A[lab - 1] % r

    # Peel the spanning tree from the leaves inward: each step determines the
    # weight on one tree edge from the vertex condition.
    order = []
    remaining = set(tree)
    degree = {v: 0 for v in range(graph.n_vertices)}
    incident = {v: [] for v in range(graph.n_vertices)}
    for e in tree:
        a, b = graph.edges[e]
        degree[a] += 1
        degree[b] += 1
        incident[a].append(e)
        incident[b].append(e)
    leaves = [v for v in range(graph.n_vertices) if degree[v] == 1]
    seen_edges = set()
    while leaves:
        v = leaves.pop()
        live = [e for e in incident[v] if e in remaining]
        if not live:
            continue
        e = live[0]
        order.append((v, e))
        remaining.discard(e)
        a, b = graph.edges[e]
        other = b if a == v else a
        degree[a] -= 1
        degree[b] -= 1
        if degree[other] == 1:
            leaves.append(other)
    if remaining:
        raise WeightingSystemError("spanning tree peel failed")

    for free in itertools.product(range(r), repeat=len(rest)):
        w = {}
        for lab, v in enumerate(graph.legs, start=1):
            w[("l", lab)] = leg_w[lab]
        for e, value in zip(rest, free):
            w[("h", e, 0)] = value
            w[("h", e, 1)] = (-value) % r
        for v, e in order:
            total = 0
            for tag in vertex_attachments(graph, v):
                if tag == ("h", e, 0) or tag == ("h", e, 1):
                    continue
                if tag in w:
                    total += w[tag]
            a, b = graph.edges[e]
            side = 0 if a == v else 1
            w[("h", e, side)] = (-total) % r
            w[("h", e, 1 - side)] = total % r
        # final consistency at every vertex
        for v in range(graph.n_vertices):
            total = sum(w[tag] for tag in vertex_attachments(graph, v))
            if total % r != 0:
                raise WeightingSystemError("vertex condition violated")
        yield w


def omega_r(g: int, A, r: int, max_degree: int) -> TautClass:
    """The modulus-r class, truncated to total degree max_degree."""
    A = validate_ramification(A)
    n = len(A)
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    out = TautClass(g, n)
    for graph in enumerate_stable_graphs(g, n, max_degree):
        out = out + _graph_contribution(graph, A, r, max_degree)
    return out


def _graph_contribution(graph: StableGraph, A, r: int, max_degree: int) -> TautClass:
    g, n = graph.genus, graph.n_legs
    ne = graph.n_edges
    budget = max_degree - ne
    out = TautClass(g, n)
    if budget < 0:
        return out

    # Accumulate, over all weightings, the coefficient of each vector of edge
    # series orders; weightings are never materialized as a list.
    edge_orders: dict = {}
    for w in enumerate_weightings(graph, A, r):
        u = [Fraction(w[("h", e, 0)] * w[("h", e, 1)], 2) for e in range(ne)]
        if any(x == 0 for x in u):
            continue
        for orders in itertools.product(range(budget + 1), repeat=ne):
            if sum(orders) > budget:
                continue
            coeff = Fraction(1)
            for ue, j in zip(u, orders):
                coeff *= (-1) ** j * ue ** (j + 1) / math.factorial(j + 1)
            edge_orders[orders] = edge_orders.get(orders, Fraction(0)) + coeff

    scale = Fraction(1, automorphism_count(graph) * r ** graph.h1)

    # Leg factor exp(a_i^2 psi_i / 2), truncated.
    leg_series = []
    for lab in range(1, n + 1):
        base = Fraction(A[lab - 1] ** 2, 2)
        leg_series.append([base ** k / math.factorial(k) for k in range(budget + 1)])

    for orders, ocoeff in edge_orders.items():
        if ocoeff == 0:
            continue
        room = budget - sum(orders)
        # split each edge's (psi'+psi'')^j binomially
        per_edge = []
        for e, j in enumerate(orders):
            per_edge.append([(s, j - s, Fraction(math.comb(j, s))) for s in range(j + 1)])
        for split in itertools.product(*per_edge):
            base_psi_edge = {}
            bcoeff = ocoeff
            for e, (s0, s1, c) in enumerate(split):
                if s0:
                    base_psi_edge[(e, 0)] = s0
                if s1:
                    base_psi_edge[(e, 1)] = s1
                bcoeff *= c
            for leg_exps in _bounded_tuples(n, room):
                coeff = bcoeff
                skip = False
                psi_leg = {}
                for lab, k in enumerate(leg_exps, start=1):
                    if k:
                        c = leg_series[lab - 1][k]
                        if c == 0:
                            skip = True
                            break
                        coeff *= c
                        psi_leg[lab] = k
                if skip or coeff == 0:
                    continue
                term = canonical_term(graph, {}, psi_leg, base_psi_edge)
                if term is not None:
                    out._accumulate(term, coeff * scale)
    return out


def _bounded_tuples(length: int, bound: int):
    if length == 0:
        yield ()
        return
    for head in range(bound + 1):
        for rest in _bounded_tuples(length - 1, bound - head):
            yield (head,) + rest


def minimum_modulus(A) -> int:
    """Smallest safe sampling modulus: r > sum |a_i| / 2 bounds every subset
    sum, which keeps all edge residues in their eventual linear regime."""
    return sum(abs(a) for a in A) // 2 + 2


def omega_constant_term(g: int, A, max_degree: int, r_min: int | None = None,
                        degree_bound: int | None = None,
                        max_retries: int = 2) -> TautClass:
    """Constant term in r of the modulus-r class, stratum by stratum.

    Coefficients are sampled at 2*(bound+1) consecutive large moduli split
    into two disjoint sets; each set is interpolated separately and the two
    interpolants must agree, otherwise the bound is enlarged and the sampling
    retried.
    """
    A = validate_ramification(A)
    if r_min is None:
        r_min = minimum_modulus(A)
    if degree_bound is None:
        degree_bound = 2 * max_degree + max_degree
    for attempt in range(max_retries + 1):
        m = degree_bound + 1
        first = [r_min + i for i in range(m)]
        second = [r_min + m + i for i in range(m)]
        try:
            return _interpolated_constant_term(g, A, max_degree, first, second,
                                               degree_bound)
        except InterpolationError:
            if attempt == max_retries:
                raise
            degree_bound = 2 * degree_bound + 2
            r_min = 2 * r_min
    raise InterpolationError("unreachable")


def omega_constant_term_from_samples(g: int, A, max_degree: int,
                                     r_samples) -> TautClass:
    """Constant term using caller-provided moduli, split in half into the two
    consistency sample sets."""
    A = validate_ramification(A)
    r_samples = sorted(set(int(r) for r in r_samples))
    if len(r_samples) % 2 == 1:
        r_samples = r_samples[:-1]
    half = len(r_samples) // 2
    if half == 0:
        raise ValueError("need at least two sample moduli")
    bound = half - 1
    return _interpolated_constant_term(g, A, max_degree, r_samples[:half],
                                       r_samples[half:], bound)


def _interpolated_constant_term(g, A, max_degree, first, second, bound) -> TautClass:
    n = len(A)
    per_r = {r: omega_r(g, A, r, max_degree) for r in first + second}
    strata = set()
    for cls in per_r.values():
        strata.update(cls.terms)
    out = TautClass(g, n)
    for term in strata:
        series1 = [(r, per_r[r].coefficient(term)) for r in first]
        series2 = [(r, per_r[r].coefficient(term)) for r in second]
        poly1 = lagrange_interpolate(series1, bound)
        poly2 = lagrange_interpolate(series2, bound)
        if poly1 != poly2:
            raise InterpolationError(
                "disjoint sample sets disagree; enlarge the degree bound")
        out._accumulate(term, poly1.constant_term())
    return out
