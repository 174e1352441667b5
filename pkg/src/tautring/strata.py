"""The strata algebra of the moduli of stable curves.

A tautological class is a finite linear combination of decorated strata: a
stable graph with a kappa-monomial at each vertex and a psi-power at each
half-edge and leg, representing the pushforward of that decoration along the
gluing map.  Coefficients are exact (Fraction) or polynomials in ramification
variables (MultiPoly).  Every class is kept in normal form: strata are
replaced by canonical representatives with the decoration transported along
the canonicalizing isomorphism, like terms merged, zeros dropped, and any
stratum carrying a decoration that exceeds the dimension of one of its vertex
moduli discarded (such a decoration already vanishes on the vertex factor).

Products are supported against the codimension-one generators (psi, kappa and
boundary divisors); that is exactly what the theta-power and coefficient
extraction pipelines need.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

from .algebra import MultiPoly
from .graphs import (
    StableGraph,
    canonical_graph,
    edge_profile,
    graph_from_json,
    graph_to_json,
    graph_transports,
    relabel_legs,
    separating_spec,
    split_vertex,
    add_loop,
    stable_graph,
    trivial_graph,
    vertex_attachments,
    vertex_split_options,
)


class AmbientMismatchError(ValueError):
    """Operands live on different moduli spaces."""


# ---------------------------------------------------------------------------
# Canonical decorated strata
# ---------------------------------------------------------------------------

class StrataTerm:
    """Canonical decorated stratum; construct only through canonical_term."""

    __slots__ = ("graph", "kappa", "psi_leg", "psi_edge", "_hash")

    def __init__(self, graph, kappa, psi_leg, psi_edge):
        self.graph = graph
        self.kappa = kappa          # per vertex: sorted tuple of (index, exponent)
        self.psi_leg = psi_leg      # exponent per leg label 1..n
        self.psi_edge = psi_edge    # per edge: (exp at side 0, exp at side 1)
        self._hash = hash((graph, kappa, psi_leg, psi_edge))

    def __eq__(self, other):
        return (self.graph == other.graph and self.kappa == other.kappa
                and self.psi_leg == other.psi_leg and self.psi_edge == other.psi_edge)

    def __hash__(self):
        return self._hash

    @property
    def degree(self) -> int:
        dec = sum(a * x for vk in self.kappa for a, x in vk)
        dec += sum(self.psi_leg) + sum(p + q for p, q in self.psi_edge)
        return dec + self.graph.n_edges

    def vertex_degree(self, v: int) -> int:
        d = sum(a * x for a, x in self.kappa[v])
        d += sum(self.psi_leg[lab - 1] for lab in self.graph.legs_at(v))
        d += sum(self.psi_edge[e][s] for e, s in self.graph.half_edges_at(v))
        return d

    def sort_key(self):
        return (self.graph.n_edges, self.degree, self.graph.genera,
                self.graph.legs, self.graph.edges, self.kappa,
                self.psi_leg, self.psi_edge)

    def __repr__(self):
        bits = []
        for lab, e in enumerate(self.psi_leg, start=1):
            if e:
                bits.append(f"psi{lab}" + (f"^{e}" if e > 1 else ""))
        for v, vk in enumerate(self.kappa):
            for a, x in vk:
                bits.append(f"kappa{a}[v{v}]" + (f"^{x}" if x > 1 else ""))
        for e, (p, q) in enumerate(self.psi_edge):
            if p or q:
                bits.append(f"psiE{e}:{p},{q}")
        dec = "*".join(bits) or "1"
        if self.graph.n_edges == 0:
            return dec
        return f"[{self.graph.genera};{self.graph.legs};{self.graph.edges}]({dec})"


def _local_dim_ok(graph: StableGraph, kappa, psi_leg, psi_edge) -> bool:
    for v in range(graph.n_vertices):
        d = sum(a * x for a, x in kappa[v])
        d += sum(psi_leg[lab - 1] for lab in graph.legs_at(v))
        d += sum(psi_edge[e][s] for e, s in graph.half_edges_at(v))
        if d > 3 * graph.genera[v] - 3 + graph.valence(v):
            return False
    return True


@lru_cache(maxsize=None)
def _canonical_term(graph: StableGraph, kappa, psi_leg, psi_edge):
    cg = canonical_graph(graph)
    nv = graph.n_vertices
    best = None
    for order, edge_map in graph_transports(graph):
        new_kappa = tuple(kappa[order[new]] for new in range(nv))
        new_pe = [None] * graph.n_edges
        for old_e, (slot, flip) in edge_map.items():
            pair = psi_edge[old_e]
            new_pe[slot] = (pair[1], pair[0]) if flip else pair
        cand = (new_kappa, tuple(new_pe))
        if best is None or cand < best:
            best = cand
    return StrataTerm(cg, best[0], psi_leg, best[1])


def canonical_term(graph: StableGraph, kappa_by_vertex, psi_leg_by_label,
                   psi_edge_by_index):
    """Canonical representative of a decorated stratum, or None when the
    decoration exceeds the dimension of some vertex moduli (the class is 0).

    kappa_by_vertex: per vertex a mapping {index: exponent};
    psi_leg_by_label: mapping {leg label: exponent};
    psi_edge_by_index: mapping {(edge, side): exponent}.
    """
    kappa = tuple(
        tuple(sorted((a, x) for a, x in dict(kappa_by_vertex.get(v, {})).items() if x))
        for v in range(graph.n_vertices))
    psi_leg = tuple(psi_leg_by_label.get(lab, 0) for lab in range(1, graph.n_legs + 1))
    psi_edge = tuple(
        (psi_edge_by_index.get((e, 0), 0), psi_edge_by_index.get((e, 1), 0))
        for e in range(graph.n_edges))
    if any(a < 1 or x < 0 for vk in kappa for a, x in vk) or \
            any(x < 0 for x in psi_leg) or any(x < 0 for p in psi_edge for x in p):
        raise ValueError("negative decoration exponent")
    if not _local_dim_ok(graph, kappa, psi_leg, psi_edge):
        return None
    return _canonical_term(graph, kappa, psi_leg, psi_edge)


def _term_dicts(term: StrataTerm):
    """Mutable decoration dictionaries for surgery on a term."""
    kappa = {v: {a: x for a, x in vk} for v, vk in enumerate(term.kappa)}
    psi_leg = {lab: e for lab, e in enumerate(term.psi_leg, start=1) if e}
    psi_edge = {}
    for e, (p, q) in enumerate(term.psi_edge):
        if p:
            psi_edge[(e, 0)] = p
        if q:
            psi_edge[(e, 1)] = q
    return kappa, psi_leg, psi_edge


# ---------------------------------------------------------------------------
# Tautological classes
# ---------------------------------------------------------------------------

def _is_zero_coeff(c) -> bool:
    return c == 0


class TautClass:
    """Formal linear combination of canonical decorated strata on one
    moduli space, with Fraction or MultiPoly coefficients."""

    __slots__ = ("g", "n", "terms")

    def __init__(self, g: int, n: int, terms=None):
        if 2 * g - 2 + n <= 0:
            raise AmbientMismatchError(f"(g, n) = ({g}, {n}) is not a stable pair")
        self.g = g
        self.n = n
        self.terms = {}
        if terms:
            for term, coeff in terms.items():
                if not _is_zero_coeff(coeff):
                    self.terms[term] = coeff

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, g, n):
        return cls(g, n)

    @classmethod
    def fundamental(cls, g, n):
        return cls(g, n).add_term(trivial_graph(g, n), {}, {}, {}, Fraction(1))

    @classmethod
    def psi(cls, g, n, i, coeff=Fraction(1)):
        return cls(g, n).add_term(trivial_graph(g, n), {}, {i: 1}, {}, coeff)

    @classmethod
    def kappa(cls, g, n, a, coeff=Fraction(1)):
        return cls(g, n).add_term(trivial_graph(g, n), {}, {}, {}, coeff).mul_kappa(a)

    @classmethod
    def monomial(cls, g, n, psi_exps=None, kappas=None, coeff=Fraction(1)):
        """Edgeless class psi1^d1...psin^dn * prod kappa_a^x."""
        out = cls(g, n).add_term(
            trivial_graph(g, n), {0: dict(kappas or {})},
            dict(psi_exps or {}), {}, coeff)
        return out

    def add_term(self, graph, kappa_by_vertex, psi_leg, psi_edge, coeff):
        """Return a new class with the given decorated stratum added."""
        if (graph.genus, graph.n_legs) != (self.g, self.n):
            raise AmbientMismatchError("stratum does not live on the ambient space")
        term = canonical_term(graph, kappa_by_vertex, psi_leg, psi_edge)
        out = TautClass(self.g, self.n, self.terms)
        if term is not None:
            out._accumulate(term, coeff)
        return out

    def _accumulate(self, term, coeff):
        if _is_zero_coeff(coeff):
            return
        current = self.terms.get(term)
        total = coeff if current is None else current + coeff
        if _is_zero_coeff(total):
            self.terms.pop(term, None)
        else:
            self.terms[term] = total

    # -- linear structure ---------------------------------------------------

    def _check(self, other):
        if (self.g, self.n) != (other.g, other.n):
            raise AmbientMismatchError("classes live on different moduli spaces")

    def __add__(self, other):
        self._check(other)
        out = TautClass(self.g, self.n, self.terms)
        for term, coeff in other.terms.items():
            out._accumulate(term, coeff)
        return out

    def __neg__(self):
        return TautClass(self.g, self.n, {t: -c for t, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, int):
            scalar = Fraction(scalar)
        return TautClass(self.g, self.n,
                         {t: c * scalar for t, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        return (self.g, self.n) == (other.g, other.n) and self.terms == other.terms

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, term: StrataTerm):
        return self.terms.get(term, Fraction(0))

    def map_coefficients(self, fn) -> "TautClass":
        out = TautClass(self.g, self.n)
        for term, coeff in self.terms.items():
            out._accumulate(term, fn(coeff))
        return out

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda item: item[0].sort_key())

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({coeff})*{term!r}" for term, coeff in self.sorted_terms())

    # -- filtration and loci -------------------------------------------------

    def degree_part(self, d: int) -> "TautClass":
        if d < 0:
            raise ValueError("degree must be non-negative")
        return TautClass(self.g, self.n,
                         {t: c for t, c in self.terms.items() if t.degree == d})

    def restrict(self, locus: str) -> "TautClass":
        if locus == "open":
            keep = lambda t: t.graph.n_edges == 0
        elif locus == "compact-type":
            keep = lambda t: t.graph.is_tree()
        elif locus == "rational-tails":
            def keep(t):
                if not t.graph.is_tree():
                    return False
                if self.g == 0:
                    return True
                return sum(1 for gv in t.graph.genera if gv == self.g) == 1
        else:
            raise ValueError(f"unknown locus {locus!r}")
        return TautClass(self.g, self.n,
                         {t: c for t, c in self.terms.items() if keep(t)})

    def relabel_legs(self, perm: dict) -> "TautClass":
        out = TautClass(self.g, self.n)
        for term, coeff in self.terms.items():
            graph = relabel_legs(term.graph, perm)
            psi_leg = {perm[lab]: e for lab, e in enumerate(term.psi_leg, start=1) if e}
            kappa = {v: {a: x for a, x in vk} for v, vk in enumerate(term.kappa)}
            psi_edge = {}
            for e, (p, q) in enumerate(term.psi_edge):
                if p:
                    psi_edge[(e, 0)] = p
                if q:
                    psi_edge[(e, 1)] = q
            new = canonical_term(graph, kappa, psi_leg, psi_edge)
            if new is not None:
                out._accumulate(new, coeff)
        return out

    # -- products with codimension-one generators ----------------------------

    def mul_psi(self, i: int) -> "TautClass":
        if not 1 <= i <= self.n:
            raise ValueError(f"no leg labeled {i}")
        out = TautClass(self.g, self.n)
        for term, coeff in self.terms.items():
            kappa, psi_leg, psi_edge = _term_dicts(term)
            psi_leg[i] = psi_leg.get(i, 0) + 1
            new = canonical_term(term.graph, kappa, psi_leg, psi_edge)
            if new is not None:
                out._accumulate(new, coeff)
        return out

    def mul_kappa(self, a: int) -> "TautClass":
        if a < 1:
            raise ValueError("kappa index must be >= 1")
        out = TautClass(self.g, self.n)
        for term, coeff in self.terms.items():
            for v in range(term.graph.n_vertices):
                kappa, psi_leg, psi_edge = _term_dicts(term)
                kappa.setdefault(v, {})[a] = kappa[v].get(a, 0) + 1
                new = canonical_term(term.graph, kappa, psi_leg, psi_edge)
                if new is not None:
                    out._accumulate(new, coeff)
        return out

    def mul_monomial(self, psi_exps=None, kappas=None) -> "TautClass":
        out = self
        for i, d in (psi_exps or {}).items():
            for _ in range(d):
                out = out.mul_psi(i)
        for a, x in (kappas or {}).items():
            for _ in range(x):
                out = out.mul_kappa(a)
        return out

    def mul_boundary(self, divisor) -> "TautClass":
        """Multiply by a boundary divisor class, excess intersection included.

        divisor is ("irr",) or ("sep", h, legs); the unstable conventions
        delta_0^{i} = -psi_i and delta_0^{} = 0 are applied before dispatch.
        """
        kind = normalize_divisor(self.g, self.n, divisor)
        if kind[0] == "zero":
            return TautClass(self.g, self.n)
        if kind[0] == "psi":
            return -self.mul_psi(kind[1])
        out = TautClass(self.g, self.n)
        half = Fraction(1, 2)
        for term, coeff in self.terms.items():
            graph = term.graph
            # excess: edges already sitting on the divisor contribute
            # -psi' - psi'' at the node
            for e in range(graph.n_edges):
                if edge_profile(graph, e) != kind:
                    continue
                for side in (0, 1):
                    kappa, psi_leg, psi_edge = _term_dicts(term)
                    psi_edge[(e, side)] = psi_edge.get((e, side), 0) + 1
                    new = canonical_term(graph, kappa, psi_leg, psi_edge)
                    if new is not None:
                        out._accumulate(new, -coeff)
            # degenerations: per vertex over labeled local boundary divisors
            # (separating splits with weight 1, a local loop with weight 1/2)
            # so that multiplicity is the honest intersection multiplicity
            for v in range(graph.n_vertices):
                if kind == ("irr",) and graph.genera[v] >= 1:
                    degen, new_e = add_loop(graph, v)
                    kappa, psi_leg, psi_edge = _term_dicts(term)
                    new = canonical_term(degen, kappa, psi_leg, psi_edge)
                    if new is not None:
                        out._accumulate(new, coeff * half)
                for g1, side1 in vertex_split_options(graph, v):
                    degen, new_e = split_vertex(graph, v, g1, side1)
                    if edge_profile(degen, new_e) != kind:
                        continue
                    # an attachment-free symmetric split is generically 2:1
                    # onto its divisor, like the loop
                    weight = half if (not side1 and graph.valence(v) == 0
                                      and 2 * g1 == graph.genera[v]) else Fraction(1)
                    for piece, extra in _kappa_distributions(term.kappa[v]):
                        kappa, psi_leg, psi_edge = _term_dicts(term)
                        kappa[v] = dict(piece)
                        kappa[degen.n_vertices - 1] = dict(extra[0])
                        new = canonical_term(degen, kappa, psi_leg, psi_edge)
                        if new is not None:
                            out._accumulate(new, coeff * weight * extra[1])
        return out

    # -- forgetful maps ------------------------------------------------------

    def forget_pullback(self) -> "TautClass":
        """Pull back along the map forgetting a new last marked point."""
        new_n = self.n + 1
        out = TautClass(self.g, new_n)
        for term, coeff in self.terms.items():
            graph = term.graph
            for v in range(graph.n_vertices):
                placed = StableGraph(graph.genera,
                                     graph.legs + (v,), graph.edges)
                # kappa corrections (kappa_a - psi_new^a)^x at the vertex
                # acquiring the point
                for piece, (j_total, sign_coeff) in _kappa_pullback_expansions(term.kappa[v]):
                    kappa, psi_leg, psi_edge = _term_dicts(term)
                    kappa[v] = dict(piece)
                    psi_leg[new_n] = j_total
                    new = canonical_term(placed, kappa, psi_leg, psi_edge)
                    if new is not None:
                        out._accumulate(new, coeff * sign_coeff)
                # bubble corrections, one per decorated marking at v
                for tag in vertex_attachments(graph, v):
                    y = (term.psi_leg[tag[1] - 1] if tag[0] == "l"
                         else term.psi_edge[tag[1]][tag[2]])
                    if y == 0:
                        continue
                    bubbled, new_e, bubble = _bubble_off(graph, v, tag, new_n)
                    kappa, psi_leg, psi_edge = _term_dicts(term)
                    if tag[0] == "l":
                        psi_leg.pop(tag[1], None)
                    else:
                        psi_edge.pop((tag[1], tag[2]), None)
                    if y > 1:
                        psi_edge[(new_e, 0)] = y - 1
                    new = canonical_term(bubbled, kappa, psi_leg, psi_edge)
                    if new is not None:
                        out._accumulate(new, -coeff)
        return out

    def forget_pushforward(self) -> "TautClass":
        """Push forward along the map forgetting the last marked point."""
        if 2 * self.g - 2 + (self.n - 1) <= 0:
            raise AmbientMismatchError("no stable target after forgetting")
        lab = self.n
        out = TautClass(self.g, self.n - 1)
        for term, coeff in self.terms.items():
            graph = term.graph
            v = graph.legs[lab - 1]
            k = term.psi_leg[lab - 1]
            if 2 * graph.genera[v] - 2 + graph.valence(v) - 1 > 0:
                _push_stable_vertex(out, term, coeff, v, lab, k)
            else:
                _push_unstable_vertex(out, term, coeff, v, lab)
        return out

    def pushforward_to(self, m: int) -> "TautClass":
        out = self
        while out.n > m:
            out = out.forget_pushforward()
        return out

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        terms = []
        for term, coeff in self.sorted_terms():
            terms.append({
                "graph": graph_to_json(term.graph),
                "decoration": {
                    "kappa": [{str(a): x for a, x in vk} for vk in term.kappa],
                    "psi_legs": list(term.psi_leg),
                    "psi_edges": [list(p) for p in term.psi_edge],
                },
                "coeff": encode_coeff(coeff),
            })
        return {"g": self.g, "n": self.n, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "TautClass":
        out = cls(data["g"], data["n"])
        for item in data["terms"]:
            graph = graph_from_json(item["graph"])
            dec = item["decoration"]
            kappa = {v: {int(a): x for a, x in vk.items()}
                     for v, vk in enumerate(dec["kappa"])}
            psi_leg = {i + 1: e for i, e in enumerate(dec["psi_legs"]) if e}
            psi_edge = {}
            for e, (p, q) in enumerate(dec["psi_edges"]):
                if p:
                    psi_edge[(e, 0)] = p
                if q:
                    psi_edge[(e, 1)] = q
            term = canonical_term(graph, kappa, psi_leg, psi_edge)
            if term is not None:
                out._accumulate(term, decode_coeff(item["coeff"]))
        return out


def encode_coeff(coeff) -> object:
    if isinstance(coeff, MultiPoly):
        return {"vars": list(coeff.variables), "poly": coeff.to_text()}
    return str(Fraction(coeff))


def decode_coeff(data) -> object:
    if isinstance(data, dict):
        return MultiPoly.from_text(tuple(data["vars"]), data["poly"])
    return Fraction(data)


# ---------------------------------------------------------------------------
# Normalization of boundary divisors and divisor classes
# ---------------------------------------------------------------------------

def normalize_divisor(g: int, n: int, divisor):
    """Resolve a boundary divisor through the unstable conventions.

    Returns ('irr',), ('sep', h, legs), ('psi', i) standing for -psi_i, or
    ('zero',)."""
    if divisor[0] == "irr":
        if g < 1:
            return ("zero",)
        return ("irr",)
    if divisor[0] != "sep":
        raise ValueError(f"unknown divisor {divisor!r}")
    h, legs = divisor[1], frozenset(divisor[2])
    if not 0 <= h <= g:
        raise ValueError("separating genus out of range")
    if not legs <= set(range(1, n + 1)):
        raise ValueError("divisor legs outside the marking set")
    for hh, part in ((h, legs), (g - h, frozenset(range(1, n + 1)) - legs)):
        if hh == 0 and len(part) == 0:
            return ("zero",)
        if hh == 0 and len(part) == 1:
            return ("psi", next(iter(part)))
    return separating_spec(g, n, h, legs)


def boundary_divisor_class(g: int, n: int, divisor) -> TautClass:
    """The divisor as a tautological class (reduced boundary class)."""
    kind = normalize_divisor(g, n, divisor)
    if kind[0] == "zero":
        return TautClass(g, n)
    if kind[0] == "psi":
        return -TautClass.psi(g, n, kind[1])
    if kind[0] == "irr":
        graph = stable_graph((g - 1,), (0,) * n, ((0, 0),))
        return TautClass(g, n).add_term(graph, {}, {}, {}, Fraction(1, 2))
    _, h, legs = kind
    legset = set(legs)
    leg_vertex = tuple(0 if lab in legset else 1 for lab in range(1, n + 1))
    graph = stable_graph((h, g - h), leg_vertex, ((0, 1),))
    return TautClass(g, n).add_term(graph, {}, {}, {}, Fraction(1))


def _kappa_distributions(vertex_kappa):
    """Ways to spread a kappa monomial over the two sides of a vertex split.

    Yields (kept, ((moved, multiplicity))) pairs: `kept` stays on the original
    vertex, `moved` goes to the new one, with the product of binomials as
    multiplicity (kappa classes restrict additively to a boundary gluing)."""
    entries = list(vertex_kappa)
    choices = [range(x + 1) for _, x in entries]
    for picks in itertools.product(*choices):
        kept = {}
        moved = {}
        mult = 1
        for (a, x), j in zip(entries, picks):
            mult *= math.comb(x, j)
            if x - j:
                kept[a] = x - j
            if j:
                moved[a] = j
        yield kept, (moved, Fraction(mult))


def _kappa_pullback_expansions(vertex_kappa):
    """Expansion of prod (kappa_a - psi_new^a)^{x_a} for the pullback rule.

    Yields (remaining kappa dict, (psi_new exponent, signed coefficient))."""
    entries = list(vertex_kappa)
    choices = [range(x + 1) for _, x in entries]
    for picks in itertools.product(*choices):
        kept = {}
        j_total = 0
        coeff = Fraction(1)
        for (a, x), j in zip(entries, picks):
            coeff *= Fraction((-1) ** j * math.comb(x, j))
            j_total += a * j
            if x - j:
                kept[a] = x - j
        yield kept, (j_total, coeff)


def _bubble_off(graph: StableGraph, v: int, tag, new_label: int):
    """Move the marking `tag` from v onto a fresh genus-0 bubble that also
    carries the new leg; returns (graph', connecting edge index, bubble)."""
    b = graph.n_vertices
    genera = graph.genera + (0,)
    legs = list(graph.legs) + [b]          # the new leg sits on the bubble
    edges = [list(e) for e in graph.edges]
    if tag[0] == "l":
        legs[tag[1] - 1] = b
    else:
        edges[tag[1]][tag[2]] = b
    edges.append([v, b])
    return (stable_graph(genera, legs, [tuple(e) for e in edges]),
            len(edges) - 1, b)


# ---------------------------------------------------------------------------
# Pushforward along the last forgetful map
# ---------------------------------------------------------------------------

def _push_stable_vertex(out: TautClass, term: StrataTerm, coeff, v: int,
                        lab: int, k: int):
    """Fiber integration at a vertex that stays stable: expand kappa over the
    pullback basis, integrate psi_new powers, collect bubble terms."""
    graph = term.graph
    target = StableGraph(graph.genera, graph.legs[:-1], graph.edges)
    kappa0 = 2 * graph.genera[v] - 2 + (graph.valence(v) - 1)
    for kept, (j_total, _sign) in _kappa_pullback_expansions(term.kappa[v]):
        # conversion kappa_a -> psi_new^a carries no sign on pushforward
        mult = abs(_sign)
        k_total = k + j_total
        kappa, psi_leg, psi_edge = _term_dicts(term)
        psi_leg.pop(lab, None)
        kappa[v] = dict(kept)
        if k_total >= 1:
            drop = k_total - 1
            scale = Fraction(1)
            if drop == 0:
                scale = Fraction(kappa0)
            elif drop >= 1:
                kappa[v][drop] = kappa[v].get(drop, 0) + 1
            new = canonical_term(target, kappa, psi_leg, psi_edge)
            if new is not None and scale != 0:
                out._accumulate(new, coeff * mult * scale)
        else:
            # k_total == 0 happens only for the pure pullback piece; it
            # integrates to the bubble sum over decorated markings at v
            for tag in vertex_attachments(graph, v):
                if tag[0] == "l" and tag[1] == lab:
                    continue
                y = (term.psi_leg[tag[1] - 1] if tag[0] == "l"
                     else term.psi_edge[tag[1]][tag[2]])
                if y == 0:
                    continue
                kappa2, psi_leg2, psi_edge2 = _term_dicts(term)
                psi_leg2.pop(lab, None)
                if tag[0] == "l":
                    psi_leg2[tag[1]] = y - 1
                else:
                    psi_edge2[(tag[1], tag[2])] = y - 1
                new = canonical_term(target, kappa2, psi_leg2, psi_edge2)
                if new is not None:
                    out._accumulate(new, coeff)


def _push_unstable_vertex(out: TautClass, term: StrataTerm, coeff, v: int,
                          lab: int):
    """Stabilize a genus-0 vertex left with two special points.

    Either a leg slides to the neighboring node position or the two adjacent
    edges fuse into one; psi decorations ride along."""
    graph = term.graph
    if term.psi_leg[lab - 1] != 0:
        raise AssertionError("decorated point on a dimension-zero vertex")
    others = [t for t in vertex_attachments(graph, v)
              if not (t[0] == "l" and t[1] == lab)]
    if len(others) != 2:
        raise AssertionError("unstable vertex with unexpected valence")
    kappa, psi_leg, psi_edge = _term_dicts(term)
    if kappa.get(v):
        raise AssertionError("kappa decoration on a dimension-zero vertex")
    tags_h = [t for t in others if t[0] == "h"]
    tags_l = [t for t in others if t[0] == "l"]
    if len(tags_h) == 1 and len(tags_l) == 1:
        # leg slides onto the neighbor, inheriting the node's psi power
        (_, e, s) = tags_h[0]
        (_, moved) = tags_l[0]
        other_side = 1 - s
        y = term.psi_edge[e][other_side]
        w = graph.edges[e][other_side]
        genera, edges, vmap, emap = _delete_vertex(graph, v, drop_edges=(e,))
        legs = [vmap[w] if label == moved else vmap[graph.legs[label - 1]]
                for label in range(1, graph.n_legs)]
        new_psi_leg = {l: x for l, x in psi_leg.items() if l not in (lab, moved)}
        if y:
            new_psi_leg[moved] = y
        new_psi_edge = {}
        for (e2, s2), x in psi_edge.items():
            if e2 == e:
                continue
            new_psi_edge[(emap[e2], s2)] = x
        new_kappa = {vmap[u]: kappa[u] for u in kappa if u != v}
        target = stable_graph(genera, legs, edges)
        new = canonical_term(target, new_kappa, new_psi_leg, new_psi_edge)
        if new is not None:
            out._accumulate(new, coeff)
        return
    if len(tags_h) != 2:
        raise AssertionError("cannot stabilize: two legs on an unstable vertex")
    (_, e1, s1), (_, e2, s2) = tags_h
    if e1 == e2:
        raise AssertionError("loop on an unstable vertex cannot occur here")
    o1, o2 = 1 - s1, 1 - s2
    w1, w2 = graph.edges[e1][o1], graph.edges[e2][o2]
    y1, y2 = term.psi_edge[e1][o1], term.psi_edge[e2][o2]
    genera, edges, vmap, emap = _delete_vertex(graph, v, drop_edges=(e1, e2))
    legs = [vmap[graph.legs[label - 1]] for label in range(1, graph.n_legs)]
    edges = list(edges) + [(vmap[w1], vmap[w2])]
    new_e = len(edges) - 1
    new_psi_edge = {}
    for (e3, s3), x in psi_edge.items():
        if e3 in (e1, e2):
            continue
        new_psi_edge[(emap[e3], s3)] = x
    if y1:
        new_psi_edge[(new_e, 0)] = y1
    if y2:
        new_psi_edge[(new_e, 1)] = y2
    new_psi_leg = {l: x for l, x in psi_leg.items() if l != lab}
    new_kappa = {vmap[u]: kappa[u] for u in kappa if u != v}
    target = stable_graph(genera, legs, edges)
    new = canonical_term(target, new_kappa, new_psi_leg, new_psi_edge)
    if new is not None:
        out._accumulate(new, coeff)


def _delete_vertex(graph: StableGraph, v: int, drop_edges):
    """Remove vertex v and the listed edges; legs are the caller's problem."""
    vmap = {}
    genera = []
    for u in range(graph.n_vertices):
        if u == v:
            continue
        vmap[u] = len(genera)
        genera.append(graph.genera[u])
    emap = {}
    edges = []
    for e, (a, b) in enumerate(graph.edges):
        if e in drop_edges:
            continue
        emap[e] = len(edges)
        edges.append((vmap[a], vmap[b]))
    return tuple(genera), tuple(edges), vmap, emap


# ---------------------------------------------------------------------------
# Gluing pushforward
# ---------------------------------------------------------------------------

def gluing_pushforward(ambient: StableGraph, vertex_classes) -> TautClass:
    """Assemble per-vertex classes along a stable graph.

    vertex_classes[v] lives on the moduli of the v-th vertex; its markings
    1..n(v) correspond to the attachments of v in the order given by
    vertex_attachments (legs by label, then half-edges)."""
    g, n = ambient.genus, ambient.n_legs
    for v, cls in enumerate(vertex_classes):
        expected = (ambient.genera[v], ambient.valence(v))
        if (cls.g, cls.n) != expected:
            raise AmbientMismatchError(
                f"vertex {v} class lives on {(cls.g, cls.n)}, expected {expected}")
    out = TautClass(g, n)
    markings = [vertex_attachments(ambient, v) for v in range(ambient.n_vertices)]
    for combo in itertools.product(*[cls.sorted_terms() for cls in vertex_classes]):
        coeff = Fraction(1)
        offsets = []
        total = 0
        for term, c in combo:
            coeff = coeff * c if offsets else c
            offsets.append(total)
            total += term.graph.n_vertices
        genera = []
        for term, _ in combo:
            genera.extend(term.graph.genera)
        legs = [None] * n
        psi_leg = {}
        edges = []
        psi_edge = {}
        kappa = {}
        for v, (term, _) in enumerate(combo):
            off = offsets[v]
            for w, vk in enumerate(term.kappa):
                if vk:
                    kappa[off + w] = {a: x for a, x in vk}
            for e, (a, b) in enumerate(term.graph.edges):
                idx = len(edges)
                edges.append((off + a, off + b))
                p, q = term.psi_edge[e]
                if p:
                    psi_edge[(idx, 0)] = p
                if q:
                    psi_edge[(idx, 1)] = q
        # ambient legs land wherever the local leg of matching rank sits
        for v, (term, _) in enumerate(combo):
            off = offsets[v]
            for rank, tag in enumerate(markings[v]):
                if tag[0] != "l":
                    continue
                lab = tag[1]
                legs[lab - 1] = off + term.graph.legs[rank]
                y = term.psi_leg[rank]
                if y:
                    psi_leg[lab] = y
        # ambient edges connect the local legs of matching rank
        for e, (a, b) in enumerate(ambient.edges):
            ra = markings[a].index(("h", e, 0))
            rb = markings[b].index(("h", e, 1))
            term_a = combo[a][0]
            term_b = combo[b][0]
            idx = len(edges)
            edges.append((offsets[a] + term_a.graph.legs[ra],
                          offsets[b] + term_b.graph.legs[rb]))
            ya = term_a.psi_leg[ra]
            yb = term_b.psi_leg[rb]
            if ya:
                psi_edge[(idx, 0)] = ya
            if yb:
                psi_edge[(idx, 1)] = yb
        graph = stable_graph(genera, legs, edges)
        new = canonical_term(graph, kappa, psi_leg, psi_edge)
        if new is not None:
            out._accumulate(new, coeff)
    return out


# ---------------------------------------------------------------------------
# Functional wrappers over the class methods
# ---------------------------------------------------------------------------

def normalize(g: int, n: int, raw_terms) -> TautClass:
    """Build a class in normal form from raw (graph, kappa, psi_leg,
    psi_edge, coeff) tuples."""
    out = TautClass(g, n)
    for graph, kappa, psi_leg, psi_edge, coeff in raw_terms:
        out = out.add_term(graph, kappa, psi_leg, psi_edge, coeff)
    return out


def mul_psi(c: TautClass, i: int) -> TautClass:
    return c.mul_psi(i)


def mul_kappa(c: TautClass, a: int) -> TautClass:
    return c.mul_kappa(a)


def mul_boundary_divisor(c: TautClass, divisor) -> TautClass:
    return c.mul_boundary(divisor)


def forgetful_pullback(c: TautClass) -> TautClass:
    return c.forget_pullback()


def forgetful_pushforward(c: TautClass) -> TautClass:
    return c.forget_pushforward()


def restrict_locus(c: TautClass, locus: str) -> TautClass:
    return c.restrict(locus)


def degree_part(c: TautClass, d: int) -> TautClass:
    return c.degree_part(d)
