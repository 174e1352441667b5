"""Relation pipelines: theta-divisor powers, double-ramification relation
coefficients, the descending Gaussian elimination producing boundary
expressions for psi-monomials, the general boundary-expression recursion, and
the property-star reduction, backed by a persistent relation database.

The double-ramification relation in degree g+1 is normalized as
(g+1)! times the degree-(g+1) part of the constant-term class, so that its
compact-type restriction is literally the (g+1)-st theta power.  Coefficients
of ramification monomials are extracted by exact finite differences over
integer evaluations only; symbolic ramification variables appear solely in
compact-type theta computations, where polynomiality is manifest.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import re
from fractions import Fraction

from .algebra import MultiPoly, finite_difference_extract
from .graphs import stable_graph, vertex_attachments
from .pixton import omega_constant_term, validate_ramification
from .strata import (
    TautClass,
    boundary_divisor_class,
    gluing_pushforward,
    normalize_divisor,
)


class RelationPipelineError(RuntimeError):
    """A structural guarantee of the elimination failed (internal defect)."""


class CacheIntegrityError(RuntimeError):
    """A stored relation record failed its content-hash check."""


class CacheConsistencyError(RuntimeError):
    """A recomputed relation differs from the stored record."""


# ---------------------------------------------------------------------------
# Theta divisor and its powers
# ---------------------------------------------------------------------------

def _a_vars(n: int) -> tuple:
    return tuple(f"a{i}" for i in range(1, n + 1))


def theta_generators(g: int, n: int, A=None):
    """The theta pullback as a list of (generator, coefficient) pairs.

    Generators are ('psi', i) or canonical separating divisors; coefficients
    are Fractions for an integer ramification vector A, or polynomials in
    a1..an when A is None.  The (h, P) <-> (g-h, complement) double count of
    the defining sum is merged here term by term.
    """
    if A is not None:
        A = validate_ramification(A)
        if len(A) != n:
            raise ValueError("ramification vector length differs from n")

        def subset_coeff(P):
            return Fraction(-sum(A[i - 1] for i in P) ** 2, 4)
        zero = Fraction(0)
    else:
        variables = _a_vars(n)

        def subset_coeff(P):
            lin = MultiPoly(variables)
            for i in P:
                lin = lin + MultiPoly.variable(variables, f"a{i}")
            return lin * lin * Fraction(-1, 4)
        zero = MultiPoly(_a_vars(n))

    acc: dict = {}
    for h in range(g + 1):
        for size in range(n + 1):
            for P in itertools.combinations(range(1, n + 1), size):
                coeff = subset_coeff(P)
                kind = normalize_divisor(g, n, ("sep", h, P))
                if kind[0] == "zero":
                    continue
                if kind[0] == "psi":
                    key = ("psi", kind[1])
                    coeff = -coeff
                else:
                    key = kind
                acc[key] = acc.get(key, zero) + coeff
    return [(key, coeff) for key, coeff in acc.items() if coeff != 0]


def theta_divisor(g: int, n: int, A=None) -> TautClass:
    """Pullback of the theta divisor along the Abel-Jacobi section."""
    out = TautClass(g, n)
    for key, coeff in theta_generators(g, n, A):
        if key[0] == "psi":
            out = out + TautClass.psi(g, n, key[1], coeff)
        else:
            out = out + boundary_divisor_class(g, n, key) * coeff
    return out


def mul_divisor_sum(c: TautClass, generators) -> TautClass:
    out = TautClass(c.g, c.n)
    for key, coeff in generators:
        piece = c.mul_psi(key[1]) if key[0] == "psi" else c.mul_boundary(key)
        out = out + piece * coeff
    return out


def theta_power_relation(g: int, n: int, A=None) -> TautClass:
    """The (g+1)-st power of the theta pullback; its compact-type restriction
    is a relation."""
    gens = theta_generators(g, n, A)
    out = TautClass.fundamental(g, n)
    if A is None:
        one = MultiPoly.constant(_a_vars(n), 1)
        out = out.map_coefficients(lambda c: one * c)
    for _ in range(g + 1):
        out = mul_divisor_sum(out, gens)
    return out


# ---------------------------------------------------------------------------
# Double-ramification relations and coefficient extraction
# ---------------------------------------------------------------------------

_dr_cache: dict = {}


def dr_relation(g: int, A) -> TautClass:
    """(g+1)! times the degree-(g+1) part of the constant-term class on the
    space with len(A) markings; vanishes in the Chow ring."""
    A = validate_ramification(A)
    key = (g, A)
    if key not in _dr_cache:
        omega = omega_constant_term(g, A, g + 1)
        _dr_cache[key] = omega.degree_part(g + 1) * math.factorial(g + 1)
    return _dr_cache[key]


_pushed_cache: dict = {}


def _pushed_relation(g: int, point: tuple, psi_multiplier, target_n: int) -> TautClass:
    mult_key = tuple(sorted((psi_multiplier or {}).items()))
    key = (g, point, mult_key, target_n)
    if key not in _pushed_cache:
        A = point + (-sum(point),)
        rel = dr_relation(g, A)
        rel = rel.mul_monomial(psi_exps=psi_multiplier or {})
        _pushed_cache[key] = rel.pushforward_to(target_n)
    return _pushed_cache[key]


def dr_relation_coefficient(g: int, a_monomial, psi_multiplier=None,
                            forget=()) -> TautClass:
    """Coefficient of a ramification monomial in the pushed relation.

    a_monomial lists exponents of a_1..a_{2g+2} (a_{2g+3} is eliminated as
    minus the sum); the monomial must have total degree 2g+2.  The multiplier
    is a psi-monomial applied upstairs before forgetting the legs in
    `forget`, which must be the top labels down to the target.  Extraction is
    by exact finite differences over integer evaluations.
    """
    n_up = 2 * g + 3
    a_monomial = tuple(a_monomial)
    if len(a_monomial) != 2 * g + 2:
        raise ValueError("monomial must list exponents of a_1..a_{2g+2}")
    if sum(a_monomial) != 2 * g + 2:
        raise ValueError("monomial degree must be exactly 2g+2")
    forget = set(forget)
    target_n = n_up - len(forget)
    if forget != set(range(target_n + 1, n_up + 1)):
        raise ValueError("forgotten legs must be the top labels")
    mult = dict(psi_multiplier or {})
    for i in forget:
        if i != n_up and mult.get(i, 0) < 1:
            raise ValueError(
                f"multiplier must contain psi_{i} to forget leg {i}")

    def f(point):
        return _pushed_relation(g, point, mult, target_n)

    return finite_difference_extract(f, a_monomial, 2 * g + 2)


def pushforward_relation(g: int, n: int, psi_multiplier, a_monomial,
                         check_boundary_control: bool = True) -> TautClass:
    """Pushed relation on the n-marked space with the boundary-control check:
    the part of the relation supported on the boundary upstairs must push to
    classes supported on the boundary downstairs."""
    if n > g:
        raise ValueError("the pushed-relation route needs n <= g")
    a_monomial = tuple(a_monomial)
    if any(a_monomial[i - 1] < 1 for i in range(1, n + 1)):
        raise ValueError("monomial must be a multiple of a_1..a_n")
    mult = dict(psi_multiplier or {})
    for i in range(n + 1, 2 * g + 3):
        if mult.get(i, 0) < 1:
            raise ValueError("multiplier must contain psi_i for i = n+1..2g+2")
    forget = range(n + 1, 2 * g + 4)
    out = dr_relation_coefficient(g, a_monomial, mult, forget)
    if check_boundary_control:
        def f_boundary(point):
            A = point + (-sum(point),)
            rel = dr_relation(g, A)
            rel = rel - rel.restrict("open")
            return rel.mul_monomial(psi_exps=mult).pushforward_to(n)
        leak = finite_difference_extract(f_boundary, a_monomial, 2 * g + 2)
        if not leak.restrict("open").is_zero():
            raise RelationPipelineError(
                "boundary terms leaked into the open locus after pushforward")
    return out


# ---------------------------------------------------------------------------
# Monomial bookkeeping
# ---------------------------------------------------------------------------

def monomial_key(psi_exps: dict, kappas: dict) -> str:
    bits = []
    for i in sorted(k for k, v in psi_exps.items() if v):
        e = psi_exps[i]
        bits.append(f"psi{i}" + (f"^{e}" if e > 1 else ""))
    for a in sorted(k for k, v in kappas.items() if v):
        x = kappas[a]
        bits.append(f"kappa{a}" + (f"^{x}" if x > 1 else ""))
    return "*".join(bits) if bits else "1"


def parse_monomial(text: str):
    psi: dict = {}
    kappa: dict = {}
    text = text.strip()
    if text in ("", "1"):
        return psi, kappa
    for piece in text.split("*"):
        m = re.fullmatch(r"(psi|kappa)(\d+)(?:\^(\d+))?", piece.strip())
        if not m:
            raise ValueError(f"cannot parse monomial piece {piece!r}")
        store = psi if m.group(1) == "psi" else kappa
        idx = int(m.group(2))
        store[idx] = store.get(idx, 0) + int(m.group(3) or 1)
    return psi, kappa


def open_monomial_decomposition(c: TautClass):
    """Decompose the edgeless part of a class as {monomial key: coefficient};
    also returns the boundary remainder."""
    open_part = {}
    boundary = TautClass(c.g, c.n)
    for term, coeff in c.terms.items():
        if term.graph.n_edges == 0:
            psi = {i + 1: e for i, e in enumerate(term.psi_leg) if e}
            kappa = {a: x for a, x in term.kappa[0]}
            open_part[monomial_key(psi, kappa)] = coeff
        else:
            boundary._accumulate(term, coeff)
    return open_part, boundary


def monomial_class(g: int, n: int, key: str) -> TautClass:
    psi, kappa = parse_monomial(key)
    return TautClass.monomial(g, n, psi_exps=psi, kappas=kappa)


# ---------------------------------------------------------------------------
# Relation database
# ---------------------------------------------------------------------------

class BoundaryExpression:
    """A class supported on the boundary plus the provenance of how it was
    produced."""

    __slots__ = ("value", "provenance")

    def __init__(self, value: TautClass, provenance):
        for term in value.terms:
            if term.graph.n_edges == 0:
                raise RelationPipelineError(
                    "boundary expression contains an edgeless stratum")
        self.value = value
        self.provenance = list(provenance)
        if not value.is_zero() and not self.provenance:
            raise RelationPipelineError("nonzero boundary expression without provenance")

    def to_json(self) -> dict:
        return {"value": self.value.to_json(), "provenance": self.provenance}

    @classmethod
    def from_json(cls, data: dict) -> "BoundaryExpression":
        return cls(TautClass.from_json(data["value"]), data["provenance"])


def _record_hash(key_json: dict, value_json: dict) -> str:
    blob = json.dumps({"key": key_json, "value": value_json},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class RelationDatabase:
    """Append-only, content-addressed store of boundary expressions keyed by
    (g, n, monomial).  Recomputation must reproduce stored values bit-exactly
    or fail loudly."""

    def __init__(self, path=None):
        self.path = path
        self.records: dict = {}
        if path is not None:
            try:
                handle = open(path, "r", encoding="utf-8")
            except FileNotFoundError:
                handle = None
            if handle is not None:
                with handle:
                    for line in handle:
                        line = line.strip()
                        if not line:
                            continue
                        rec = json.loads(line)
                        if _record_hash(rec["key"], rec["value"]) != rec["sha256"]:
                            raise CacheIntegrityError(
                                f"corrupt record for key {rec['key']}")
                        key = (rec["key"]["g"], rec["key"]["n"], rec["key"]["monomial"])
                        self.records[key] = BoundaryExpression.from_json(rec)

    def get(self, g: int, n: int, monomial: str):
        return self.records.get((g, n, monomial))

    def store(self, g: int, n: int, monomial: str,
              expression: BoundaryExpression) -> BoundaryExpression:
        key = (g, n, monomial)
        if key in self.records:
            old = json.dumps(self.records[key].to_json()["value"], sort_keys=True)
            new = json.dumps(expression.to_json()["value"], sort_keys=True)
            if old != new:
                raise CacheConsistencyError(
                    f"recomputed value for {key} differs from the stored record")
            return self.records[key]
        self.records[key] = expression
        if self.path is not None:
            key_json = {"g": g, "n": n, "monomial": monomial}
            value_json = expression.to_json()["value"]
            rec = {
                "key": key_json,
                "value": value_json,
                "provenance": expression.provenance,
                "sha256": _record_hash(key_json, value_json),
            }
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(rec, sort_keys=True) + "\n")
        return expression


# ---------------------------------------------------------------------------
# The descending elimination on the (2g+3)-marked space
# ---------------------------------------------------------------------------

def _psi_monomial_key(exps: tuple) -> str:
    return monomial_key({i + 1: e for i, e in enumerate(exps) if e}, {})


def _elimination_monomial(g: int, K: tuple, k: int) -> tuple:
    """The ramification monomial isolating Psi_K psi_{2g+3}^{k-1}."""
    width = 2 * g + 2
    I_K = [i for i in range(1, width + 1) if K[i - 1] == 0]
    if len(I_K) < 2 * (k - 1):
        raise RelationPipelineError("too few zero slots for the elimination step")
    j = I_K[2 * (k - 1) - 1] if k >= 2 else 0
    m = []
    for i in range(1, width + 1):
        if K[i - 1]:
            m.append(2 * K[i - 1])
        elif i <= j:
            m.append(1)
        else:
            m.append(0)
    if sum(m) != width:
        raise RelationPipelineError("elimination monomial has the wrong degree")
    return tuple(m)


def psi_boundary_lemma(g: int, db: RelationDatabase | None = None) -> dict:
    """Boundary expressions for every degree-(g+1) psi-monomial on the
    (2g+3)-marked space of genus g, by descending elimination on the power of
    the last psi-class.  Returns {monomial key: BoundaryExpression}."""
    db = db or RelationDatabase()
    n = 2 * g + 3
    width = 2 * g + 2
    results: dict = {}

    def record(full_exps: tuple, expression: TautClass, provenance):
        key = _psi_monomial_key(full_exps)
        be = BoundaryExpression(expression, provenance)
        db.store(g, n, key, be)
        results[key] = be

    if g + 1 > 3 * g - 3 + n:
        # genus 0: every degree-one psi-monomial on the three-marked space
        # already exceeds the dimension, so the expressions are zero
        for i in range(n):
            exps = [0] * n
            exps[i] = g + 1
            record(tuple(exps), TautClass(g, n), [])
        return results

    # The doubled-divisor normalization 2^{g+1} (g+1)! [omega]_{g+1} makes
    # every pivot the literal multinomial coefficient of the squared bracket;
    # the produced boundary expressions are scale-independent.
    scale = Fraction(2 ** (g + 1))

    # base: the all-ones monomial isolates psi_{2g+3}^{g+1}
    base_m = (1,) * width
    rel = dr_relation_coefficient(g, base_m) * scale
    open_part, boundary = open_monomial_decomposition(rel)
    base_key = _psi_monomial_key((0,) * width + (g + 1,))
    expected = math.factorial(width)
    if set(open_part) != {base_key} or open_part[base_key] != expected:
        raise RelationPipelineError(
            f"base elimination step expected {expected} * psi_{n}^{g+1}, got {open_part}")
    record((0,) * width + (g + 1,), -boundary * Fraction(1, expected),
           [f"dr-coefficient g={g} monomial={base_m} (base step)"])

    for k in range(g + 1, 0, -1):
        deg = g + 1 - (k - 1)
        for K in _compositions(deg, width):
            target = K + (k - 1,)
            m = _elimination_monomial(g, K, k)
            rel = dr_relation_coefficient(g, m) * scale
            open_part, boundary = open_monomial_decomposition(rel)
            _check_key_observation(g, m, open_part)
            target_key = _psi_monomial_key(target)
            if target_key not in open_part:
                raise RelationPipelineError(
                    f"elimination step lost its target {target_key}")
            c_k = open_part.pop(target_key)
            if not (c_k > 0 and c_k.denominator == 1):
                raise RelationPipelineError(
                    f"pivot for {target_key} is not a positive integer: {c_k}")
            acc = -boundary
            for other_key, coeff in open_part.items():
                exps = _psi_exps_from_key(other_key, n)
                if exps[-1] < k:
                    raise RelationPipelineError(
                        f"unresolved open monomial {other_key} in step {target_key}")
                acc = acc - results[other_key].value * coeff
            record(target, acc * Fraction(1, c_k),
                   [f"dr-coefficient g={g} monomial={m} (stage k={k})"])
    return results


def _compositions(total: int, width: int):
    if width == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, width - 1):
            yield (head,) + rest


def _psi_exps_from_key(key: str, n: int) -> tuple:
    psi, kappa = parse_monomial(key)
    if kappa:
        raise RelationPipelineError(f"unexpected kappa factor in {key}")
    return tuple(psi.get(i, 0) for i in range(1, n + 1))


def _check_key_observation(g: int, m: tuple, open_part: dict):
    """Structural filter: the coefficient of a monomial that is not a multiple
    of a_j^{2k} contains no psi-monomial multiple of psi_j^k."""
    n = 2 * g + 3
    for key in open_part:
        exps = _psi_exps_from_key(key, n)
        for j in range(1, 2 * g + 3):  # the last label is unconstrained
            if j <= 2 * g + 2 and exps[j - 1] > m[j - 1] // 2:
                raise RelationPipelineError(
                    f"monomial {key} violates the divisibility observation for j={j}")


# ---------------------------------------------------------------------------
# Boundary expressions on general spaces
# ---------------------------------------------------------------------------

def boundary_expression(g: int, n: int, monomial, db: RelationDatabase | None = None,
                        _active=None) -> BoundaryExpression:
    """Express a psi/kappa monomial of degree k as a boundary class.

    Requires k >= g for n >= 1 (k >= 1 in genus zero, k >= g-1 for n = 0);
    classes of degree beyond the dimension are zero.  Results and every
    intermediate relation are memoized in the database.
    """
    db = db or RelationDatabase()
    if isinstance(monomial, str):
        psi, kappa = parse_monomial(monomial)
    else:
        psi, kappa = dict(monomial[0]), dict(monomial[1])
    psi = {i: e for i, e in psi.items() if e}
    kappa = {a: x for a, x in kappa.items() if x}
    if any(not 1 <= i <= n for i in psi):
        raise ValueError("psi label outside the marking set")
    key = monomial_key(psi, kappa)
    deg = sum(psi.values()) + sum(a * x for a, x in kappa.items())
    threshold = 1 if g == 0 else (g - 1 if n == 0 else g)
    if deg < threshold:
        raise ValueError(
            f"degree {deg} below the vanishing threshold {threshold} on ({g},{n})")
    cached = db.get(g, n, key)
    if cached is not None:
        return cached
    if deg > 3 * g - 3 + n:
        return db.store(g, n, key, BoundaryExpression(TautClass(g, n), []))
    _active = set() if _active is None else _active
    token = (g, n, key)
    if token in _active:
        raise RelationPipelineError(f"cyclic boundary-expression request {token}")
    _active.add(token)
    try:
        be = _boundary_expression_route(g, n, psi, kappa, key, db, _active)
    finally:
        _active.discard(token)
    return db.store(g, n, key, be)


def _substitute_open(g, n, c: TautClass, db, _active, provenance):
    """Replace every edgeless monomial of c by its boundary expression."""
    open_part, boundary = open_monomial_decomposition(c)
    acc = boundary
    for mkey, coeff in open_part.items():
        sub = boundary_expression(g, n, mkey, db, _active)
        provenance.extend(sub.provenance)
        acc = acc + sub.value * coeff
    return acc


def _boundary_expression_route(g, n, psi, kappa, key, db, _active) -> BoundaryExpression:
    if g == 0:
        return _genus0_route(n, psi, kappa, db, _active)
    if n == 0:
        return _unmarked_route(g, kappa, db, _active)
    if g == 1 and psi:
        return _peel_psi_route(g, n, psi, kappa, db, _active)
    if psi and all(psi.get(i, 0) >= 1 for i in range(1, n + 1)):
        return _p_route(g, n, psi, kappa, db, _active)
    if any(psi.get(i, 0) == 0 for i in range(1, n + 1)) and n >= 2:
        return _induct_n_route(g, n, psi, kappa, db, _active)
    return _p_route(g, n, psi, kappa, db, _active)


def _psi_expression(g, n, i, db, _active) -> BoundaryExpression:
    """psi_i as a boundary class; genus 0 and 1 only, by pullback induction."""
    key = monomial_key({i: 1}, {})
    cached = db.get(g, n, key)
    if cached is not None:
        return cached
    if g == 0 and n == 3:
        be = BoundaryExpression(TautClass(0, 3), [])
        return db.store(g, n, key, be)
    if g == 1 and n == 1:
        return _one_marked_base(db, _active)["psi1"]
    if i == n:
        swap = {j: j for j in range(1, n + 1)}
        swap[1], swap[n] = n, 1
        inner = _psi_expression(g, n, 1, db, _active)
        be = BoundaryExpression(inner.value.relabel_legs(swap),
                                inner.provenance + [f"relabel 1<->{n}"])
        return db.store(g, n, key, be)
    inner = _psi_expression(g, n - 1, i, db, _active)
    bubble = boundary_divisor_class(g, n, ("sep", 0, (i, n)))
    value = inner.value.forget_pullback() + bubble
    be = BoundaryExpression(value, inner.provenance +
                            [f"pullback psi{i} from ({g},{n-1})"])
    return db.store(g, n, key, be)


def _genus0_route(n, psi, kappa, db, _active) -> BoundaryExpression:
    if psi:
        i = min(i for i, e in psi.items() if e)
        base = _psi_expression(0, n, i, db, _active)
        rest_psi = dict(psi)
        rest_psi[i] -= 1
        value = base.value.mul_monomial(psi_exps=rest_psi, kappas=kappa)
        return BoundaryExpression(value, base.provenance +
                                  [f"multiply by {monomial_key(rest_psi, kappa)}"])
    # kappa-only: kappa_a = pushforward of psi_{n+1}^{a+1}; re-express the
    # open spill recursively (its degree drops)
    a = min(kappa)
    rest = dict(kappa)
    rest[a] -= 1
    upstairs = boundary_expression(0, n + 1, ({n + 1: a + 1}, {}), db, _active)
    provenance = list(upstairs.provenance) + [f"pushforward of psi{n+1}^{a+1}"]
    pushed = upstairs.value.forget_pushforward()
    acc = _substitute_open(0, n, pushed, db, _active, provenance)
    value = acc.mul_monomial(kappas={k: v for k, v in rest.items() if v})
    return BoundaryExpression(value, provenance +
                              [f"multiply by {monomial_key({}, rest)}"])


def _peel_psi_route(g, n, psi, kappa, db, _active) -> BoundaryExpression:
    i = min(i for i, e in psi.items() if e)
    base = _psi_expression(g, n, i, db, _active)
    rest_psi = dict(psi)
    rest_psi[i] -= 1
    value = base.value.mul_monomial(psi_exps=rest_psi, kappas=kappa)
    return BoundaryExpression(value, base.provenance +
                              [f"multiply by {monomial_key(rest_psi, kappa)}"])


def _formal_monomial_pullback(g, n, psi, kappa) -> TautClass:
    """The pullback expansion of an edgeless monomial from n-1 to n markings,
    built directly from the exponents.

    The expansion on the larger space is valid even when the monomial itself
    vanishes on the smaller space for dimension reasons (the expansion is
    then a relation)."""
    out = TautClass(g, n)
    entries = sorted(kappa.items())
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
        exps = dict(psi)
        if j_total:
            exps[n] = exps.get(n, 0) + j_total
        out = out + TautClass.monomial(g, n, psi_exps=exps, kappas=kept,
                                       coeff=coeff)
    # bubble corrections, one per decorated marking
    for i, y in psi.items():
        if y == 0:
            continue
        graph = stable_graph((g, 0),
                             tuple(1 if lab in (i, n) else 0
                                   for lab in range(1, n + 1)),
                             ((0, 1),))
        rest = {j: e for j, e in psi.items() if j != i}
        out = out + TautClass(g, n).add_term(
            graph, {0: dict(kappa)},
            rest, {(0, 0): y - 1} if y > 1 else {}, Fraction(-1))
    return out


def _induct_n_route(g, n, psi, kappa, db, _active) -> BoundaryExpression:
    """Pull a monomial missing some psi back from one fewer marking."""
    if psi.get(n, 0) == 0:
        missing = n
    else:
        missing = next(i for i in range(1, n + 1) if psi.get(i, 0) == 0)
    if missing != n:
        swap = {j: j for j in range(1, n + 1)}
        swap[missing], swap[n] = n, missing
        swapped = {swap[i]: e for i, e in psi.items()}
        inner = boundary_expression(g, n, (swapped, kappa), db, _active)
        return BoundaryExpression(inner.value.relabel_legs(swap),
                                  inner.provenance + [f"relabel {missing}<->{n}"])
    inner = boundary_expression(g, n - 1, (psi, kappa), db, _active)
    pulled = inner.value.forget_pullback()
    provenance = list(inner.provenance) + [f"pullback from ({g},{n-1})"]
    # formal pullback expansion = monomial + corrections with positive psi_n
    # or an extra bubble; both sides hold even when the monomial vanishes on
    # the smaller space
    expansion = _formal_monomial_pullback(g, n, psi, kappa)
    target = TautClass.monomial(g, n, psi_exps=psi, kappas=kappa)
    corrections = expansion - target
    acc = pulled - _substitute_open(g, n, corrections, db, _active, provenance)
    return BoundaryExpression(acc, provenance)


def _one_marked_base(db, _active) -> dict:
    """psi1 and kappa1 on the one-marked genus-one space, solved from the two
    four-variable coefficient relations of the pushed degree-two relation."""
    out = {}
    cached_psi = db.get(1, 1, "psi1")
    cached_kappa = db.get(1, 1, "kappa1")
    if cached_psi is not None and cached_kappa is not None:
        return {"psi1": cached_psi, "kappa1": cached_kappa}
    mult = {2: 1, 3: 1, 4: 1}
    forget = (2, 3, 4, 5)
    rel_k = dr_relation_coefficient(1, (1, 1, 1, 1), mult, forget)
    rel_p = dr_relation_coefficient(1, (2, 1, 1, 0), mult, forget)
    sol = solve_monomial_relations([
        (rel_k, "coefficient a1a2a3a4 of the pushed relation"),
        (rel_p, "coefficient a1^2a2a3 of the pushed relation"),
    ])
    for key in ("psi1", "kappa1"):
        if key not in sol:
            raise RelationPipelineError(f"one-marked base system missed {key}")
        out[key] = db.store(1, 1, key, sol[key])
    return out


def solve_monomial_relations(relations) -> dict:
    """Exact Gaussian elimination over the edgeless monomials of the given
    Chow-zero relations; returns boundary expressions for every monomial the
    system determines.  Rows are kept as sparse {monomial: Fraction} maps
    with a boundary class on the right-hand side."""
    rows = []
    for rel, label in relations:
        open_part, boundary = open_monomial_decomposition(rel)
        if "1" in open_part:
            raise RelationPipelineError("relation with a fundamental-class term")
        rows.append([dict(open_part), -boundary, [label]])
    solved: dict = {}
    while True:
        rows = [r for r in rows if r[0]]
        if not rows:
            break
        row = min(rows, key=lambda r: len(r[0]))
        rows.remove(row)
        coeffs, rhs, provenance = row
        pivot_key = sorted(coeffs)[0]
        pivot = coeffs.pop(pivot_key)
        inv = Fraction(1) / pivot
        coeffs = {m: c * inv for m, c in coeffs.items()}
        rhs = rhs * inv
        for other in rows:
            factor = other[0].pop(pivot_key, None)
            if factor is None:
                continue
            for m, c in coeffs.items():
                val = other[0].get(m, Fraction(0)) - c * factor
                if val == 0:
                    other[0].pop(m, None)
                else:
                    other[0][m] = val
            other[1] = other[1] - rhs * factor
            other[2] = other[2] + provenance
        solved[pivot_key] = (coeffs, rhs, provenance)
    out: dict = {}

    def resolve(mkey):
        if mkey in out:
            return out[mkey]
        if mkey not in solved:
            raise RelationPipelineError(f"system does not determine {mkey}")
        coeffs, rhs, provenance = solved[mkey]
        acc = rhs
        for m, c in coeffs.items():
            sub = resolve(m)
            acc = acc - sub.value * c
            provenance = provenance + sub.provenance
        out[mkey] = BoundaryExpression(acc, provenance)
        return out[mkey]

    for mkey in list(solved):
        resolve(mkey)
    return out


def _p_route(g, n, psi, kappa, db, _active) -> BoundaryExpression:
    """Boundary expression through a pushed psi-monomial from the
    (2g+3)-marked space (the kappa-producing pushforward route)."""
    width = 2 * g + 3
    kappas_sorted = sorted(kappa.items())
    slots = []
    for a, x in kappas_sorted:
        slots.extend([a] * x)
    if n + len(slots) > 2 * g + 2:
        # too many kappa factors for the slot count: peel one off; the
        # remaining monomial still has degree >= g by the dimension bound
        a = slots[-1]
        rest = dict(kappa)
        rest[a] -= 1
        inner = boundary_expression(
            g, n, (psi, {k: v for k, v in rest.items() if v}), db, _active)
        return BoundaryExpression(inner.value.mul_kappa(a),
                                  inner.provenance + [f"multiply by kappa{a}"])
    exps = [0] * width
    for i in range(1, n + 1):
        exps[i - 1] = psi.get(i, 0)
    for j, a in enumerate(slots):
        exps[n + j] = a + 1
    for j in range(n + len(slots), 2 * g + 2):
        exps[j] = 1
    exps[width - 1] = 1
    K = _choose_core(g, n, tuple(exps))
    core = db.get(g, width, _psi_monomial_key(K))
    if core is None:
        psi_boundary_lemma(g, db)
        core = db.get(g, width, _psi_monomial_key(K))
    if core is None:
        raise RelationPipelineError("missing core boundary expression")
    mult = {i + 1: e - K[i] for i, e in enumerate(exps) if e - K[i] > 0}
    pushed = core.value.mul_monomial(psi_exps=mult).pushforward_to(n)
    provenance = core.provenance + [
        f"push core {_psi_monomial_key(K)} * {monomial_key(mult, {})} down to n={n}"]
    direct = TautClass.monomial(g, width, psi_exps={
        i + 1: e for i, e in enumerate(exps) if e}).pushforward_to(n)
    relation = direct - pushed        # Chow-zero with edgeless lead terms
    open_part, boundary = open_monomial_decomposition(relation)
    target_key = monomial_key(psi, kappa)
    if target_key not in open_part:
        raise RelationPipelineError(
            f"pushforward route lost its target {target_key}")
    pivot = open_part.pop(target_key)
    if pivot == 0:
        raise RelationPipelineError("pushforward route pivot vanished")
    acc = -boundary
    for mkey, coeff in open_part.items():
        sub = boundary_expression(g, n, mkey, db, _active)
        provenance = provenance + sub.provenance
        acc = acc - sub.value * coeff
    return BoundaryExpression(acc * (Fraction(1) / pivot), provenance)


def _choose_core(g, n, exps: tuple) -> tuple:
    """A degree-(g+1) sub-exponent vector satisfying the elimination-side
    constraints for the pushforward route."""
    width = 2 * g + 3
    ranges = []
    for i in range(width):
        upper = exps[i] if (i < n or i == width - 1) else max(exps[i] - 1, 0)
        ranges.append(range(min(upper, g + 1) + 1))
    for K in itertools.product(*ranges):
        if sum(K) != g + 1:
            continue
        zero_low = sum(1 for i in range(n) if K[i] == 0)
        if min(1, zero_low) <= K[width - 1]:
            return K
    raise RelationPipelineError("no admissible core decomposition exists")


def _unmarked_route(g, kappa, db, _active) -> BoundaryExpression:
    """kappa-monomials on the unmarked space via the proper one-marked
    pushforward."""
    if not kappa:
        raise ValueError("the fundamental class has no boundary expression")
    upstairs_monomial = (dict({1: 1}), dict(kappa))
    upstairs = boundary_expression(g, 1, upstairs_monomial, db, _active)
    provenance = list(upstairs.provenance) + ["pushforward to the unmarked space"]
    pushed_lhs = upstairs.value.forget_pushforward()
    direct = TautClass.monomial(g, 1, psi_exps={1: 1},
                                kappas=kappa).forget_pushforward()
    relation = direct - pushed_lhs
    open_part, boundary = open_monomial_decomposition(relation)
    target_key = monomial_key({}, kappa)
    if target_key not in open_part:
        raise RelationPipelineError("unmarked route lost its target")
    pivot = open_part.pop(target_key)
    acc = -boundary
    for mkey, coeff in open_part.items():
        sub = boundary_expression(g, 0, mkey, db, _active)
        provenance = provenance + sub.provenance
        acc = acc - sub.value * coeff
    return BoundaryExpression(acc * (Fraction(1) / pivot), provenance)


# ---------------------------------------------------------------------------
# Property-star reduction
# ---------------------------------------------------------------------------

def _needs_rewrite(genus: int, degree: int) -> bool:
    if genus == 0:
        return degree > 0
    return degree >= genus


def has_property_star(term) -> bool:
    for v in range(term.graph.n_vertices):
        d = term.vertex_degree(v)
        if d > max(term.graph.genera[v] - 1, 0):
            return False
    return True


def theorem_star_reduce(c: TautClass, db: RelationDatabase | None = None) -> TautClass:
    """Rewrite until every stratum has the per-vertex degree bound
    deg <= max(genus-1, 0); output strata of codimension k then carry at
    least k - g + 1 genus-zero vertices."""
    db = db or RelationDatabase()
    out = TautClass(c.g, c.n)
    work = list(c.terms.items())
    while work:
        term, coeff = work.pop()
        bad = next((v for v in range(term.graph.n_vertices)
                    if _needs_rewrite(term.graph.genera[v], term.vertex_degree(v))),
                   None)
        if bad is None:
            if not has_property_star(term):
                raise RelationPipelineError("rewrite finished without property star")
            expected = term.degree - c.g + 1
            rational = sum(1 for gv in term.graph.genera if gv == 0)
            if rational < expected:
                raise RelationPipelineError(
                    "output stratum is short of rational components")
            out._accumulate(term, coeff)
            continue
        replaced = _rewrite_vertex(term, bad, db)
        for t2, c2 in replaced.terms.items():
            work.append((t2, coeff * c2))
    return out


def _rewrite_vertex(term, v, db) -> TautClass:
    graph = term.graph
    psi = {}
    for rank, tag in enumerate(vertex_attachments(graph, v), start=1):
        if tag[0] == "l":
            e = term.psi_leg[tag[1] - 1]
        else:
            e = term.psi_edge[tag[1]][tag[2]]
        if e:
            psi[rank] = e
    kappa = {a: x for a, x in term.kappa[v]}
    local = boundary_expression(graph.genera[v], graph.valence(v),
                                (psi, kappa), db)
    classes = []
    for u in range(graph.n_vertices):
        if u == v:
            classes.append(local.value)
            continue
        upsi = {}
        for rank, tag in enumerate(vertex_attachments(graph, u), start=1):
            if tag[0] == "l":
                e = term.psi_leg[tag[1] - 1]
            else:
                e = term.psi_edge[tag[1]][tag[2]]
            if e:
                upsi[rank] = e
        ukappa = {a: x for a, x in term.kappa[u]}
        classes.append(TautClass.monomial(graph.genera[u], graph.valence(u),
                                          psi_exps=upsi, kappas=ukappa))
    return gluing_pushforward(graph, classes)


# ---------------------------------------------------------------------------
# Genus-zero recursion report
# ---------------------------------------------------------------------------

def trr_report(n: int, i: int = 1, db: RelationDatabase | None = None) -> dict:
    """Compare the pullback-derived boundary expression for psi_i on the
    genus-zero n-marked space with the literal recursion sum over all
    subsets of size n-2 containing i, which overcounts; the classical
    two-point-fixing form is included as the consistent variant."""
    db = db or RelationDatabase()
    derived = boundary_expression(0, n, ({i: 1}, {}), db).value
    literal = TautClass(0, n)
    for size in (n - 2,):
        for I in itertools.combinations(range(1, n + 1), size):
            if i in I:
                literal = literal + boundary_divisor_class(0, n, ("sep", 0, I))
    j, k = [x for x in range(1, n + 1) if x != i][:2]
    fixed = TautClass(0, n)
    for size in range(2, n - 1):
        for I in itertools.combinations(range(1, n + 1), size):
            if i in I and j not in I and k not in I:
                fixed = fixed + boundary_divisor_class(0, n, ("sep", 0, I))
    return {
        "derived": derived,
        "literal_recursion": literal,
        "two_point_fixed": fixed,
        "literal_matches_derived": literal == derived,
        "fixed_matches_derived": fixed == derived,
    }
