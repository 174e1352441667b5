import itertools
import json
from fractions import Fraction

import pytest

from tautring.algebra import MultiPoly
from tautring.graphs import stable_graph
from tautring.pixton import validate_ramification
from tautring.relations import (
    BoundaryExpression,
    CacheConsistencyError,
    CacheIntegrityError,
    RelationDatabase,
    RelationPipelineError,
    boundary_expression,
    dr_relation,
    dr_relation_coefficient,
    has_property_star,
    monomial_class,
    monomial_key,
    open_monomial_decomposition,
    parse_monomial,
    psi_boundary_lemma,
    pushforward_relation,
    theorem_star_reduce,
    theta_divisor,
    theta_generators,
    theta_power_relation,
    trr_report,
)
from tautring.strata import TautClass, boundary_divisor_class, gluing_pushforward


def dirr(g, n):
    return boundary_divisor_class(g, n, ("irr",))


# -- theta --------------------------------------------------------------------

def test_theta_zero_vector_vanishes():
    assert theta_divisor(1, 2, (0, 0)).is_zero()


def test_theta_one_nonzero_entry_rejected():
    with pytest.raises(ValueError):
        theta_divisor(1, 2, (1, 0))


def test_theta_on_two_marked_genus_one():
    th = theta_divisor(1, 2, (3, -3))
    expected = TautClass.psi(1, 2, 1, Fraction(9, 2)) + \
        TautClass.psi(1, 2, 2, Fraction(9, 2))
    assert th == expected


def test_theta_power_relation_degree():
    power = theta_power_relation(1, 2, (1, -1))
    assert power == power.degree_part(2)


def test_theta_power_m03_coefficient_forces_psi_vanishing():
    # the two-variable coefficient of the symbolic power on the three-marked
    # genus-0 space is a nonzero multiple of a single psi-class, which the
    # relation therefore kills
    power = theta_power_relation(0, 3)
    third = MultiPoly(("a1", "a2", "a3"))
    for name in ("a1", "a2"):
        third = third - MultiPoly.variable(("a1", "a2", "a3"), name)
    constrained = power.map_coefficients(lambda p: p.substitute({"a3": third}))
    coefficient = constrained.map_coefficients(
        lambda p: p.coefficient((1, 1, 0)))
    assert coefficient == TautClass.psi(0, 3, 3)
    # ... and psi_3 on the three-marked space is already zero in normal form
    assert TautClass.psi(0, 3, 3).is_zero()
    assert coefficient.is_zero()


def test_theta_generators_match_class():
    A = (1, 2, -3)
    gens = theta_generators(0, 3, A)
    rebuilt = TautClass(0, 3)
    for key, coeff in gens:
        if key[0] == "psi":
            rebuilt = rebuilt + TautClass.psi(0, 3, key[1], coeff)
        else:
            rebuilt = rebuilt + boundary_divisor_class(0, 3, key) * coeff
    assert rebuilt == theta_divisor(0, 3, A)


# -- double-ramification relations ---------------------------------------------

def test_dr_relation_monomial_validation():
    with pytest.raises(ValueError):
        dr_relation_coefficient(1, (1, 1, 1))        # wrong arity
    with pytest.raises(ValueError):
        dr_relation_coefficient(1, (1, 1, 1, 0))     # degree 3 != 4
    with pytest.raises(ValueError):
        dr_relation_coefficient(1, (1, 1, 1, 1), {2: 1}, (3, 5))  # not top labels
    with pytest.raises(ValueError):
        # forgetting leg 3 requires psi_3 in the multiplier
        dr_relation_coefficient(1, (1, 1, 1, 1), {2: 1, 4: 1}, (2, 3, 4, 5))


def test_kappa_pipeline_endpoint():
    rel = dr_relation_coefficient(1, (1, 1, 1, 1), {2: 1, 3: 1, 4: 1},
                                  (2, 3, 4, 5))
    expected = TautClass.kappa(1, 1, 1) * 144 - dirr(1, 1) * 12
    assert rel == expected


def test_psi_pipeline_endpoint():
    rel = dr_relation_coefficient(1, (2, 1, 1, 0), {2: 1, 3: 1, 4: 1},
                                  (2, 3, 4, 5))
    expected = TautClass.kappa(1, 1, 1) * 72 + TautClass.psi(1, 1, 1) * 24 \
        - dirr(1, 1) * 8
    assert rel == expected
    # normalized form: 9 kappa + 3 psi = delta
    assert rel == (TautClass.kappa(1, 1, 1) * 9 + TautClass.psi(1, 1, 1) * 3
                   - dirr(1, 1)) * 8


def test_one_loop_graph_contributes_nothing_to_top_monomial():
    # the one-vertex loop summand depends on the ramification only through a
    # quadratic, so the four-variable monomial coefficient it contributes is 0
    loop = stable_graph((0,), (0, 0, 0, 0, 0), ((0, 0),))
    probe = TautClass(1, 5).add_term(loop, {}, {}, {}, Fraction(1))
    loop_terms = set(probe.terms)

    def f(point):
        A = point + (-sum(point),)
        rel = dr_relation(1, A)
        return TautClass(1, 5, {t: c for t, c in rel.terms.items()
                                if t.graph.n_edges == 1 and t in loop_terms})

    from tautring.algebra import finite_difference_extract
    assert finite_difference_extract(f, (1, 1, 1, 1), 4).is_zero()


def test_pushforward_relation_checks_preconditions():
    with pytest.raises(ValueError):
        pushforward_relation(1, 1, {2: 1, 3: 1, 4: 1}, (0, 2, 1, 1))
    with pytest.raises(ValueError):
        pushforward_relation(1, 1, {2: 1, 3: 1}, (1, 1, 1, 1))


def test_pushforward_relation_boundary_control():
    rel = pushforward_relation(1, 1, {2: 1, 3: 1, 4: 1}, (1, 1, 1, 1),
                               check_boundary_control=True)
    assert rel == TautClass.kappa(1, 1, 1) * 144 - dirr(1, 1) * 12


def test_claim_three_pushforward_shape():
    # the kappa-producing pushforward has a nonzero integer pivot
    for k in (1,):
        c = TautClass.monomial(1, 5, psi_exps={2: k + 1, 3: 1, 4: 1, 5: 1})
        pushed = c.pushforward_to(1)
        assert pushed == TautClass.kappa(1, 1, k) * 24


def test_geometric_emptiness_short_circuit():
    # two non-nested genus-zero pieces both holding the last marking cannot
    # coexist: the product of the corresponding divisors is formally zero
    d_a = boundary_divisor_class(1, 5, ("sep", 0, (1, 2, 5)))
    assert d_a.mul_boundary(("sep", 0, (3, 4, 5))).is_zero()
    # nested pieces do coexist
    assert not d_a.mul_boundary(("sep", 0, (1, 2, 3, 5))).is_zero()


def test_dr_compact_type_restriction_is_theta_power():
    # two fully independent routes to the same compact-type class: the
    # weighting graph sum with constant-term interpolation, and repeated
    # divisor multiplication of the theta pullback
    for g, n, A in [(1, 2, (2, -2)), (0, 4, (1, 2, -1, -2)),
                    (0, 5, (1, 1, 1, -1, -2))]:
        lhs = dr_relation(g, A).restrict("compact-type")
        rhs = theta_power_relation(g, n, A)
        assert lhs == rhs, (g, n, A)


def test_theta_route_agrees_with_full_pipeline():
    # the compact-type route: square the symbolic theta pullback on the
    # 5-marked space, multiply by psi2 psi3 psi4, push down, and read the
    # same ramification coefficients as the full constant-term pipeline
    power = theta_power_relation(1, 5)
    pushed = power.mul_psi(2).mul_psi(3).mul_psi(4) \
        .restrict("compact-type").pushforward_to(1)
    variables = tuple(f"a{i}" for i in range(1, 6))
    last = MultiPoly(variables)
    for i in range(1, 5):
        last = last - MultiPoly.variable(variables, f"a{i}")
    constrained = pushed.map_coefficients(lambda p: p.substitute({"a5": last}))
    kappa_pivot = constrained.map_coefficients(
        lambda p: p.coefficient((1, 1, 1, 1, 0)))
    assert kappa_pivot == TautClass.kappa(1, 1, 1) * Fraction(1, 4) * 24 ** 2
    psi_pivot = constrained.map_coefficients(
        lambda p: p.coefficient((2, 1, 1, 0, 0)))
    assert psi_pivot == TautClass.kappa(1, 1, 1) * 72 + TautClass.psi(1, 1, 1) * 24


# -- elimination lemma ----------------------------------------------------------

def test_psi_boundary_lemma_genus_zero_trivial():
    results = psi_boundary_lemma(0)
    assert set(results) == {"psi1", "psi2", "psi3"}
    assert all(be.value.is_zero() for be in results.values())


def test_psi_boundary_lemma_genus_one():
    db = RelationDatabase()
    results = psi_boundary_lemma(1, db)
    assert len(results) == 15
    for key, be in results.items():
        assert all(t.graph.n_edges >= 1 for t in be.value.terms), key
        assert be.provenance


def test_psi_boundary_lemma_substitution_is_formal_zero():
    from tautring.relations import _compositions, _elimination_monomial
    results = psi_boundary_lemma(1)
    monomials = {(1, 1, 1, 1)}
    for k in range(2, 0, -1):
        for K in _compositions(2 - (k - 1), 4):
            monomials.add(_elimination_monomial(1, K, k))
    for m in sorted(monomials):
        rel = dr_relation_coefficient(1, m)
        open_part, boundary = open_monomial_decomposition(rel)
        acc = boundary
        for mkey, coeff in open_part.items():
            acc = acc + results[mkey].value * coeff
        assert acc.is_zero(), m


# -- boundary expressions --------------------------------------------------------

def test_boundary_expression_m04_psi():
    be = boundary_expression(0, 4, "psi1")
    assert be.value == boundary_divisor_class(0, 4, ("sep", 0, (1, 4)))


def test_trr_discrepancy_reported():
    rep = trr_report(4)
    assert rep["fixed_matches_derived"] is True
    assert rep["literal_matches_derived"] is False


def test_boundary_expression_m11():
    db = RelationDatabase()
    twelfth = dirr(1, 1) * Fraction(1, 12)
    assert boundary_expression(1, 1, "psi1", db).value == twelfth
    assert boundary_expression(1, 1, "kappa1", db).value == twelfth


def test_boundary_expression_beyond_dimension_is_zero():
    assert boundary_expression(1, 1, "psi1^2").value.is_zero()
    assert boundary_expression(0, 4, "kappa1^2").value.is_zero()


def test_boundary_expression_below_threshold_refused():
    with pytest.raises(ValueError):
        boundary_expression(2, 1, "psi1")


def test_boundary_expression_genus_zero_kappa():
    db = RelationDatabase()
    be = boundary_expression(0, 4, "kappa1", db)
    # kappa_1 on the four-marked genus-0 space has degree 1 (the square of
    # the universal cotangent class on one more marking integrates to 1), so
    # its boundary representative is a single boundary point; the recursion
    # lands on the (1,4)-bubble
    assert be.value == boundary_divisor_class(0, 4, ("sep", 0, (1, 4)))
    assert sum(be.value.terms.values()) == 1


def test_boundary_expression_deeper_marked_spaces():
    db = RelationDatabase()
    for key in ("psi1*psi2", "kappa1", "psi1^2", "kappa1*psi2"):
        be = boundary_expression(1, 2, key, db)
        assert all(t.graph.n_edges >= 1 for t in be.value.terms)


# -- substitution soundness: the produced expressions satisfy the pullback
#    recursion they were built from ------------------------------------------

def test_psi_expression_consistent_with_pullback():
    db = RelationDatabase()
    be2 = boundary_expression(1, 2, "psi1", db)
    be1 = boundary_expression(1, 1, "psi1", db)
    rebuilt = be1.value.forget_pullback() + \
        boundary_divisor_class(1, 2, ("sep", 0, (1, 2)))
    assert be2.value == rebuilt


# -- property-star reduction ------------------------------------------------------

def test_star_reduce_identity_on_star_classes():
    c = dirr(1, 1)  # undecorated boundary stratum already satisfies the bound
    assert theorem_star_reduce(c) == c


def test_star_reduce_psi_on_m11():
    db = RelationDatabase()
    reduced = theorem_star_reduce(TautClass.psi(1, 1, 1), db)
    assert reduced == dirr(1, 1) * Fraction(1, 12)
    term = next(iter(reduced.terms))
    assert sum(1 for gv in term.graph.genera if gv == 0) >= 1


def test_star_reduce_census_battery():
    db = RelationDatabase()
    battery = []
    # two-marked genus-1 inputs of codimension 2
    battery.append(TautClass.monomial(1, 2, psi_exps={1: 1, 2: 1}))
    battery.append(TautClass.monomial(1, 2, psi_exps={2: 1}, kappas={1: 1}))
    battery.append(TautClass.monomial(1, 2, kappas={1: 2}))
    # one-marked genus-1 input of codimension 1
    battery.append(TautClass.kappa(1, 1, 1))
    # one-marked genus-2 inputs of codimension >= 2 whose decorated vertices
    # have genus at most 1
    two_ones = stable_graph((1, 1), (0,), ((0, 1),))
    battery.append(TautClass(2, 1).add_term(two_ones, {}, {1: 1}, {}, Fraction(1)))
    battery.append(TautClass(2, 1).add_term(two_ones, {1: {1: 1}}, {}, {},
                                            Fraction(1)))
    loop_g1 = stable_graph((1,), (0,), ((0, 0),))
    battery.append(TautClass(2, 1).add_term(loop_g1, {0: {1: 1}}, {}, {},
                                            Fraction(1)))
    for c in battery:
        g = c.g
        reduced = theorem_star_reduce(c, db)
        for term in reduced.terms:
            assert has_property_star(term)
            k = term.degree
            rational = sum(1 for gv in term.graph.genera if gv == 0)
            assert rational >= k - g + 1, (c, term)


# -- database -----------------------------------------------------------------

def test_database_round_trip_and_memoization(tmp_path):
    path = tmp_path / "relations.jsonl"
    db = RelationDatabase(str(path))
    be = boundary_expression(0, 4, "psi1", db)
    again = RelationDatabase(str(path))
    cached = again.get(0, 4, "psi1")
    assert cached is not None
    assert json.dumps(cached.to_json()) == json.dumps(be.to_json())
    # recomputation against the loaded store must agree bit-exactly
    assert boundary_expression(0, 4, "psi1", again).value == be.value


def test_database_detects_corruption(tmp_path):
    path = tmp_path / "relations.jsonl"
    db = RelationDatabase(str(path))
    boundary_expression(0, 4, "psi1", db)
    text = path.read_text()
    path.write_text(text.replace('"psi1"', '"psi2"', 1))
    with pytest.raises(CacheIntegrityError):
        RelationDatabase(str(path))


def test_database_rejects_conflicting_store(tmp_path):
    path = tmp_path / "relations.jsonl"
    db = RelationDatabase(str(path))
    be = boundary_expression(0, 4, "psi1", db)
    wrong = BoundaryExpression(be.value * 2, ["bogus"])
    with pytest.raises(CacheConsistencyError):
        db.store(0, 4, "psi1", wrong)


def test_boundary_expression_never_stores_open_strata():
    with pytest.raises(RelationPipelineError):
        BoundaryExpression(TautClass.psi(1, 1, 1), ["x"])
    with pytest.raises(RelationPipelineError):
        BoundaryExpression(dirr(1, 1), [])


# -- monomial helpers ------------------------------------------------------------

def test_monomial_parse_and_key():
    psi, kappa = parse_monomial("psi1^2*kappa1*psi3")
    assert psi == {1: 2, 3: 1} and kappa == {1: 1}
    assert monomial_key(psi, kappa) == "psi1^2*psi3*kappa1"
    assert parse_monomial("1") == ({}, {})
    with pytest.raises(ValueError):
        parse_monomial("lambda1")


def test_monomial_class_round_trip():
    c = monomial_class(1, 2, "psi1*kappa1")
    opened, boundary = open_monomial_decomposition(c)
    assert boundary.is_zero()
    assert opened == {"psi1*kappa1": Fraction(1)}
