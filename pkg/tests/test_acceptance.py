"""Acceptance suite: one test per criterion, every equality exact.

Each test prints a single PASS line on success; run with `pytest -s
tests/test_acceptance.py` to see the report.
"""

import itertools
from fractions import Fraction

from tautring.algebra import MultiPoly, lagrange_interpolate
from tautring.pixton import minimum_modulus, omega_constant_term, omega_r
from tautring.relations import (
    RelationDatabase,
    _compositions,
    _elimination_monomial,
    boundary_expression,
    dr_relation_coefficient,
    has_property_star,
    mul_divisor_sum,
    open_monomial_decomposition,
    psi_boundary_lemma,
    theorem_star_reduce,
    theta_divisor,
    theta_generators,
    trr_report,
)
from tautring.strata import TautClass, boundary_divisor_class
from tautring.graphs import stable_graph

DB = RelationDatabase()

CT_CASES = [
    # (g, n, ramification vectors); the one-marked genus-1 space admits a
    # single admissible vector, the zero one
    (0, 4, [(1, 1, -1, -1), (1, 2, -1, -2), (2, -1, 0, -1)]),
    (0, 5, [(1, 1, 1, -1, -2), (2, -1, -1, 1, -1), (1, 2, -3, 1, -1)]),
    (1, 1, [(0,)]),
    (1, 2, [(1, -1), (2, -2), (3, -3)]),
]


def dirr(g, n):
    return boundary_divisor_class(g, n, ("irr",))


def exp_theta(g, n, A, max_degree):
    gens = theta_generators(g, n, A)
    out = TautClass.fundamental(g, n)
    acc = TautClass.fundamental(g, n)
    factorial = 1
    for k in range(1, max_degree + 1):
        acc = mul_divisor_sum(acc, gens)
        factorial *= k
        out = out + acc * Fraction(1, factorial)
    return out


def test_criterion_1_kappa_pipeline():
    rel = dr_relation_coefficient(1, (1, 1, 1, 1), {2: 1, 3: 1, 4: 1},
                                  (2, 3, 4, 5))
    expected = TautClass.kappa(1, 1, 1) * Fraction(1, 4) * 24 ** 2 \
        + dirr(1, 1) * (Fraction(-1, 4) * 48)
    assert rel == expected
    solved = boundary_expression(1, 1, "kappa1", DB)
    assert solved.value == dirr(1, 1) * Fraction(1, 12)
    print("\nPASS criterion 1: a1a2a3a4 pipeline gives (1/4)*24^2*kappa1 "
          "- (1/4)*48*dirr, hence kappa1 = (1/12) dirr")


def test_criterion_2_psi_pipeline():
    rel = dr_relation_coefficient(1, (2, 1, 1, 0), {2: 1, 3: 1, 4: 1},
                                  (2, 3, 4, 5))
    nine_three_one = TautClass.kappa(1, 1, 1) * 9 + TautClass.psi(1, 1, 1) * 3 \
        - dirr(1, 1)
    assert rel == nine_three_one * 8
    solved = boundary_expression(1, 1, "psi1", DB)
    assert solved.value == dirr(1, 1) * Fraction(1, 12)
    print("PASS criterion 2: a1^2a2a3 pipeline gives 9*kappa1 + 3*psi1 = dirr, "
          "hence psi1 = (1/12) dirr")


def test_criterion_3_compact_type_consistency():
    for g, n, vectors in CT_CASES:
        for A in vectors:
            omega = omega_constant_term(g, A, g + 1).restrict("compact-type")
            theta_exp = exp_theta(g, n, A, g + 1)
            for d in range(g + 2):
                assert omega.degree_part(d) == theta_exp.degree_part(d), (g, n, A, d)
    print("PASS criterion 3: compact-type restriction matches the truncated "
          "theta exponential on all four spaces")


def test_criterion_4_open_theta_symbolic():
    for g, n, _vectors in CT_CASES:
        variables = tuple(f"a{i}" for i in range(1, n + 1))
        last = MultiPoly(variables)
        for i in range(1, n):
            last = last - MultiPoly.variable(variables, f"a{i}")
        constrain = lambda p: p.substitute({f"a{n}": last})
        lhs = theta_divisor(g, n).restrict("open").map_coefficients(constrain)
        rhs = TautClass(g, n)
        for i in range(1, n + 1):
            ai = MultiPoly.variable(variables, f"a{i}") if i < n else last
            rhs = rhs + TautClass.psi(g, n, i, ai * ai * Fraction(1, 2))
        assert lhs == rhs, (g, n)
    print("PASS criterion 4: open restriction of the theta divisor is "
          "(1/2) sum a_i^2 psi_i, symbolically modulo sum a_i = 0")


def test_criterion_5_r_polynomiality():
    for g, n, vectors in CT_CASES:
        for A in vectors:
            bound = 3 * (g + 1)
            r0 = minimum_modulus(A)
            window = bound + 1
            samples = {r: omega_r(g, A, r, g + 1)
                       for r in range(r0, r0 + 2 * window)}
            strata = set()
            for cls in samples.values():
                strata.update(cls.terms)
            for term in strata:
                first = [(r, samples[r].coefficient(term))
                         for r in range(r0, r0 + window)]
                second = [(r, samples[r].coefficient(term))
                          for r in range(r0 + window, r0 + 2 * window)]
                assert lagrange_interpolate(first, bound) == \
                    lagrange_interpolate(second, bound), (g, A, term)
    print("PASS criterion 5: disjoint modulus windows give identical "
          "interpolants for every stratum coefficient")


def test_criterion_6_dr_sanity_at_zero():
    # independent oracle: direct weighting sum over the loop, interpolated
    def oracle_coefficient(r):
        return Fraction(sum(Fraction(w * (r - w), 2) for w in range(r)), 2 * r)

    samples = [(r, oracle_coefficient(r)) for r in (5, 7, 9, 11)]
    poly = lagrange_interpolate(samples, 2)
    constant = poly.constant_term()
    assert constant == Fraction(-1, 24)
    omega = omega_constant_term(1, (0,), 1)
    loop = stable_graph((0,), (0,), ((0, 0),))
    loop_term = next(iter(TautClass(1, 1).add_term(
        loop, {}, {}, {}, Fraction(1)).terms))
    assert omega.degree_part(1) == TautClass(1, 1).add_term(
        loop, {}, {}, {}, constant)
    assert omega.coefficient(loop_term) == constant
    print("PASS criterion 6: degree-1 class at zero ramification is the loop "
          "stratum with coefficient -1/24 (constant term of (r^2-1)/24)")


def test_criterion_7_pushforward_suite():
    for g, n in [(1, 1), (2, 1)]:
        for k in range(1, 5):
            pushed = TautClass.monomial(g, n + 1,
                                        psi_exps={n + 1: k + 1}).forget_pushforward()
            assert pushed == TautClass.kappa(g, n, k), (g, n, k)
    for g, m in [(1, 1), (2, 1)]:
        pushed = TautClass.monomial(g, m + 2, psi_exps={m + 1: 1, m + 2: 1}) \
            .pushforward_to(m)
        k0 = Fraction(2 * g - 2 + m)
        assert pushed == TautClass.fundamental(g, m) * (k0 * k0 + k0)
    assert TautClass.fundamental(1, 2).forget_pushforward().is_zero()
    assert TautClass.fundamental(2, 1).forget_pushforward().is_zero()
    print("PASS criterion 7: psi-power pushforwards give kappa classes, the "
          "two-point pushforward gives kappa0^2 + kappa0, and 1 pushes to 0")


def test_criterion_8_elimination_lemma():
    results = psi_boundary_lemma(1, DB)
    assert len(results) == 15
    for key, be in results.items():
        assert all(t.graph.n_edges >= 1 for t in be.value.terms), key
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
    print("PASS criterion 8: all 15 degree-2 psi-monomials on the 5-marked "
          "genus-1 space receive boundary expressions; substitution back "
          "into every generating relation is formally zero")


def test_criterion_9_star_census():
    battery = []
    battery.append((1, TautClass.psi(1, 1, 1)))
    battery.append((1, TautClass.kappa(1, 1, 1)))
    battery.append((1, TautClass.monomial(1, 2, psi_exps={1: 1, 2: 1})))
    battery.append((1, TautClass.monomial(1, 2, psi_exps={2: 2})))
    battery.append((1, TautClass.monomial(1, 2, kappas={1: 2})))
    battery.append((1, TautClass.monomial(1, 2, psi_exps={1: 1}, kappas={1: 1})))
    two_ones = stable_graph((1, 1), (0,), ((0, 1),))
    battery.append((2, TautClass(2, 1).add_term(two_ones, {}, {1: 1}, {},
                                                Fraction(1))))
    battery.append((2, TautClass(2, 1).add_term(two_ones, {1: {1: 1}}, {}, {},
                                                Fraction(1))))
    loop_g1 = stable_graph((1,), (0,), ((0, 0),))
    battery.append((2, TautClass(2, 1).add_term(loop_g1, {0: {1: 1}}, {}, {},
                                                Fraction(1))))
    battery.append((2, TautClass(2, 1).add_term(
        loop_g1, {}, {}, {(0, 0): 1}, Fraction(1))))
    for g, cls in battery:
        reduced = theorem_star_reduce(cls, DB)
        for term in reduced.terms:
            assert has_property_star(term)
            rational = sum(1 for gv in term.graph.genera if gv == 0)
            assert rational >= term.degree - g + 1, (cls, term)
    print("PASS criterion 9: every reduced stratum satisfies the per-vertex "
          "degree bound and carries at least codim - g + 1 rational vertices")


def test_criterion_10_genus_zero_divisor():
    be = boundary_expression(0, 4, "psi1", DB)
    assert be.value == boundary_divisor_class(0, 4, ("sep", 0, (1, 4)))
    report = trr_report(4, 1, DB)
    assert report["literal_matches_derived"] is False
    assert report["fixed_matches_derived"] is True
    print("PASS criterion 10: psi1 on the four-marked genus-0 space is the "
          "(1,4)-bubble divisor; the printed recursion overcounts and the "
          "discrepancy is reported, not silently resolved")
