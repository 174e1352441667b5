"""Exact rational algebra for the tautological-ring engine.

Sparse multivariate polynomials over Fraction, exact Lagrange interpolation,
closed-form power sums, and finite-difference coefficient extraction.  No
floating-point number is ever produced: every coefficient in the system is a
Fraction, so equality tests are exact.
"""

from __future__ import annotations

import itertools
import math
import re
from fractions import Fraction
from typing import Callable, Mapping, Sequence


class AlgebraError(ValueError):
    """Invalid algebraic input (unknown variable, malformed sample set)."""


class InterpolationError(AlgebraError):
    """Sample values are inconsistent with the declared degree bound."""


def _coerce(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise AlgebraError(f"expected an exact rational, got {value!r}")


class MultiPoly:
    """Sparse polynomial in a fixed, ordered tuple of variables.

    Terms are stored as a map from exponent tuples to nonzero Fraction
    coefficients.  Two polynomials interoperate only if they share the same
    variable tuple; plain integers and Fractions coerce to constants.
    """

    __slots__ = ("variables", "terms")

    def __init__(self, variables: Sequence[str], terms: Mapping[tuple, Fraction] | None = None):
        self.variables = tuple(variables)
        clean = {}
        if terms:
            width = len(self.variables)
            for exps, coeff in terms.items():
                exps = tuple(exps)
                if len(exps) != width:
                    raise AlgebraError("exponent tuple length does not match variable list")
                coeff = _coerce(coeff)
                if coeff != 0:
                    clean[exps] = coeff
        self.terms = clean

    @classmethod
    def constant(cls, variables: Sequence[str], value) -> "MultiPoly":
        variables = tuple(variables)
        value = _coerce(value)
        if value == 0:
            return cls(variables)
        return cls(variables, {(0,) * len(variables): value})

    @classmethod
    def variable(cls, variables: Sequence[str], name: str) -> "MultiPoly":
        variables = tuple(variables)
        if name not in variables:
            raise AlgebraError(f"unknown variable {name!r}")
        exps = tuple(1 if v == name else 0 for v in variables)
        return cls(variables, {exps: Fraction(1)})

    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def _check(self, other: "MultiPoly"):
        if self.variables != other.variables:
            raise AlgebraError("polynomials use different variable lists")

    def _lift(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        return MultiPoly.constant(self.variables, other)

    def __add__(self, other):
        other = self._lift(other)
        terms = dict(self.terms)
        for exps, coeff in other.terms.items():
            terms[exps] = terms.get(exps, Fraction(0)) + coeff
        return MultiPoly(self.variables, terms)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, Fraction(0)) + c1 * c2
        return MultiPoly(self.variables, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise AlgebraError("negative powers are not polynomials")
        out = MultiPoly.constant(self.variables, 1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, MultiPoly):
            return self.variables == other.variables and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            other = _coerce(other)
            if other == 0:
                return not self.terms
            return self.terms == {(0,) * len(self.variables): other}
        return NotImplemented

    def __hash__(self):
        return hash((self.variables, frozenset(self.terms.items())))

    def coefficient(self, exps: Sequence[int]) -> Fraction:
        return self.terms.get(tuple(exps), Fraction(0))

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * len(self.variables), Fraction(0))

    def evaluate(self, values: Mapping[str, Fraction]) -> Fraction:
        missing = [v for v in self.variables if v not in values]
        if missing:
            raise AlgebraError(f"no value supplied for {missing}")
        total = Fraction(0)
        point = [_coerce(values[v]) for v in self.variables]
        for exps, coeff in self.terms.items():
            term = coeff
            for base, e in zip(point, exps):
                if e:
                    term *= base ** e
            total += term
        return total

    def substitute(self, bindings: Mapping[str, "MultiPoly | int | Fraction"]) -> "MultiPoly":
        """Exact substitution; unbound variables remain symbolic."""
        for name in bindings:
            if name not in self.variables:
                raise AlgebraError(f"unknown variable {name!r}")
        idx = {name: self.variables.index(name) for name in bindings}
        values = {name: self._lift(val) for name, val in bindings.items()}
        result = MultiPoly(self.variables)
        for exps, coeff in self.terms.items():
            residual = list(exps)
            factor = MultiPoly.constant(self.variables, coeff)
            for name, i in idx.items():
                if exps[i]:
                    factor = factor * values[name] ** exps[i]
                    residual[i] = 0
            factor = factor * MultiPoly(self.variables, {tuple(residual): Fraction(1)})
            result = result + factor
        return result

    def to_text(self) -> str:
        """Canonical text form: terms sorted lexicographically by exponents."""
        if not self.terms:
            return "0"
        pieces = []
        for exps in sorted(self.terms):
            coeff = self.terms[exps]
            bits = [str(coeff)]
            for name, e in zip(self.variables, exps):
                if e == 1:
                    bits.append(name)
                elif e > 1:
                    bits.append(f"{name}^{e}")
            pieces.append("*".join(bits))
        return " + ".join(pieces)

    @classmethod
    def from_text(cls, variables: Sequence[str], text: str) -> "MultiPoly":
        variables = tuple(variables)
        text = text.strip()
        if text == "0":
            return cls(variables)
        terms: dict = {}
        for piece in text.split(" + "):
            bits = piece.split("*")
            coeff = Fraction(bits[0])
            exps = [0] * len(variables)
            for bit in bits[1:]:
                m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)(?:\^(\d+))?", bit)
                if not m or m.group(1) not in variables:
                    raise AlgebraError(f"cannot parse monomial piece {bit!r}")
                exps[variables.index(m.group(1))] += int(m.group(2) or 1)
            key = tuple(exps)
            terms[key] = terms.get(key, Fraction(0)) + coeff
        return cls(variables, terms)

    def __repr__(self):
        return f"MultiPoly({self.to_text()!r})"


def poly_substitute(p: MultiPoly, bindings: Mapping[str, MultiPoly | int | Fraction]) -> MultiPoly:
    return p.substitute(bindings)


def lagrange_interpolate(samples: Sequence[tuple], degree_bound: int,
                         variable: str = "r") -> MultiPoly:
    """Unique polynomial of degree <= degree_bound through the samples.

    Extra samples beyond degree_bound + 1 are used as a consistency check; a
    mismatch raises InterpolationError (the caller's degree bound was wrong).
    """
    points = [p for p, _ in samples]
    if len(set(points)) != len(points):
        raise AlgebraError("duplicated sample points")
    if len(samples) < degree_bound + 1:
        raise AlgebraError("not enough samples for the requested degree bound")
    vars_ = (variable,)
    base = samples[: degree_bound + 1]
    result = MultiPoly(vars_)
    x = MultiPoly.variable(vars_, variable)
    for i, (xi, yi) in enumerate(base):
        term = MultiPoly.constant(vars_, _coerce(yi))
        for j, (xj, _) in enumerate(base):
            if i == j:
                continue
            term = term * (x - Fraction(xj)) * Fraction(1, xi - xj)
        result = result + term
    for xi, yi in samples[degree_bound + 1:]:
        if result.evaluate({variable: Fraction(xi)}) != _coerce(yi):
            raise InterpolationError(
                f"sample at {xi} disagrees with degree-{degree_bound} interpolant")
    return result


def faulhaber_sum(k: int, variable: str = "x") -> MultiPoly:
    """Closed form of sum(a**k for a in 1..x) as a degree-(k+1) polynomial."""
    if k < 0:
        raise AlgebraError("power must be non-negative")
    samples = []
    running = Fraction(0)
    for m in range(k + 2):
        if m:
            running += Fraction(m) ** k
        samples.append((m, running))
    return lagrange_interpolate(samples, k + 1, variable)


def _stirling2(m: int, k: int) -> int:
    """Number of partitions of an m-set into k nonempty blocks."""
    if k > m:
        return 0
    row = [1]
    for i in range(1, m + 1):
        new = [0] * (i + 1)
        for j in range(1, i + 1):
            new[j] = (row[j] if j < len(row) else 0) * j + row[j - 1]
        row = new
    return row[k]


def _bounded_exponents(lower: tuple, total_bound: int):
    """All exponent tuples >= lower componentwise with total <= total_bound."""
    slack = total_bound - sum(lower)
    n = len(lower)

    def rec(i, remaining):
        if i == n:
            yield ()
            return
        for extra in range(remaining + 1):
            for rest in rec(i + 1, remaining - extra):
                yield (lower[i] + extra,) + rest

    yield from rec(0, slack)


def finite_difference_extract(f: Callable[[tuple], object], monomial: Sequence[int],
                              total_degree: int):
    """Exact coefficient of the given monomial in a black-box polynomial f.

    f maps integer tuples to values in any Q-vector space (Fraction, MultiPoly
    or TautClass); it is assumed to be a polynomial of total degree at most
    total_degree.  The coefficient is recovered from finitely many evaluations
    of f via iterated forward differences, with the Stirling-number correction
    that makes the stencil exact for every polynomial of the declared degree.
    """
    monomial = tuple(int(m) for m in monomial)
    if any(m < 0 for m in monomial):
        raise AlgebraError("monomial exponents must be non-negative")
    if sum(monomial) > total_degree:
        raise AlgebraError("monomial degree exceeds the declared total degree")
    cache: dict = {}

    def ev(pt):
        if pt not in cache:
            cache[pt] = f(pt)
        return cache[pt]

    def delta(orders):
        # Iterated forward difference of f at the origin.
        acc = None
        for offsets in itertools.product(*[range(k + 1) for k in orders]):
            sign = (-1) ** (sum(orders) - sum(offsets))
            weight = Fraction(sign)
            for k, j in zip(orders, offsets):
                weight *= math.comb(k, j)
            piece = ev(offsets) * weight
            acc = piece if acc is None else acc + piece
        return acc

    higher = sorted(_bounded_exponents(monomial, total_degree),
                    key=lambda e: -sum(e))
    coeffs: dict = {}
    for key in higher:
        value = delta(key)
        for other, cval in coeffs.items():
            if all(o >= k for o, k in zip(other, key)):
                weight = 1
                for ko, kk in zip(other, key):
                    weight *= math.factorial(kk) * _stirling2(ko, kk)
                if weight:
                    value = value + cval * Fraction(-weight)
        norm = 1
        for k in key:
            norm *= math.factorial(k)
        coeffs[key] = value * Fraction(1, norm)
    return coeffs[monomial]
