from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from ccgeo.calc import (
    Form,
    Multivector,
    Polynomial,
    VectorField,
    annihilating_form,
    annihilator_bracket,
    bracket_product_rule,
    divergence_of_contraction,
    divergence_of_contraction_flipped,
    random_polynomial,
    two_form_on_fields,
)
from ccgeo.calc import linalg

x, y, t = Polynomial.variables(3)
HALF = Fraction(1, 2)
X1 = VectorField([x**0, 0 * x, -HALF * y])
X2 = VectorField([0 * x, x**0, HALF * x])
OMEGA = Form.one_form([HALF * y, -HALF * x, x**0])


# --- frozen hand-computed values -------------------------------------------


def test_heisenberg_bracket_is_vertical():
    assert X1.bracket(X2) == VectorField.coordinate(3, 2)


def test_contact_form_values():
    d = OMEGA.exterior_derivative()
    assert d.coeffs == {(0, 1): Polynomial.constant(3, -1)}
    assert OMEGA(X1).is_zero() and OMEGA(X2).is_zero()
    assert two_form_on_fields(d, X1, X2) == -1
    assert OMEGA(X1.bracket(X2)) == 1


def test_polynomial_canonical_terms():
    p = (x + y) ** 3 - HALF * x * y
    assert [(e, str(c)) for e, c in p.terms] == [
        ((3, 0, 0), "1"), ((2, 1, 0), "3"), ((1, 2, 0), "3"), ((0, 3, 0), "1"), ((1, 1, 0), "-1/2"),
    ]
    assert p.evaluate([HALF, 1, 0]) == Fraction(25, 8)
    assert p.evaluate([0.5, 1.0, 0.0]) == pytest.approx(3.125)
    assert p.derivative(0) == 3 * x**2 + 6 * x * y + 3 * y**2 - HALF * y


def test_json_roundtrip_and_float_rejection():
    p = HALF * x**2 * t - 3 * y + 7
    assert Polynomial.from_json(3, p.to_json()) == p
    with pytest.raises(ValueError):
        Polynomial.from_json(3, [[0.5, [1, 0, 0]]])
    with pytest.raises(TypeError):
        Polynomial.constant(3, 0.5)


def test_interior_of_two_vector_on_one_form():
    # (X ^ Y) ⌟ omega = omega(X) Y - omega(Y) X
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = VectorField([random_polynomial(rng, 3, 2) for _ in range(3)])
        b = VectorField([random_polynomial(rng, 3, 2) for _ in range(3)])
        w = Form.one_form([random_polynomial(rng, 3, 1) for _ in range(3)])
        got = Multivector.wedge_fields(a, b).interior(w).to_field()
        assert got == b.scale(w(a)) - a.scale(w(b))


def test_interior_defining_property():
    # <v ⌟ alpha, beta> = <v, alpha ^ beta> for constant beta
    rng = np.random.default_rng(4)
    n = 4
    for _ in range(20):
        v = Multivector(n, 3, {idx: random_polynomial(rng, n, 1) for idx in [(0, 1, 2), (0, 2, 3), (1, 2, 3)]})
        alpha = Form(n, 1, {(i,): random_polynomial(rng, n, 1) for i in range(n)})
        for j in range(n):
            for l in range(j + 1, n):
                beta = Form(n, 2, {(j, l): 1})
                lhs = Form(n, 2, {(j, l): 1}).pair(v.interior(alpha))
                rhs = alpha.wedge(beta).pair(v)
                assert lhs == rhs


def test_d_squared_vanishes():
    rng = np.random.default_rng(5)
    w = Form.one_form([random_polynomial(rng, 3, 3) for _ in range(3)])
    assert w.exterior_derivative().exterior_derivative().is_zero()


# --- independent oracle: sympy ------------------------------------------------


def _to_sympy(p: Polynomial, syms):
    expr = 0
    for e, c in p.terms:
        term = sympy.Rational(int(c.numerator), int(c.denominator))
        for s, k in zip(syms, e):
            term *= s**k
        expr += term
    return sympy.expand(expr)


def test_products_and_brackets_match_sympy():
    syms = sympy.symbols("a b c")
    rng = np.random.default_rng(11)
    for _ in range(15):
        p, q = random_polynomial(rng, 3, 3), random_polynomial(rng, 3, 2)
        assert sympy.expand(_to_sympy(p * q, syms) - _to_sympy(p, syms) * _to_sympy(q, syms)) == 0
        a = VectorField([random_polynomial(rng, 3, 2) for _ in range(3)])
        b = VectorField([random_polynomial(rng, 3, 2) for _ in range(3)])
        br = a.bracket(b)
        for j in range(3):
            ref = sum(
                _to_sympy(a[i], syms) * sympy.diff(_to_sympy(b[j], syms), syms[i])
                - _to_sympy(b[i], syms) * sympy.diff(_to_sympy(a[j], syms), syms[i])
                for i in range(3)
            )
            assert sympy.expand(_to_sympy(br[j], syms) - ref) == 0


# --- identities -----------------------------------------------------------------


def _rand_field(rng, n=3, deg=2):
    return VectorField([random_polynomial(rng, n, deg) for _ in range(n)])


def test_identities_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(25):
        a, b = _rand_field(rng), _rand_field(rng)
        f, g = random_polynomial(rng, 3, 2), random_polynomial(rng, 3, 2)
        lhs, rhs = bracket_product_rule(f, a, g, b)
        assert lhs == rhs
        w = Form.one_form([random_polynomial(rng, 3, 2) for _ in range(3)])
        lhs, rhs = divergence_of_contraction(a, b, w)
        assert lhs == rhs
        omega = annihilating_form(a, b, Form(3, 3, {(0, 1, 2): random_polynomial(rng, 3, 1)}))
        lhs, rhs = annihilator_bracket(a, b, omega)
        assert lhs == rhs


def test_flipped_divergence_identity_fails_on_a_witness():
    # regression: the variant with the last three signs reversed is not an identity
    a = VectorField([x**0, 0 * x, 0 * x])
    b = VectorField([0 * x, x**0, x])
    w = Form.one_form([x, 0 * x, x**0])
    lhs, rhs = divergence_of_contraction(a, b, w)
    assert lhs == rhs
    lhs, rhs = divergence_of_contraction_flipped(a, b, w)
    assert lhs != rhs


def test_annihilator_bracket_requires_annihilation():
    with pytest.raises(ValueError):
        annihilator_bracket(X1, VectorField.coordinate(3, 2), OMEGA)


# --- exact linear algebra ------------------------------------------------------


def test_exact_linalg():
    a = [[2, 1], [1, 3]]
    assert linalg.solve(a, [3, 5]) == [Fraction(4, 5), Fraction(7, 5)]
    assert linalg.rank([[1, 2, 3], [2, 4, 6]]) == 1
    ker = linalg.nullspace([[1, 2, 3], [2, 4, 6]])
    assert len(ker) == 2 and all(v[0] + 2 * v[1] + 3 * v[2] == 0 for v in ker)


# --- properties ------------------------------------------------------------------

coeff = st.fractions(min_value=-3, max_value=3, max_denominator=4)
terms = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)), coeff, max_size=5
)
polys = terms.map(lambda d: Polynomial(3, d))


@settings(max_examples=60, deadline=None)
@given(polys, polys, polys)
def test_ring_axioms(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert (p - p).is_zero()


@settings(max_examples=40, deadline=None)
@given(polys, polys, st.integers(0, 2))
def test_leibniz_rule(p, q, i):
    assert (p * q).derivative(i) == p.derivative(i) * q + p * q.derivative(i)


fields = st.lists(polys, min_size=3, max_size=3).map(VectorField)


@settings(max_examples=25, deadline=None)
@given(fields, fields, fields)
def test_bracket_antisymmetry_and_jacobi(a, b, c):
    assert (a.bracket(b) + b.bracket(a)).is_zero()
    jac = a.bracket(b.bracket(c)) + b.bracket(c.bracket(a)) + c.bracket(a.bracket(b))
    assert jac.is_zero()


@settings(max_examples=25, deadline=None)
@given(polys, st.lists(st.fractions(-2, 2, max_denominator=3), min_size=3, max_size=3))
def test_exact_evaluation_matches_float(p, pt):
    assert float(p.evaluate(pt)) == pytest.approx(p.evaluate([float(v) for v in pt]), abs=1e-9)
