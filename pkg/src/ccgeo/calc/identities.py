"""Exact calculus identities, returned as ``(lhs, rhs)`` pairs.

Each function builds both sides symbolically so callers can compare them
with ``==`` (exact equality of canonical polynomials).
"""

from __future__ import annotations

from .exterior import Form, Multivector, VectorField
from .polynomial import Polynomial


def bracket_product_rule(f: Polynomial, x: VectorField, g: Polynomial, y: VectorField):
    """``[fX, gY]`` against ``fg[X,Y] + f X(g) Y - g Y(f) X``."""
    lhs = x.scale(f).bracket(y.scale(g))
    rhs = x.bracket(y).scale(f * g) + y.scale(f * x.apply(g)) - x.scale(g * y.apply(f))
    return lhs, rhs


def two_form_on_fields(form: Form, x: VectorField, y: VectorField) -> Polynomial:
    """Evaluate a 2-form on ``X ^ Y``."""
    return form.pair(Multivector.wedge_fields(x, y))


def divergence_of_contraction(x: VectorField, y: VectorField, omega: Form):
    """Divergence of ``(X ^ Y) ⌟ omega`` for a 1-form ``omega``.

    Returns ``(-div((X^Y)⌟omega), rhs)`` where
    ``rhs = domega(X^Y) + omega([X,Y]) - omega(X) div Y + omega(Y) div X``.
    """
    contraction = Multivector.wedge_fields(x, y).interior(omega).to_field()
    lhs = -contraction.divergence()
    wx, wy = omega(x), omega(y)
    rhs = (
        two_form_on_fields(omega.exterior_derivative(), x, y)
        + omega(x.bracket(y))
        - wx * y.divergence()
        + wy * x.divergence()
    )
    return lhs, rhs


def divergence_of_contraction_flipped(x: VectorField, y: VectorField, omega: Form):
    """Variant with the divergence and bracket terms carrying opposite signs.

    Kept only as a regression witness: it does not hold in general.
    """
    contraction = Multivector.wedge_fields(x, y).interior(omega).to_field()
    lhs = -contraction.divergence()
    rhs = (
        two_form_on_fields(omega.exterior_derivative(), x, y)
        + omega(x) * y.divergence()
        - omega(y) * x.divergence()
        - omega(x.bracket(y))
    )
    return lhs, rhs


def annihilator_bracket(x: VectorField, y: VectorField, omega: Form):
    """For ``omega(X) = omega(Y) = 0``: ``domega(X^Y)`` against ``-omega([X,Y])``."""
    if not (omega(x).is_zero() and omega(y).is_zero()):
        raise ValueError("omega must annihilate both fields")
    return two_form_on_fields(omega.exterior_derivative(), x, y), -omega(x.bracket(y))


def annihilating_form(x: VectorField, y: VectorField, three_form: Form) -> Form:
    """The 1-form ``Z -> Omega(X, Y, Z)``, which kills both ``X`` and ``Y``."""
    if three_form.degree != 3 or three_form.dim != x.dim:
        raise ValueError("need a 3-form in the ambient dimension")
    n = x.dim
    coeffs = [Polynomial.zero(n) for _ in range(n)]
    for (a, b, c), w in three_form.coeffs.items():
        # even and odd permutations of (a, b, c); the last slot takes Z
        for (i, j, m), sign in (
            ((a, b, c), 1), ((b, c, a), 1), ((c, a, b), 1),
            ((b, a, c), -1), ((a, c, b), -1), ((c, b, a), -1),
        ):
            term = w * x[i] * y[j]
            coeffs[m] = coeffs[m] + term if sign > 0 else coeffs[m] - term
    return Form.one_form(coeffs)
