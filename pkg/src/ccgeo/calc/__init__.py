"""Exact polynomial calculus: polynomials, vector fields, forms, multivectors."""

from .exterior import Form, Multivector, VectorField, divergence, exterior_derivative, interior, lie_bracket
from .identities import (
    annihilating_form,
    annihilator_bracket,
    bracket_product_rule,
    divergence_of_contraction,
    divergence_of_contraction_flipped,
    two_form_on_fields,
)
from .polynomial import Polynomial, is_exact_scalar, random_polynomial, to_rational

__all__ = [
    "Form",
    "Multivector",
    "Polynomial",
    "VectorField",
    "annihilating_form",
    "annihilator_bracket",
    "bracket_product_rule",
    "divergence",
    "divergence_of_contraction",
    "divergence_of_contraction_flipped",
    "exterior_derivative",
    "interior",
    "is_exact_scalar",
    "lie_bracket",
    "random_polynomial",
    "to_rational",
    "two_form_on_fields",
]
