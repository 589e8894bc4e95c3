"""Polynomial vector fields, differential forms and multivector fields.

Forms and multivectors share one sparse representation: a map from a
strictly increasing index tuple to a polynomial coefficient. The pairing
between a p-form and a p-vector is the sum of products of matching
coefficients, so ``<dx_i ^ dx_j, e_i ^ e_j> = 1``.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .polynomial import Polynomial, poly_sum

Index = tuple[int, ...]


def merge_sign(first: Index, second: Index) -> tuple[int, Index | None]:
    """Sign of the permutation sorting ``first + second``.

    Returns ``(0, None)`` when the two index sets overlap.
    """
    if set(first) & set(second):
        return 0, None
    seq = list(first) + list(second)
    inversions = sum(1 for a in range(len(seq)) for b in range(a + 1, len(seq)) if seq[a] > seq[b])
    return (-1 if inversions % 2 else 1), tuple(sorted(seq))


class VectorField:
    """A polynomial vector field given by its ambient components."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Polynomial]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        n = comps[0].num_vars
        if any(c.num_vars != n for c in comps) or len(comps) != n:
            raise ValueError("components must be n polynomials in n variables")
        self.components = comps

    @classmethod
    def constant(cls, vector: Sequence) -> "VectorField":
        n = len(vector)
        return cls([Polynomial.constant(n, v) for v in vector])

    @classmethod
    def coordinate(cls, n: int, index: int) -> "VectorField":
        return cls.constant([1 if i == index else 0 for i in range(n)])

    @classmethod
    def zero(cls, n: int) -> "VectorField":
        return cls([Polynomial.zero(n)] * n)

    @property
    def dim(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> Polynomial:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return VectorField([-a for a in self.components])

    def scale(self, factor) -> "VectorField":
        """Multiply by a scalar or by a polynomial function."""
        return VectorField([factor * c for c in self.components])

    __rmul__ = scale

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def apply(self, f: Polynomial) -> Polynomial:
        """Directional derivative ``X(f)``."""
        return poly_sum((xi * f.derivative(i) for i, xi in enumerate(self.components) if not xi.is_zero()), self.dim)

    def bracket(self, other: "VectorField") -> "VectorField":
        """Lie bracket, ``[X, Y]^j = X(Y^j) - Y(X^j)``."""
        return VectorField([self.apply(yj) - other.apply(xj) for xj, yj in zip(self.components, other.components)])

    def divergence(self) -> Polynomial:
        return poly_sum((c.derivative(i) for i, c in enumerate(self.components)), self.dim)

    def evaluate(self, point: Sequence) -> list:
        return [c.evaluate(point) for c in self.components]

    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def to_json(self) -> list:
        return [c.to_json() for c in self.components]

    @classmethod
    def from_json(cls, n: int, data: Sequence) -> "VectorField":
        if len(data) != n:
            raise ValueError(f"vector field needs {n} components, got {len(data)}")
        return cls([Polynomial.from_json(n, comp) for comp in data])

    def __repr__(self):
        return "VectorField(" + ", ".join(c.to_expression() for c in self.components) + ")"


def lie_bracket(x: VectorField, y: VectorField) -> VectorField:
    return x.bracket(y)


class _Graded:
    """Shared storage for forms and multivectors of fixed degree."""

    __slots__ = ("dim", "degree", "coeffs")

    def __init__(self, dim: int, degree: int, coeffs: Mapping[Index, Polynomial] | None = None):
        if not 0 <= degree <= dim:
            raise ValueError(f"degree {degree} impossible in dimension {dim}")
        self.dim = dim
        self.degree = degree
        clean: dict[Index, Polynomial] = {}
        for idx, c in (coeffs or {}).items():
            idx = tuple(idx)
            if len(idx) != degree or list(idx) != sorted(set(idx)) or (idx and not 0 <= idx[0] <= idx[-1] < dim):
                raise ValueError(f"index {idx} must be {degree} increasing entries below {dim}")
            if not isinstance(c, Polynomial):
                c = Polynomial.constant(dim, c)
            if not c.is_zero():
                clean[idx] = c
        self.coeffs = clean

    def __getitem__(self, idx: Iterable[int]) -> Polynomial:
        return self.coeffs.get(tuple(idx), Polynomial.zero(self.dim))

    def is_zero(self) -> bool:
        return not self.coeffs

    def _combine(self, other, sign):
        if (self.dim, self.degree) != (other.dim, other.degree) or type(self) is not type(other):
            raise ValueError("mismatched graded objects")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = out[idx] + sign * c if idx in out else sign * c
        return type(self)(self.dim, self.degree, out)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return type(self)(self.dim, self.degree, {i: -c for i, c in self.coeffs.items()})

    def scale(self, factor):
        return type(self)(self.dim, self.degree, {i: factor * c for i, c in self.coeffs.items()})

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and (self.dim, self.degree) == (other.dim, other.degree)
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((type(self).__name__, self.dim, self.degree, frozenset(self.coeffs.items())))

    def _wedge(self, other):
        out: dict[Index, Polynomial] = {}
        for i1, c1 in self.coeffs.items():
            for i2, c2 in other.coeffs.items():
                sign, idx = merge_sign(i1, i2)
                if sign:
                    term = c1 * c2 if sign > 0 else -(c1 * c2)
                    out[idx] = out[idx] + term if idx in out else term
        return type(self)(self.dim, self.degree + other.degree, out)

    def evaluate(self, point: Sequence) -> dict:
        return {idx: c.evaluate(point) for idx, c in self.coeffs.items()}

    def to_json(self) -> dict:
        return {",".join(map(str, idx)): c.to_json() for idx, c in sorted(self.coeffs.items())}


class Form(_Graded):
    """A differential p-form with polynomial coefficients."""

    __slots__ = ()

    @classmethod
    def one_form(cls, coefficients: Sequence) -> "Form":
        n = len(coefficients)
        return cls(n, 1, {(i,): c for i, c in enumerate(coefficients)})

    @classmethod
    def function(cls, f: Polynomial) -> "Form":
        return cls(f.num_vars, 0, {(): f})

    def wedge(self, other: "Form") -> "Form":
        return self._wedge(other)

    def exterior_derivative(self) -> "Form":
        if self.degree == self.dim:
            raise ValueError("a top-degree form has no exterior derivative in this dimension")
        out: dict[Index, Polynomial] = {}
        for idx, c in self.coeffs.items():
            for j in range(self.dim):
                dc = c.derivative(j)
                if dc.is_zero():
                    continue
                sign, new = merge_sign((j,), idx)
                if sign:
                    term = dc if sign > 0 else -dc
                    out[new] = out[new] + term if new in out else term
        return Form(self.dim, self.degree + 1, out)

    def pair(self, multivector: "Multivector") -> Polynomial:
        """Evaluate the form on a multivector field of the same degree."""
        if multivector.degree != self.degree or multivector.dim != self.dim:
            raise ValueError("form and multivector degrees differ")
        return poly_sum((c * multivector[idx] for idx, c in self.coeffs.items()), self.dim)

    def __call__(self, arg):
        if isinstance(arg, VectorField):
            arg = Multivector.from_field(arg)
        return self.pair(arg)


class Multivector(_Graded):
    """A p-vector field with polynomial coefficients."""

    __slots__ = ()

    @classmethod
    def from_field(cls, field: VectorField) -> "Multivector":
        return cls(field.dim, 1, {(i,): c for i, c in enumerate(field.components)})

    @classmethod
    def wedge_fields(cls, *fields: VectorField) -> "Multivector":
        if not fields:
            raise ValueError("need at least one field")
        result = cls.from_field(fields[0])
        for f in fields[1:]:
            result = result._wedge(cls.from_field(f))
        return result

    def wedge(self, other: "Multivector") -> "Multivector":
        return self._wedge(other)

    def to_field(self) -> VectorField:
        if self.degree != 1:
            raise ValueError("only 1-vectors convert to vector fields")
        return VectorField([self[(i,)] for i in range(self.dim)])

    def interior(self, form: Form) -> "Multivector":
        """Contraction ``v ⌟ alpha`` of degree ``p - h``.

        Characterized by ``<v ⌟ alpha, beta> = <v, alpha ^ beta>`` for every
        constant ``(p-h)``-covector ``beta``.
        """
        if form.dim != self.dim:
            raise ValueError("dimension mismatch")
        if form.degree > self.degree:
            raise ValueError("form degree exceeds multivector degree")
        out: dict[Index, Polynomial] = {}
        rest = self.degree - form.degree
        for idx, v in self.coeffs.items():
            for sub in combinations(idx, form.degree):
                a = form.coeffs.get(sub)
                if a is None:
                    continue
                comp = tuple(i for i in idx if i not in sub)
                sign, _ = merge_sign(sub, comp)
                term = a * v if sign > 0 else -(a * v)
                out[comp] = out[comp] + term if comp in out else term
        return Multivector(self.dim, rest, out)


def divergence(obj) -> Polynomial:
    """Divergence of a vector field or of a 1-vector field."""
    if isinstance(obj, Multivector):
        obj = obj.to_field()
    return obj.divergence()


def interior(v: Multivector, form: Form) -> Multivector:
    return v.interior(form)


def exterior_derivative(form: Form) -> Form:
    return form.exterior_derivative()
