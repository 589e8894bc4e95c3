"""Exact multivariate polynomials with rational coefficients.

Coefficients are stored as ``gmpy2.mpq``; terms are kept in graded
lexicographic order so that two equal polynomials always have the same
term sequence.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import gmpy2
from gmpy2 import mpq

Exponent = tuple[int, ...]
_MPZ = type(gmpy2.mpz(0))


def to_rational(value) -> mpq:
    """Convert an int, Fraction, mpq or ``"p/q"`` string to ``mpq``.

    Floats are rejected: silently turning a float into a rational would
    smuggle rounding error into exact arithmetic.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, mpq):
        return value
    if isinstance(value, (int, Fraction, _MPZ)):
        return mpq(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return mpq(text)
        except ValueError as exc:
            raise ValueError(f"not a rational literal: {value!r}") from exc
    if isinstance(value, Rational):
        return mpq(int(value.numerator), int(value.denominator))
    raise TypeError(f"cannot use {type(value).__name__} as an exact coefficient")


def is_exact_scalar(value) -> bool:
    return not isinstance(value, bool) and (
        isinstance(value, (int, Fraction, Rational, mpq, _MPZ))
    )


def _grlex_key(exps: Exponent):
    return (sum(exps), exps)


class Polynomial:
    """Immutable polynomial in ``num_vars`` variables over the rationals."""

    __slots__ = ("num_vars", "_terms", "_hash")

    def __init__(self, num_vars: int, terms: Mapping[Exponent, object] | Iterable = ()):
        if num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        self.num_vars = num_vars
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Exponent, mpq] = {}
        for exps, coeff in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != num_vars or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent {exps} for {num_vars} variables")
            c = to_rational(coeff)
            acc[exps] = acc.get(exps, mpq(0)) + c
        self._terms = {e: c for e, c in acc.items() if c != 0}
        self._hash = None

    @classmethod
    def _raw(cls, num_vars: int, terms: dict) -> "Polynomial":
        obj = cls.__new__(cls)
        obj.num_vars = num_vars
        obj._terms = terms
        obj._hash = None
        return obj

    # constructors
    @classmethod
    def zero(cls, num_vars: int) -> "Polynomial":
        return cls._raw(num_vars, {})

    @classmethod
    def constant(cls, num_vars: int, value) -> "Polynomial":
        c = to_rational(value)
        return cls._raw(num_vars, {(0,) * num_vars: c} if c else {})

    @classmethod
    def variable(cls, num_vars: int, index: int) -> "Polynomial":
        if not 0 <= index < num_vars:
            raise IndexError(f"variable index {index} out of range")
        exps = tuple(1 if i == index else 0 for i in range(num_vars))
        return cls._raw(num_vars, {exps: mpq(1)})

    @classmethod
    def variables(cls, num_vars: int) -> list["Polynomial"]:
        return [cls.variable(num_vars, i) for i in range(num_vars)]

    # inspection
    @property
    def terms(self) -> tuple[tuple[Exponent, mpq], ...]:
        """Terms in graded-lex order, highest first."""
        return tuple(sorted(self._terms.items(), key=lambda t: _grlex_key(t[0]), reverse=True))

    def coefficient(self, exps: Sequence[int]) -> mpq:
        return self._terms.get(tuple(exps), mpq(0))

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self._terms)

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        return max((sum(e) for e in self._terms), default=-1)

    def __len__(self) -> int:
        return len(self._terms)

    # arithmetic
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.num_vars != self.num_vars:
                raise ValueError("polynomials live in different numbers of variables")
            return other
        if is_exact_scalar(other):
            return Polynomial.constant(self.num_vars, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for e, c in other._terms.items():
            s = out.get(e)
            s = c if s is None else s + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial._raw(self.num_vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.num_vars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if is_exact_scalar(other):
            c = to_rational(other)
            if not c:
                return Polynomial.zero(self.num_vars)
            return Polynomial._raw(self.num_vars, {e: v * c for e, v in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exponent, mpq] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial._raw(self.num_vars, {e: c for e, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not is_exact_scalar(other):
            return NotImplemented
        c = to_rational(other)
        if not c:
            raise ZeroDivisionError("division of a polynomial by zero")
        return self * (1 / c)

    def __pow__(self, power: int):
        if not isinstance(power, int) or power < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(self.num_vars, 1)
        base = self
        while power:
            if power & 1:
                result = result * base
            base = base * base
            power >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.num_vars == other.num_vars and self._terms == other._terms
        if is_exact_scalar(other):
            return self == Polynomial.constant(self.num_vars, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num_vars, frozenset(self._terms.items())))
        return self._hash

    # calculus
    def derivative(self, index: int) -> "Polynomial":
        out = {}
        for e, c in self._terms.items():
            k = e[index]
            if k:
                ne = e[:index] + (k - 1,) + e[index + 1:]
                out[ne] = c * k
        return Polynomial._raw(self.num_vars, out)

    def gradient(self) -> list["Polynomial"]:
        return [self.derivative(i) for i in range(self.num_vars)]

    def substitute(self, values: Sequence["Polynomial"]) -> "Polynomial":
        """Compose with polynomial maps: variable ``i`` becomes ``values[i]``."""
        if len(values) != self.num_vars:
            raise ValueError("need one substitution per variable")
        m = values[0].num_vars if values else 0
        result = Polynomial.zero(m)
        cache: dict[tuple[int, int], Polynomial] = {}
        for e, c in self._terms.items():
            term = Polynomial.constant(m, c)
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in cache:
                        cache[key] = values[i] ** k
                    term = term * cache[key]
            result = result + term
        return result

    def __call__(self, point: Sequence):
        return self.evaluate(point)

    def evaluate(self, point: Sequence):
        """Evaluate at a point. Exact scalars give an ``mpq``; floats give a float."""
        if len(point) != self.num_vars:
            raise ValueError(f"point has {len(point)} coordinates, expected {self.num_vars}")
        exact = all(is_exact_scalar(p) for p in point)
        pts = [to_rational(p) for p in point] if exact else [float(p) for p in point]
        total = mpq(0) if exact else 0.0
        for e, c in self._terms.items():
            val = c if exact else float(c)
            for p, k in zip(pts, e):
                if k:
                    val = val * p**k
            total += val
        return total

    # serialization
    def to_json(self) -> list:
        return [[str(c), list(e)] for e, c in self.terms]

    @classmethod
    def from_json(cls, num_vars: int, data: Iterable) -> "Polynomial":
        terms = []
        for item in data:
            if isinstance(item, Mapping):
                coeff, exps = item["c"], item["e"]
            else:
                coeff, exps = item
            if isinstance(coeff, float):
                raise ValueError(f"coefficient {coeff!r} must be written as an exact rational")
            terms.append((tuple(exps), coeff))
        return cls(num_vars, terms)

    def to_expression(self, names: Sequence[str] | None = None) -> str:
        names = names or [f"x{i + 1}" for i in range(self.num_vars)]
        if not self._terms:
            return "0"
        parts = []
        for e, c in self.terms:
            mono = "*".join(n if k == 1 else f"{n}^{k}" for n, k in zip(names, e) if k)
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self):
        return f"Polynomial({self.to_expression()})"


def poly_sum(polys: Iterable[Polynomial], num_vars: int) -> Polynomial:
    acc: dict[Exponent, mpq] = {}
    for p in polys:
        for e, c in p._terms.items():
            acc[e] = acc.get(e, 0) + c
    return Polynomial._raw(num_vars, {e: c for e, c in acc.items() if c})


def monomials_up_to(num_vars: int, max_degree: int) -> list[Exponent]:
    """All exponent tuples of total degree at most ``max_degree``."""
    out: list[Exponent] = [()]
    for _ in range(num_vars):
        out = [e + (k,) for e in out for k in range(max_degree + 1) if sum(e) + k <= max_degree]
    return sorted(out, key=_grlex_key)


def random_polynomial(rng, num_vars: int, max_degree: int, density: float = 0.6, max_numerator: int = 5, max_denominator: int = 4) -> Polynomial:
    """Random polynomial with small rational coefficients, drawn from a numpy Generator."""
    terms = {}
    for e in monomials_up_to(num_vars, max_degree):
        if rng.random() < density:
            num = int(rng.integers(-max_numerator, max_numerator + 1))
            den = int(rng.integers(1, max_denominator + 1))
            if num:
                terms[e] = mpq(num, den)
    return Polynomial._raw(num_vars, terms)
