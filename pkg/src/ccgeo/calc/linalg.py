"""Small exact linear algebra over the rationals (lists of ``mpq``)."""

from __future__ import annotations

from typing import Sequence

from gmpy2 import mpq

from .polynomial import is_exact_scalar, to_rational  # noqa: F401  (re-exported)


def as_exact_matrix(rows: Sequence[Sequence]) -> list[list[mpq]]:
    return [[to_rational(v) for v in row] for row in rows]


def rref(rows: Sequence[Sequence]) -> tuple[list[list[mpq]], list[int]]:
    """Reduced row echelon form and pivot columns."""
    m = [list(map(to_rational, r)) for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(rows: Sequence[Sequence]) -> int:
    return len(rref(rows)[1])


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> list[mpq]:
    """Solve a square nonsingular system exactly."""
    n = len(matrix)
    aug = [list(map(to_rational, row)) + [to_rational(b)] for row, b in zip(matrix, rhs)]
    red, piv = rref(aug)
    if piv[:n] != list(range(n)) or len(piv) != n:
        raise ZeroDivisionError("singular system")
    return [red[i][n] for i in range(n)]


def nullspace(rows: Sequence[Sequence], ncols: int | None = None) -> list[list[mpq]]:
    """Basis of the right kernel."""
    if not rows:
        if ncols is None:
            raise ValueError("need ncols for an empty matrix")
        return [[mpq(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    red, piv = rref(rows)
    ncols = len(red[0])
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [mpq(0)] * ncols
        v[f] = mpq(1)
        for r, p in enumerate(piv):
            v[p] = -red[r][f]
        basis.append(v)
    return basis


def matmul(a: Sequence[Sequence], b: Sequence[Sequence]) -> list[list[mpq]]:
    return [[sum((x * y for x, y in zip(row, col)), mpq(0)) for col in zip(*b)] for row in a]


def transpose(a: Sequence[Sequence]) -> list[list]:
    return [list(col) for col in zip(*a)]
