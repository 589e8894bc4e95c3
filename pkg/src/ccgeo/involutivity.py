"""Bracket forms and pointwise tests for h-dimensional null subspaces.

The bracket form at ``x`` is the antisymmetric bilinear map
``B_x(e_i, e_j) = [X_i, X_j](x) mod V(x)`` written in the complement
coordinates. A subspace of ``V(x)`` on which ``B_x`` vanishes is a *null
subspace*. All verdicts here are pointwise: they decide whether ``B_x`` has
an ``h``-dimensional null subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np
from gmpy2 import mpq
from scipy.optimize import least_squares

from ._numeric import compile_polynomials, derive_seed
from .calc import linalg
from .calc.exterior import VectorField
from .calc.polynomial import Polynomial
from .structures import Structure, StructureError, exact_point, is_exact_point

CRITERION = "pointwise-B reduction"
NULL_THRESHOLD = 1e-10
NONINVOLUTIVE_THRESHOLD = 1e-4
# Objective values below this are summation roundoff; their low bits depend on
# SIMD reduction order, so they are reported as exactly zero.
ROUNDOFF_FLOOR = 1e-24


@dataclass
class BracketForm:
    """Bracket form at a point: ``matrices[l]`` is the ``l``-th complement component."""

    point: tuple
    matrices: np.ndarray
    exact: list | None = None  # exact[l][i][j] as mpq when the point is rational

    @property
    def k(self) -> int:
        return self.matrices.shape[1]

    @property
    def m(self) -> int:
        return self.matrices.shape[0]

    def __call__(self, u, v) -> np.ndarray:
        return np.einsum("i,lij,j->l", np.asarray(u, float), self.matrices, np.asarray(v, float))

    def transformed(self, g) -> "BracketForm":
        """Form in the frame ``Y_a = sum_i g[i, a] X_i``: ``G^T B G`` (exact when possible)."""
        if self.exact is not None and all(linalg.is_exact_scalar(v) for row in g for v in row):
            ge = [[linalg.to_rational(v) for v in row] for row in g]
            gt = linalg.transpose(ge)
            exact = [linalg.matmul(linalg.matmul(gt, mat), ge) for mat in self.exact]
            mats = np.array([[[float(v) for v in row] for row in mat] for mat in exact]).reshape(self.m, len(gt), len(gt))
            return BracketForm(self.point, mats, exact)
        g = np.asarray(g, float)
        mats = np.einsum("ia,lij,jb->lab", g, self.matrices, g)
        return BracketForm(self.point, mats, None)

    def exact_value(self, u, v) -> list[mpq]:
        if self.exact is None:
            raise ValueError("no exact bracket form at a float point")
        u = [linalg.to_rational(a) for a in u]
        v = [linalg.to_rational(b) for b in v]
        return [
            sum((u[i] * mat[i][j] * v[j] for i in range(self.k) for j in range(self.k)), mpq(0))
            for mat in self.exact
        ]

    def to_json(self) -> dict:
        out = {"point": [str(p) if not isinstance(p, float) else p for p in self.point], "k": self.k, "m": self.m}
        if self.exact is not None:
            out["components"] = [[[str(v) for v in row] for row in mat] for mat in self.exact]
        else:
            out["components"] = self.matrices.tolist()
        return out


def bracket_form(structure: Structure, point: Sequence) -> BracketForm:
    k, n = structure.k, structure.n
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    if is_exact_point(point):
        p = exact_point(point)
        cols = linalg.transpose(structure.frame_exact(p))
        exact = [[[mpq(0)] * k for _ in range(k)] for _ in range(n - k)]
        for i, j in pairs:
            coeffs = linalg.solve(cols, structure.bracket(i, j).evaluate(p))
            for l in range(n - k):
                exact[l][i][j] = coeffs[k + l]
                exact[l][j][i] = -coeffs[k + l]
        mats = np.array([[[float(v) for v in row] for row in mat] for mat in exact]).reshape(n - k, k, k)
        return BracketForm(p, mats, exact)
    x = np.asarray(point, float)
    mats = np.zeros((n - k, k, k))
    if pairs:
        polys = [c for i, j in pairs for c in structure.bracket(i, j).components]
        values = compile_polynomials(polys, (len(pairs), n))(x)
        coeffs = np.linalg.solve(structure.frame(x).T, values.T).T
        for idx, (i, j) in enumerate(pairs):
            mats[:, i, j] = coeffs[idx, k:]
            mats[:, j, i] = -coeffs[idx, k:]
    return BracketForm(tuple(x.tolist()), mats, None)


# ---------------------------------------------------------------------------
# witness covectors


def witness_covectors(structure: Structure, point: Sequence) -> list[list]:
    """Covectors at ``x`` killing ``V`` and reading complement coordinates."""
    if is_exact_point(point):
        cols = linalg.transpose(structure.frame_exact(point))
        n, k = structure.n, structure.k
        inv_cols = [linalg.solve(linalg.transpose(cols), [mpq(int(i == j)) for i in range(n)]) for j in range(n)]
        # inv_cols[j] solves cols^T y = e_j, i.e. the j-th row of cols^{-1}
        return [inv_cols[j] for j in range(k, n)]
    inv = np.linalg.inv(structure.frame(np.asarray(point, float)).T)
    return inv[structure.k:].tolist()


def witness_covector_fields(structure: Structure) -> list[list[Polynomial]] | None:
    """Polynomial covector fields reading complement coordinates, when they exist.

    Works when the frame matrix is unipotent (``F - I`` nilpotent), which
    holds for the left-invariant catalog frames; returns ``None`` otherwise.
    """
    n = structure.n
    cols = [[structure.fields[j][i] for j in range(n)] for i in range(n)]
    ident = [[Polynomial.constant(n, int(i == j)) for j in range(n)] for i in range(n)]
    nil = [[ident[i][j] - cols[i][j] for j in range(n)] for i in range(n)]

    def mul(a, b):
        return [[_psum([a[i][t] * b[t][j] for t in range(n)], n) for j in range(n)] for i in range(n)]

    total = ident
    power = ident
    for _ in range(n):
        power = mul(power, nil)
        if all(p.is_zero() for row in power for p in row):
            return [total[l] for l in range(structure.k, n)]
        total = [[total[i][j] + power[i][j] for j in range(n)] for i in range(n)]
    return None


def _psum(items, n):
    acc = Polynomial.zero(n)
    for it in items:
        acc = acc + it
    return acc


# ---------------------------------------------------------------------------
# exact routes


def _null_residual_exact(form: BracketForm, basis_rows: Sequence[Sequence]) -> mpq:
    total = mpq(0)
    for a, b in combinations(range(len(basis_rows)), 2):
        for v in form.exact_value(basis_rows[a], basis_rows[b]):
            total += v * v
    return total


def coordinate_scan(form: BracketForm, h: int, limit: int = 5000):
    """First coordinate subspace ``span(e_i : i in I)`` that is null, if any."""
    k = form.k
    if math.comb(k, h) > limit:
        return None, False
    mats = form.exact if form.exact is not None else form.matrices
    for idx in combinations(range(k), h):
        if all(mats[l][i][j] == 0 for l in range(form.m) for i in idx for j in idx):
            return idx, True
    return None, True


def _plucker_decomposable(p: dict, k: int) -> bool:
    """Whether a 2-vector with coordinates ``p[(i, j)]`` is decomposable."""
    get = lambda i, j: p.get((i, j), 0)  # noqa: E731
    for i, j, a, b in combinations(range(k), 4):
        if get(i, j) * get(a, b) - get(i, a) * get(j, b) + get(i, b) * get(j, a) != 0:
            return False
    return True


def two_plane_exact(form: BracketForm):
    """Exact decision for ``h = 2`` when the kernel on 2-vectors is small.

    Returns ``(decided, null_exists, witness_rows)``.
    """
    if form.exact is None:
        return False, None, None
    k = form.k
    pairs = list(combinations(range(k), 2))
    rows = [[form.exact[l][i][j] for i, j in pairs] for l in range(form.m)]
    kernel = linalg.nullspace(rows, ncols=len(pairs)) if any(any(r) for r in rows) else linalg.nullspace([], len(pairs))
    if not kernel:
        return True, False, None
    if len(kernel) == 1:
        vec = dict(zip(pairs, kernel[0]))
        if not _plucker_decomposable(vec, k):
            return True, False, None
        return True, True, _factor_two_vector(vec, k)
    return False, None, None


def _factor_two_vector(p: dict, k: int):
    """Two vectors whose wedge is the decomposable 2-vector ``p``."""
    (i0, j0), _ = next((key, v) for key, v in p.items() if v != 0)
    # u = p(e_j0^*, .) style contraction gives the plane
    u = [p.get((i0, t), 0) if t > i0 else (-p.get((t, i0), 0) if t < i0 else 0) for t in range(k)]
    w = [p.get((j0, t), 0) if t > j0 else (-p.get((t, j0), 0) if t < j0 else 0) for t in range(k)]
    return [[mpq(v) for v in u], [mpq(v) for v in w]]


# ---------------------------------------------------------------------------
# Grassmann optimization


def null_objective(mats: np.ndarray, w: np.ndarray) -> float:
    """``sum_{a<b} |B(w_a, w_b)|^2`` for the columns of ``w``."""
    r = np.einsum("ia,lij,jb->lab", w, mats, w)
    return 0.5 * float(np.sum(r * r))


def _grad(mats, w):
    r = np.einsum("ia,lij,jb->lab", w, mats, w)
    g = 2.0 * np.einsum("lij,jb,lab->ia", mats, w, r)
    return 0.5 * float(np.sum(r * r)), g


def _orthonormalize(a):
    q, r = np.linalg.qr(a)
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _riemannian_descent(mats, w, max_iter=400, gtol=1e-13):
    f, g = _grad(mats, w)
    step = 1.0
    for _ in range(max_iter):
        rg = g - w @ (w.T @ g)
        gn2 = float(np.sum(rg * rg))
        if gn2 < gtol or f < 1e-28:
            break
        step = min(step * 2.0, 1e3)
        while True:
            cand = _orthonormalize(w - step * rg)
            fc = null_objective(mats, cand)
            if fc <= f - 1e-4 * step * gn2 or step < 1e-14:
                break
            step *= 0.5
        if fc > f:
            break
        w = cand
        f, g = _grad(mats, w)
    return w, f


def _polish(mats, w):
    k, h = w.shape
    if h == k:
        return w, null_objective(mats, w)
    q, _ = np.linalg.qr(w, mode="complete")
    perp = q[:, h:]
    iu = np.triu_indices(h, 1)

    def chart(z):
        return _orthonormalize(w + perp @ z.reshape(k - h, h))

    def residuals(z):
        c = chart(z)
        r = np.einsum("ia,lij,jb->lab", c, mats, c)
        return r[:, iu[0], iu[1]].ravel()

    z0 = np.zeros((k - h) * h)
    method = "lm" if residuals(z0).size >= z0.size else "trf"
    sol = least_squares(residuals, z0, method=method, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    wp = chart(sol.x)
    fp = null_objective(mats, wp)
    f0 = null_objective(mats, w)
    return (wp, fp) if fp <= f0 else (w, f0)


@dataclass
class RestartResult:
    residual: float
    basis: np.ndarray


def grassmann_multistart(mats: np.ndarray, h: int, restarts: int = 64, seed: int = 0) -> list[RestartResult]:
    """Minimize the null objective from ``restarts`` random orthonormal frames."""
    mats = np.asarray(mats, float)
    k = mats.shape[1]
    if not 1 <= h <= k:
        raise ValueError(f"h={h} must lie in 1..{k}")
    results = []
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, "grassmann", r))
        w = _orthonormalize(rng.standard_normal((k, h)))
        w, f = _riemannian_descent(mats, w)
        w, f = _polish(mats, w)
        results.append(RestartResult(0.0 if f < ROUNDOFF_FLOOR else f, w))
    return results


def _rationalize_subspace(w: np.ndarray, max_den: int = 1000):
    """Row-reduced rational basis of ``span(columns of w)``."""
    wt = w.T.copy()
    h, k = wt.shape
    pivots = []
    m = wt.copy()
    for r in range(h):
        cands = [c for c in range(k) if c not in pivots]
        c = max(cands, key=lambda c: abs(m[r:, c]).max())
        i = r + int(np.argmax(abs(m[r:, c])))
        m[[r, i]] = m[[i, r]]
        m[r] /= m[r, c]
        for t in range(h):
            if t != r:
                m[t] -= m[t, c] * m[r]
        pivots.append(c)
    return [[mpq(Fraction(float(v)).limit_denominator(max_den)) for v in row] for row in m]


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    h: int
    point: tuple
    verdict: str  # "h-non-involutive", "involutive-at-x" or "undecided"
    residual: float
    exact: bool
    method: str
    witness_subspace: list | None = None
    restart_residuals: list[float] = field(default_factory=list)
    criterion: str = CRITERION
    seed: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def non_involutive(self) -> bool:
        return self.verdict == "h-non-involutive"

    def to_json(self) -> dict:
        return {
            "h": self.h,
            "point": [str(p) for p in self.point],
            "verdict": self.verdict if self.verdict != "h-non-involutive" else f"{self.h}-non-involutive",
            "residual": self.residual,
            "exact": self.exact,
            "method": self.method,
            "witness_subspace": self.witness_subspace,
            "restart_residuals": self.restart_residuals,
            "criterion": self.criterion,
            "seed": self.seed,
            "notes": self.notes,
        }


def _rows_json(rows):
    return [[str(v) for v in row] for row in rows]


def classify(residual: float) -> str:
    if residual < NULL_THRESHOLD:
        return "involutive-at-x"
    if residual >= NONINVOLUTIVE_THRESHOLD:
        return "h-non-involutive"
    return "undecided"


def h_noninvolutive_at(
    structure: Structure,
    point: Sequence,
    h: int,
    *,
    restarts: int = 64,
    seed: int = 0,
    force_optimizer: bool = False,
) -> Verdict:
    """Decide whether ``B_x`` admits an ``h``-dimensional null subspace."""
    k = structure.k
    if not 1 <= h <= k:
        raise StructureError(f"h={h} must lie in 1..{k}")
    form = bracket_form(structure, point)
    pt = tuple(form.point)
    if h == 1:
        e1 = [[1] + [0] * (k - 1)]
        return Verdict(h, pt, "involutive-at-x", 0.0, True, "trivial: B(w, w) = 0", e1, seed=seed)
    if h == k:
        res = null_objective(form.matrices, np.eye(k))
        exact = form.exact is not None
        if exact:
            res = float(_null_residual_exact(form, np.eye(k, dtype=int).tolist()))
        verdict = "involutive-at-x" if res == 0 and exact else classify(res)
        if exact and res > 0:
            verdict = "h-non-involutive"
        return Verdict(h, pt, verdict, res, exact, "whole horizontal space", np.eye(k, dtype=int).tolist(), seed=seed)

    if not force_optimizer:
        idx, scanned = coordinate_scan(form, h)
        if idx is not None:
            rows = [[int(i == j) for j in range(k)] for i in idx]
            return Verdict(
                h, pt, "involutive-at-x", 0.0, form.exact is not None, "coordinate-subspace scan",
                rows, seed=seed, notes=[f"span of e{', e'.join(str(i + 1) for i in idx)} is null"],
            )
        if h == 2:
            decided, exists, rows = two_plane_exact(form)
            if decided and exists:
                return Verdict(h, pt, "involutive-at-x", 0.0, True, "exact 2-vector kernel", _rows_json(rows), seed=seed)
            if decided and not exists:
                runs = grassmann_multistart(form.matrices, h, restarts, seed)
                best = min(runs, key=lambda r: r.residual)
                return Verdict(
                    h, pt, "h-non-involutive", best.residual, True, "exact 2-vector kernel has no decomposable element",
                    best.basis.T.tolist(), [r.residual for r in runs], seed=seed,
                )

    runs = grassmann_multistart(form.matrices, h, restarts, seed)
    best = min(runs, key=lambda r: r.residual)
    verdict = classify(best.residual)
    residuals = [r.residual for r in runs]
    if verdict == "involutive-at-x" and form.exact is not None:
        rows = _rationalize_subspace(best.basis)
        if _null_residual_exact(form, rows) == 0:
            return Verdict(h, pt, verdict, 0.0, True, "optimizer + exact confirmation", _rows_json(rows), residuals, seed=seed)
    if verdict == "h-non-involutive":
        if min(residuals) < NONINVOLUTIVE_THRESHOLD:
            verdict = "undecided"
    return Verdict(h, pt, verdict, best.residual, False, "Riemannian multistart", best.basis.T.tolist(), residuals, seed=seed)


def minimal_noninvolutive_order(structure: Structure, point: Sequence, *, restarts: int = 64, seed: int = 0) -> dict:
    """Smallest ``h >= 2`` for which ``B_x`` has no ``h``-dimensional null subspace.

    Null subspaces restrict to null subspaces, so the property is
    upward-closed in ``h`` and the scan stops at the first success. An
    undecided ``h`` stops the scan and is reported.
    """
    verdicts = []
    for h in range(2, structure.k + 1):
        v = h_noninvolutive_at(structure, point, h, restarts=restarts, seed=seed)
        verdicts.append(v)
        if v.non_involutive:
            return {"order": h, "status": "found", "verdicts": verdicts}
        if v.verdict == "undecided":
            return {"order": None, "status": f"undecided at h={h}", "verdicts": verdicts}
    return {"order": None, "status": "involutive", "verdicts": verdicts}


def noninvolutive_at(structure: Structure, point: Sequence) -> dict:
    """Whether some bracket of horizontal frame fields leaves ``V(x)``.

    The witness is the first such pair ``(a, b)`` (1-based) together with a
    covector ``lambda`` that kills ``V(x)`` and is nonzero on ``[X_a, X_b](x)``.
    """
    form = bracket_form(structure, point)
    exact = form.exact is not None
    mats = form.exact if exact else form.matrices
    k = structure.k
    for i in range(k):
        for j in range(i + 1, k):
            for l in range(form.m):
                if mats[l][i][j] != 0:
                    lam = witness_covectors(structure, point)[l]
                    value = sum((a * b for a, b in zip(lam, structure.bracket(i, j).evaluate(
                        exact_point(point) if exact else [float(v) for v in point]))), 0)
                    return {
                        "verdict": "non-involutive",
                        "pair": [i + 1, j + 1],
                        "covector": [str(v) for v in lam] if exact else list(map(float, lam)),
                        "covector_on_bracket": str(value) if exact else float(value),
                        "residual": 0.0 if exact else float(abs(mats[l][i][j])),
                        "exact": exact,
                        "criterion": CRITERION,
                    }
    return {"verdict": "involutive-at-x", "pair": None, "covector": None, "residual": 0.0, "exact": exact, "criterion": CRITERION}


def strong_form_check(structure: Structure, point: Sequence) -> dict:
    """Whether some pair of horizontal frame fields has bracket outside ``V`` at ``x``."""
    form = bracket_form(structure, point)
    mats = form.exact if form.exact is not None else form.matrices
    k = structure.k
    offending = [
        [i + 1, j + 1]
        for i in range(k)
        for j in range(i + 1, k)
        if any(mats[l][i][j] != 0 for l in range(form.m))
    ]
    return {"holds": bool(offending), "pairs_with_bracket_outside_V": offending}


# ---------------------------------------------------------------------------
# realizing a pointwise null subspace by fields


def realize_null_subspace(structure: Structure, point: Sequence, rows: Sequence[Sequence]) -> list[VectorField]:
    """Horizontal fields through a null subspace with vanishing brackets at ``x``.

    Given coefficient rows ``p_a`` (so ``u_a = sum_i p_ai X_i(x)``) spanning
    a null subspace of ``B_x``, returns ``Y_a = sum_j q_aj X_j`` with affine
    coefficients ``q_aj`` such that ``Y_a(x) = u_a`` and ``[Y_a, Y_b](x) = 0``.
    """
    if not is_exact_point(point):
        raise ValueError("an exact rational point is required")
    x = exact_point(point)
    n, k = structure.n, structure.k
    p = [[linalg.to_rational(v) for v in row] for row in rows]
    h = len(p)
    frame = structure.frame_exact(x)
    u = [[sum((p[a][i] * frame[i][c] for i in range(k)), mpq(0)) for c in range(n)] for a in range(h)]
    # dual vectors d_c with <d_c, u_a> = delta_ca, taken inside span(u)
    gram = linalg.matmul(u, linalg.transpose(u))
    duals = []
    for c in range(h):
        coef = linalg.solve(gram, [mpq(int(a == c)) for a in range(h)])
        duals.append([sum((coef[a] * u[a][t] for a in range(h)), mpq(0)) for t in range(n)])
    cols = linalg.transpose(frame)
    # c_ab^j: frame coordinates of sum p_ai p_bj [X_i, X_j](x)
    coeff = {}
    for a in range(h):
        for b in range(h):
            vec = [mpq(0)] * n
            for i in range(k):
                for j in range(k):
                    if i == j or p[a][i] == 0 or p[b][j] == 0:
                        continue
                    br = structure.bracket(i, j).evaluate(x)
                    for t in range(n):
                        vec[t] += p[a][i] * p[b][j] * br[t]
            coeff[a, b] = linalg.solve(cols, vec)
            if any(coeff[a, b][j] != 0 for j in range(k, n)) and a != b:
                raise ValueError("the given rows do not span a null subspace")
    xs = Polynomial.variables(n)
    shifts = [xs[t] - x[t] for t in range(n)]
    fields = []
    for b in range(h):
        total = VectorField.zero(n)
        for j in range(k):
            g = [sum((-coeff[a, b][j] / 2 * duals[a][t] for a in range(h)), mpq(0)) for t in range(n)]
            q = Polynomial.constant(n, p[b][j])
            for t in range(n):
                if g[t]:
                    q = q + shifts[t] * g[t]
            if not q.is_zero():
                total = total + structure.fields[j].scale(q)
        fields.append(total)
    return fields


def annihilators_vanish_on(structure: Structure, point: Sequence, rows: Sequence[Sequence]) -> bool:
    """Exact check that ``lambda o B`` vanishes on ``span(rows)`` for every ``lambda`` killing ``V``.

    Annihilators of ``V(x)`` are spanned by the complement-coordinate
    covectors, so it is enough that every component of ``B_x`` vanishes on
    the span.
    """
    form = bracket_form(structure, exact_point(point))
    return all(v == 0 for a, b in combinations(range(len(rows)), 2) for v in form.exact_value(rows[a], rows[b]))


# ---------------------------------------------------------------------------
# independent oracle for small k


def _chart_refine(mats, pivots, free, center, pairs):
    h = center.shape[0]
    k = mats.shape[1]

    def build(z):
        r = np.zeros((h, k))
        r[:, list(pivots)] = np.eye(h)
        r[:, free] = z.reshape(center.shape)
        return r

    def res(z):
        r = build(z)
        return np.concatenate([np.einsum("i,lij,j->l", r[a], mats, r[b]) for a, b in pairs])

    sol = least_squares(res, center.ravel(), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100)
    if np.max(np.abs(sol.x)) > 1.5:
        return None
    r = build(sol.x)
    return float(np.sum(res(sol.x) ** 2)), r


def grid_oracle(
    mats: np.ndarray, h: int, *, min_width: float = 1e-7, zero_tol: float = 1e-20,
    refine_width: float = 1e-2, max_boxes: int = 400_000,
) -> dict:
    """Branch-and-bound over all Grassmann coordinate charts.

    Every ``h``-plane in ``R^k`` is the row space of a matrix ``R`` equal to
    the identity on some pivot columns and with entries in ``[-1, 1]``
    elsewhere. On a box of such matrices each ``r_a^T M r_b`` is bounded
    below in absolute value by its center value minus a first- and
    second-order deviation bound, giving a lower bound for
    ``g(R) = sum |B(r_a, r_b)|^2``. Since ``f >= g / (h (1 + k - h))^2`` on
    these charts, pruning every box certifies a positive lower bound for the
    orthonormal objective ``f``. Small boxes that resist pruning get a local
    least-squares solve in chart coordinates to detect exact null planes.
    """
    mats = np.asarray(mats, float)
    m, k, _ = mats.shape
    if not 2 <= h <= k:
        raise ValueError("need 2 <= h <= k")
    pairs = [(a, b) for a in range(h) for b in range(a + 1, h)]
    abs_mats = np.abs(mats)
    norm_factor = float(h * (1 + k - h)) ** 2
    best_value = np.inf
    best_basis = None
    min_lower = np.inf
    boxes = 0
    undecided = 0
    for pivots in combinations(range(k), h):
        free = [c for c in range(k) if c not in pivots]
        if not free:
            stack = [(np.zeros((h, 0)), 0.0)]
        else:
            stack = [(np.zeros((h, len(free))), 1.0)]
        # uniform half-width per box (cubes)
        while stack:
            center, half = stack.pop()
            boxes += 1
            if boxes > max_boxes:
                return {"verdict": "undecided", "reason": "box budget exhausted", "boxes": boxes,
                        "best_value": best_value, "certified_lower": None}
            r = np.zeros((h, k))
            r[:, list(pivots)] = np.eye(h)
            if free:
                r[:, free] = center
            width = np.zeros((h, k))
            if free:
                width[:, free] = half
            g_center = 0.0
            g_lower = 0.0
            for a, b in pairs:
                q = np.einsum("i,lij,j->l", r[a], mats, r[b])
                lin = np.abs(mats @ r[b]) @ width[a] + np.abs(np.einsum("i,lij->lj", r[a], mats)) @ width[b]
                quad = np.einsum("i,lij,j->l", width[a], abs_mats, width[b])
                g_center += float(q @ q)
                low = np.maximum(np.abs(q) - lin - quad, 0.0)
                g_lower += float(low @ low)
            if g_center < best_value:
                best_value = g_center
                best_basis = r.copy()
            if g_center <= zero_tol:
                q_basis, _ = np.linalg.qr(r.T)
                return {"verdict": "involutive-at-x", "boxes": boxes, "best_value": g_center,
                        "best_f": null_objective(mats, q_basis), "basis": r.tolist(), "certified_lower": 0.0}
            if g_lower > 0.0:
                min_lower = min(min_lower, g_lower)
                continue
            if free and half < refine_width:
                hit = _chart_refine(mats, pivots, free, center, pairs)
                if hit is not None and hit[0] <= zero_tol:
                    q_basis, _ = np.linalg.qr(hit[1].T)
                    return {"verdict": "involutive-at-x", "boxes": boxes, "best_value": hit[0],
                            "best_f": null_objective(mats, q_basis), "basis": hit[1].tolist(), "certified_lower": 0.0}
            if half < min_width or not free:
                undecided += 1
                min_lower = 0.0
                continue
            quarter = half / 2
            shape = center.shape
            for signs in range(1 << center.size):
                offs = np.array([quarter if (signs >> i) & 1 else -quarter for i in range(center.size)]).reshape(shape)
                stack.append((center + offs, quarter))
    q_basis, _ = np.linalg.qr(best_basis.T)
    if undecided:
        return {"verdict": "undecided", "boxes": boxes, "best_value": best_value,
                "best_f": null_objective(mats, q_basis), "certified_lower": 0.0, "undecided_boxes": undecided}
    return {"verdict": "h-non-involutive", "boxes": boxes, "best_value": best_value,
            "best_f": null_objective(mats, q_basis), "certified_lower": min_lower / norm_factor}
