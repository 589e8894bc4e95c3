"""Polynomial frames: a horizontal distribution plus a complement.

A :class:`Structure` holds ``n`` polynomial vector fields on ``R^n``. The
first ``k`` span the horizontal distribution ``V``; the remaining ones span
a complement ``W``. Catalog models are left-invariant frames on nilpotent
groups written in exponential coordinates.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from gmpy2 import mpq
from scipy.stats import qmc

from ._numeric import compile_polynomials
from .calc import linalg
from .calc.exterior import VectorField
from .calc.polynomial import Polynomial, is_exact_scalar, to_rational

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class StructureError(ValueError):
    """Invalid structure definition or a point outside its domain."""


class StructureWarning(UserWarning):
    pass


def is_exact_point(point: Sequence) -> bool:
    return len(point) > 0 and all(is_exact_scalar(v) for v in point)


def exact_point(point: Sequence) -> tuple:
    return tuple(to_rational(v) for v in point)


Recipe = "int | tuple"


def recipe_length(recipe) -> int:
    if isinstance(recipe, int):
        return 1
    a, b = recipe
    return recipe_length(a) + recipe_length(b)


def recipe_to_text(recipe) -> str:
    if isinstance(recipe, int):
        return f"X{recipe}"
    a, b = recipe
    return f"[{recipe_to_text(a)},{recipe_to_text(b)}]"


def _parse_recipe(raw):
    if isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return (_parse_recipe(raw[0]), _parse_recipe(raw[1]))
    raise StructureError(f"bad bracket recipe {raw!r}; use an index or a pair like [1, [1, 2]]")


class Structure:
    """Frame of polynomial vector fields with a marked horizontal part."""

    def __init__(
        self,
        name: str,
        fields: Sequence[VectorField],
        k: int,
        *,
        box: Sequence[Sequence[float]] | None = None,
        recipes: Sequence | None = None,
        degrees: Sequence[int | None] | None = None,
        params: Mapping | None = None,
        lie_constants: Mapping | None = None,
        validate: bool = True,
        independence_samples: int = 1000,
    ):
        fields = tuple(fields)
        if not fields:
            raise StructureError("no fields given")
        n = fields[0].dim
        if len(fields) != n:
            raise StructureError(f"need a full frame of {n} fields, got {len(fields)}")
        if any(f.dim != n for f in fields):
            raise StructureError("fields live in different dimensions")
        if not 1 <= k <= n:
            raise StructureError(f"horizontal rank k={k} must lie in 1..{n}")
        self.name = name
        self.fields = fields
        self.k = k
        self.n = n
        if box is None:
            box = [(-1.0, 1.0)] * n
        elif len(box) == 2 and not isinstance(box[0], (list, tuple)):
            box = [tuple(box)] * n
        self.box = np.array([[float(lo), float(hi)] for lo, hi in box])
        if self.box.shape != (n, 2) or np.any(self.box[:, 0] >= self.box[:, 1]):
            raise StructureError("box must give lo < hi for every coordinate")
        self.recipes = tuple(recipes) if recipes is not None else (None,) * (n - k)
        if len(self.recipes) != n - k:
            raise StructureError("one recipe (or None) per complement field")
        if degrees is None:
            degrees = [1] * k + [recipe_length(r) if r is not None else None for r in self.recipes]
        self.degrees = tuple(degrees)
        self.params = dict(params or {})
        self.lie_constants = dict(lie_constants) if lie_constants else None
        self.warnings: list[str] = []
        comp_degrees = sorted({d for d in self.degrees[k:] if d is not None})
        if len(comp_degrees) > 1:
            msg = (
                f"{name}: complement fields come from brackets of different lengths {tuple(comp_degrees)}; "
                "bracket forms only see the complement coordinates, so higher layers are weighted like lower ones"
            )
            self.warnings.append(msg)
            warnings.warn(msg, StructureWarning, stacklevel=2)
        self._brackets: dict[tuple[int, int], VectorField] = {}
        self._compiled = None
        if validate:
            self._check_recipes()
            self.check_independence(independence_samples)

    # pickling drops compiled closures
    def __getstate__(self):
        state = dict(self.__dict__)
        state["_compiled"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def __repr__(self):
        return f"Structure({self.name!r}, n={self.n}, k={self.k})"

    @property
    def horizontal(self) -> tuple[VectorField, ...]:
        return self.fields[: self.k]

    @property
    def complement(self) -> tuple[VectorField, ...]:
        return self.fields[self.k:]

    # exact side
    def bracket(self, i: int, j: int) -> VectorField:
        """Exact ``[X_i, X_j]`` with 0-based indices, cached."""
        key = (i, j)
        if key not in self._brackets:
            self._brackets[key] = self.fields[i].bracket(self.fields[j])
        return self._brackets[key]

    def field_from_recipe(self, recipe) -> VectorField:
        if isinstance(recipe, int):
            if not 1 <= recipe <= self.k:
                raise StructureError(f"recipe index {recipe} must name a horizontal field 1..{self.k}")
            return self.fields[recipe - 1]
        a, b = recipe
        return self.field_from_recipe(a).bracket(self.field_from_recipe(b))

    def _check_recipes(self):
        for offset, recipe in enumerate(self.recipes):
            if recipe is None:
                continue
            built = self.field_from_recipe(recipe)
            if built != self.fields[self.k + offset]:
                raise StructureError(
                    f"complement field X{self.k + offset + 1} differs from its recipe {recipe_to_text(recipe)}"
                )

    def frame_exact(self, point: Sequence) -> list[list[mpq]]:
        """Rows are ``X_i(x)`` evaluated exactly."""
        p = exact_point(point)
        return [f.evaluate(p) for f in self.fields]

    def decompose_exact(self, point: Sequence, vector: Sequence) -> list[mpq]:
        """Coefficients ``c`` with ``vector = sum c_i X_i(x)``."""
        rows = self.frame_exact(point)
        return linalg.solve(linalg.transpose(rows), [to_rational(v) for v in vector])

    def projections_exact(self, point: Sequence):
        """Exact matrices of the projections onto ``V`` and ``W`` at ``x``."""
        rows = self.frame_exact(point)
        cols = linalg.transpose(rows)
        n, k = self.n, self.k
        coeffs = [linalg.solve(cols, [mpq(int(i == j)) for i in range(n)]) for j in range(n)]
        pv = [[sum((rows[a][i] * coeffs[j][a] for a in range(k)), mpq(0)) for j in range(n)] for i in range(n)]
        pw = [[mpq(int(i == j)) - pv[i][j] for j in range(n)] for i in range(n)]
        return pv, pw

    # float side
    def _compile(self):
        if self._compiled is None:
            comps = [c for f in self.fields for c in f.components]
            self._compiled = compile_polynomials(comps, (self.n, self.n))
        return self._compiled

    def frame(self, x) -> np.ndarray:
        """Rows ``X_i(x)``; accepts a batch of points of shape ``(..., n)``."""
        return self._compile()(x)

    def horizontal_frame(self, x) -> np.ndarray:
        return self.frame(x)[..., : self.k, :]

    def decompose(self, x, v) -> np.ndarray:
        f = self.frame(x)
        return np.linalg.solve(np.swapaxes(f, -1, -2), np.asarray(v, float)[..., None])[..., 0]

    def projections(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Projection matrices onto ``V`` along ``W`` and onto ``W`` along ``V``."""
        f = self.frame(x)
        cols = np.swapaxes(f, -1, -2)
        inv = np.linalg.inv(cols)
        pv = cols[..., :, : self.k] @ inv[..., : self.k, :]
        pw = np.eye(self.n) - pv
        return pv, pw

    def in_box(self, x, slack: float = 0.0) -> np.ndarray:
        x = np.asarray(x, float)
        return np.all((x >= self.box[:, 0] - slack) & (x <= self.box[:, 1] + slack), axis=-1)

    def check_point(self, x) -> None:
        x = np.asarray([float(v) for v in x]) if not isinstance(x, np.ndarray) else x
        if x.shape != (self.n,):
            raise StructureError(f"point must have {self.n} coordinates")
        if not self.in_box(x):
            raise StructureError(f"point {x.tolist()} lies outside the working box")

    def sample_box(self, count: int, seed: int = 0, shrink: float = 1.0) -> np.ndarray:
        sampler = qmc.Sobol(d=self.n, scramble=True, seed=seed)
        m = max(1, math.ceil(math.log2(max(count, 1))))
        pts = sampler.random_base2(m)[:count]
        center = self.box.mean(axis=1)
        half = (self.box[:, 1] - self.box[:, 0]) / 2 * shrink
        return center + (2 * pts - 1) * half

    def check_independence(self, samples: int = 1000, seed: int = 0, tol: float = 1e-10) -> None:
        pts = self.sample_box(samples, seed=seed)
        sv = np.linalg.svd(self.frame(pts), compute_uv=False)
        ratio = sv[:, -1] / np.maximum(sv[:, 0], 1e-300)
        worst = int(np.argmin(ratio))
        if ratio[worst] < tol:
            raise StructureError(
                f"frame of {self.name} degenerates at {pts[worst].tolist()} "
                f"(singular values {sv[worst].tolist()})"
            )

    # serialization
    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "params": self.params,
            "box": self.box.tolist(),
            "degrees": list(self.degrees),
            "fields": [
                {
                    "label": f"X{i + 1}",
                    "role": "horizontal" if i < self.k else "complement",
                    "recipe": recipe_to_text(self.recipes[i - self.k]) if i >= self.k and self.recipes[i - self.k] is not None else None,
                    "components": [c.to_expression() for c in f.components],
                    "terms": f.to_json(),
                }
                for i, f in enumerate(self.fields)
            ],
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# left-invariant frames on nilpotent groups


@lru_cache(maxsize=None)
def _series_coefficients(count: int) -> tuple[Fraction, ...]:
    """Taylor coefficients of ``z / (1 - exp(-z))``."""
    bern = [Fraction(1)]
    for m in range(1, count):
        s = sum(Fraction(math.comb(m + 1, j)) * bern[j] for j in range(m))
        bern.append(-s / (m + 1))
    return tuple((-1) ** m * bern[m] / math.factorial(m) for m in range(count))


def _ad(constants, n, xs, vec):
    """``[x, v]`` where ``x = sum x_i e_i`` and ``v`` has polynomial coefficients."""
    out = [Polynomial.zero(n) for _ in range(n)]
    for (i, j), image in constants.items():
        # [e_i, e_j] = image; contributes x_i v_j - x_j v_i
        a = xs[i] * vec[j] - xs[j] * vec[i]
        if a.is_zero():
            continue
        for l, c in image.items():
            out[l] = out[l] + a * c
    return out


def left_invariant_fields(n: int, constants: Mapping) -> list[VectorField]:
    """Left-invariant frame in exponential coordinates of a nilpotent group.

    ``constants`` maps 0-based pairs ``(i, j)`` with ``i < j`` to dicts
    ``{l: c}`` meaning ``[e_i, e_j] = sum c e_l``. The field attached to
    ``e_i`` is ``(ad_x / (1 - exp(-ad_x))) e_i``, truncated where the
    iterated brackets vanish.
    """
    consts = {}
    for (i, j), image in constants.items():
        if i == j:
            continue
        if i > j:
            i, j = j, i
            image = {l: -to_rational(c) for l, c in image.items()}
        consts[(i, j)] = {l: to_rational(c) for l, c in image.items() if c}
    xs = Polynomial.variables(n)
    coeffs = _series_coefficients(n + 2)
    fields = []
    for i in range(n):
        term = [Polynomial.constant(n, int(l == i)) for l in range(n)]
        total = list(term)
        m = 0
        while True:
            m += 1
            term = _ad(consts, n, xs, term)
            if all(t.is_zero() for t in term):
                break
            if m >= len(coeffs):
                raise StructureError("structure constants are not nilpotent")
            c = coeffs[m]
            if c:
                total = [a + t * mpq(c.numerator, c.denominator) for a, t in zip(total, term)]
        fields.append(VectorField(total))
    return fields


def check_jacobi(n: int, constants: Mapping) -> list[tuple[int, int, int]]:
    """Triples (0-based) where the structure constants violate Jacobi."""

    def br(a: dict, b: dict) -> dict:
        out: dict[int, mpq] = {}
        for i, ca in a.items():
            for j, cb in b.items():
                if i == j:
                    continue
                key, s = ((i, j), 1) if i < j else ((j, i), -1)
                for l, c in constants.get(key, {}).items():
                    out[l] = out.get(l, 0) + s * to_rational(ca) * to_rational(cb) * to_rational(c)
        return {l: c for l, c in out.items() if c}

    bad = []
    e = lambda i: {i: mpq(1)}  # noqa: E731
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                acc: dict[int, mpq] = {}
                for term in (br(e(a), br(e(b), e(c))), br(e(b), br(e(c), e(a))), br(e(c), br(e(a), e(b)))):
                    for l, v in term.items():
                        acc[l] = acc.get(l, 0) + v
                if any(acc.values()):
                    bad.append((a, b, c))
    return bad


def left_invariant_structure(name, n, k, constants, recipes, box=None, params=None, degrees=None) -> Structure:
    bad = check_jacobi(n, constants)
    if bad:
        raise StructureError(f"structure constants of {name} violate Jacobi at {[tuple(i + 1 for i in t) for t in bad]}")
    fields = left_invariant_fields(n, constants)
    if box is None:
        box = [(-4.0, 4.0)] * n
    return Structure(name, fields, k, box=box, recipes=recipes, params=params, lie_constants=constants, degrees=degrees)


# 1-based relation tables, converted below
FREE33_RELATIONS = {
    (1, 2): {4: 1}, (1, 3): {5: 1}, (2, 3): {6: 1},
    (1, 4): {7: 1}, (1, 5): {8: 1}, (1, 6): {9: 1},
    (2, 4): {10: 1}, (2, 5): {11: 1}, (2, 6): {12: 1},
    (3, 4): {9: -1, 11: 1}, (3, 5): {13: 1}, (3, 6): {14: 1},
}

# complement X7..X14 as brackets of the horizontal fields X1..X6
FREE33_RECIPES = ((1, 4), (1, 5), (1, 6), (2, 4), (2, 5), (2, 6), (3, 5), (3, 6))
FREE33_DEGREES = (1, 1, 1, 2, 2, 2) + (3,) * 8


def _zero_based(table):
    return {(i - 1, j - 1): {l - 1: c for l, c in img.items()} for (i, j), img in table.items()}


def heisenberg(d: int = 1, name: str | None = None) -> Structure:
    if d < 1:
        raise StructureError("d must be at least 1")
    n = 2 * d + 1
    consts = {(i, d + i): {2 * d: 1} for i in range(d)}
    recipes = ((1, d + 1),)
    return left_invariant_structure(name or f"heisenberg_d{d}", n, 2 * d, consts, recipes, params={"d": d})


def engel() -> Structure:
    consts = {(0, 1): {2: 1}, (0, 2): {3: 1}}
    return left_invariant_structure("engel", 4, 2, consts, ((1, 2), (1, (1, 2))))


def free33() -> Structure:
    """Free step-3 group on three generators; horizontal part is span(X1..X6)."""
    return left_invariant_structure(
        "free33", 14, 6, _zero_based(FREE33_RELATIONS), FREE33_RECIPES,
        box=[(-2.0, 2.0)] * 14, degrees=FREE33_DEGREES,
    )


def flat(n: int = 3, k: int = 2) -> Structure:
    fields = [VectorField.coordinate(n, i) for i in range(n)]
    return Structure(f"flat_{n}_{k}", fields, k, box=[(-4.0, 4.0)] * n, params={"n": n, "k": k})


CATALOG = {
    "heisenberg1": lambda: heisenberg(1, name="heisenberg1"),
    "heisenberg_d": lambda d=2: heisenberg(int(d)),
    "engel": engel,
    "free33": free33,
    "flat": lambda n=3, k=2: flat(int(n), int(k)),
}


@lru_cache(maxsize=32)
def _catalog_cached(name: str, items: tuple) -> Structure:
    return CATALOG[name](**dict(items))


def catalog(name: str, **params) -> Structure:
    """Catalog model by name, e.g. ``catalog("heisenberg_d", d=3)``."""
    if name not in CATALOG:
        raise StructureError(f"unknown catalog model {name!r}; choose from {sorted(CATALOG)}")
    return _catalog_cached(name, tuple(sorted(params.items())))


def free33_relation_table() -> dict:
    """Model relations of the free33 frame, 1-based."""
    return {k: dict(v) for k, v in FREE33_RELATIONS.items()}


def check_relations(structure: Structure, table: Mapping) -> list[dict]:
    """Exact check of ``[X_i, X_j] = sum c X_l`` for each entry (1-based)."""
    results = []
    for (i, j), image in table.items():
        lhs = structure.bracket(i - 1, j - 1)
        rhs = VectorField.zero(structure.n)
        for l, c in image.items():
            rhs = rhs + structure.fields[l - 1].scale(to_rational(c))
        expected = " ".join(f"{'+' if c > 0 else '-'}{'' if abs(c) == 1 else abs(c)}X{l}" for l, c in sorted(image.items()))
        results.append({"pair": [i, j], "expected": expected.lstrip("+"), "holds": lhs == rhs})
    return results


# ---------------------------------------------------------------------------
# TOML structure files


def _load_field(n, raw, where):
    comps = raw.get("components")
    if comps is None:
        raise StructureError(f"{where}: missing 'components'")
    try:
        return VectorField.from_json(n, comps)
    except (ValueError, TypeError) as exc:
        raise StructureError(f"{where}: {exc}") from exc


def structure_from_dict(data: Mapping, source: str = "<dict>") -> Structure:
    try:
        n = int(data["n"])
        k = int(data["k"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"{source}: 'n' and 'k' are required integers") from exc
    raw_fields = data.get("field", [])
    if len(raw_fields) != k:
        raise StructureError(f"{source}: expected {k} [[field]] tables, found {len(raw_fields)}")
    fields = [_load_field(n, f, f"{source} field {i + 1}") for i, f in enumerate(raw_fields)]
    recipes = []
    raw_comp = data.get("complement", [])
    if len(raw_comp) != n - k:
        raise StructureError(f"{source}: expected {n - k} [[complement]] tables, found {len(raw_comp)}")
    partial = Structure(data.get("name", source), fields + [VectorField.coordinate(n, i) for i in range(n - k)], k, validate=False, box=data.get("box"))
    for i, comp in enumerate(raw_comp):
        where = f"{source} complement {i + 1}"
        if "recipe" in comp:
            recipe = _parse_recipe(comp["recipe"])
            recipes.append(recipe)
            fields.append(partial.field_from_recipe(recipe))
        else:
            recipes.append(None)
            fields.append(_load_field(n, comp, where))
    params = dict(data.get("params", {}))
    return Structure(data.get("name", Path(source).stem), fields, k, box=data.get("box"), recipes=recipes, params=params)


def load_structure(path: str | Path) -> Structure:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise StructureError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise StructureError(f"{path}: invalid TOML: {exc}") from exc
    return structure_from_dict(data, str(path))


def resolve_structure(spec: str, params: Mapping | None = None) -> Structure:
    """A catalog name or a path to a TOML file."""
    if spec in CATALOG:
        return catalog(spec, **(params or {}))
    path = Path(spec)
    if path.suffix == ".toml" or path.exists():
        return load_structure(path)
    raise StructureError(f"{spec!r} is neither a catalog model nor a structure file")


# ---------------------------------------------------------------------------
# bracket generation


def hormander_step(
    structure: Structure, point: Sequence, max_step: int = 6, tol: float = 1e-9, generators: Sequence[int] | None = None
) -> dict:
    """Smallest ``s`` such that brackets of length ``<= s`` span ``R^n`` at ``x``.

    Commutators are generated level by level as ``[X_i, Y]`` with ``Y`` from
    the previous level; each level is pruned to an R-linear basis of
    polynomial fields, which leaves the spans unchanged. Ranks are exact for
    rational points and SVD-based otherwise. ``generators`` (0-based)
    restricts level one to a subset of the horizontal fields.
    """
    n = structure.n
    gens = [structure.fields[i] for i in (generators if generators is not None else range(structure.k))]
    exact = is_exact_point(point)
    pt = exact_point(point) if exact else np.asarray(point, float)

    def values(fields):
        if exact:
            return [f.evaluate(pt) for f in fields]
        return [[float(v) for v in f.evaluate(list(map(float, pt)))] for f in fields]

    def span_rank(rows):
        if not rows:
            return 0
        if exact:
            return linalg.rank(rows)
        sv = np.linalg.svd(np.array(rows, float), compute_uv=False)
        return int(np.sum(sv > tol * max(1.0, sv[0])))

    level = list(gens)
    collected = values(level)
    ranks = [span_rank(collected)]
    if ranks[-1] == n:
        return {"step": 1, "ranks": ranks, "reached_full_rank": True}
    for s in range(2, max_step + 1):
        candidates = [g.bracket(y) for g in gens for y in level]
        level = _independent_fields(candidates)
        if not level:
            break
        collected += values(level)
        ranks.append(span_rank(collected))
        if ranks[-1] == n:
            return {"step": s, "ranks": ranks, "reached_full_rank": True}
    return {"step": None, "ranks": ranks, "reached_full_rank": False}


def _independent_fields(fields: Sequence[VectorField]) -> list[VectorField]:
    """Subset forming an R-basis of the span of the given polynomial fields."""
    keys: dict = {}
    rows = []
    for f in fields:
        row = {}
        for comp_index, comp in enumerate(f.components):
            for exps, c in comp.terms:
                key = (comp_index, exps)
                keys.setdefault(key, len(keys))
                row[keys[key]] = c
        rows.append(row)
    chosen: list[VectorField] = []
    basis: list[list] = []
    for f, row in zip(fields, rows):
        if not row:
            continue
        dense = [row.get(i, mpq(0)) for i in range(len(keys))]
        trial = [b + [mpq(0)] * (len(keys) - len(b)) for b in basis] + [dense]
        if linalg.rank(trial) == len(trial):
            basis = trial
            chosen.append(f)
    return chosen


def random_polynomial_structure(rng, k: int, m: int, degree: int = 2, name: str = "random") -> Structure:
    """Random distribution ``X_i = e_i + sum_l p_il e_(k+l)`` with coordinate complement.

    The frame is unitriangular, hence independent everywhere.
    """
    from .calc.polynomial import random_polynomial

    n = k + m
    fields = []
    for i in range(k):
        comps = [Polynomial.constant(n, int(j == i)) for j in range(k)]
        comps += [random_polynomial(rng, n, degree, density=0.5, max_numerator=3, max_denominator=2) for _ in range(m)]
        fields.append(VectorField(comps))
    fields += [VectorField.coordinate(n, k + l) for l in range(m)]
    return Structure(name, fields, k, box=[(-2.0, 2.0)] * n, independence_samples=64)


# ---------------------------------------------------------------------------
# modulus of continuity of the projections


def _projection_derivative_norms(structure: Structure, pts: np.ndarray, order: int, step: float) -> np.ndarray:
    """Upper bounds for ``sup_|u|=1 ||D^order Pi^V (p)[u,..]||_op`` at each point.

    Uses ``||sum_i u_i A_i|| <= sqrt(sum_i ||A_i||^2)`` for unit ``u`` (and the
    analogous bound over index pairs for second derivatives), with central
    differences for the partial derivatives.
    """
    n = structure.n
    eye = np.eye(n) * step
    pts = np.atleast_2d(pts)
    if order == 1:
        plus = structure.projections(pts[:, None, :] + eye[None])[0]
        minus = structure.projections(pts[:, None, :] - eye[None])[0]
        parts = (plus - minus) / (2 * step)
        norms = np.linalg.norm(parts, ord=2, axis=(-2, -1))
        return np.sqrt(np.sum(norms**2, axis=1))
    base = structure.projections(pts)[0]
    total = np.zeros(len(pts))
    for i in range(n):
        for j in range(i, n):
            ei, ej = eye[i], eye[j]
            if i == j:
                d2 = (structure.projections(pts + ei)[0] - 2 * base + structure.projections(pts - ei)[0]) / step**2
                weight = 1.0
            else:
                d2 = (
                    structure.projections(pts + ei + ej)[0] - structure.projections(pts + ei - ej)[0]
                    - structure.projections(pts - ei + ej)[0] + structure.projections(pts - ei - ej)[0]
                ) / (4 * step**2)
                weight = 2.0
            total += weight * np.linalg.norm(d2, ord=2, axis=(-2, -1)) ** 2
    return np.sqrt(total)


def _refine_maximum(func, starts, lo, hi, rounds: int = 40) -> float:
    """Batched compass search for the maximum of ``func`` from several starts inside ``[lo, hi]``."""
    n = len(lo)
    moves = np.vstack([np.eye(n), -np.eye(n)])
    pts = np.array(starts, float)
    vals = func(pts)
    h = np.full(len(pts), 0.25)
    span = hi - lo
    for _ in range(rounds):
        trial = np.clip(pts[:, None, :] + h[:, None, None] * moves[None] * span, lo, hi)
        tv = func(trial.reshape(-1, n)).reshape(len(pts), -1)
        arg = np.argmax(tv, axis=1)
        top = tv[np.arange(len(pts)), arg]
        better = top > vals
        pts[better] = trial[better, arg[better]]
        vals = np.where(better, top, vals)
        h = np.where(better, h, h / 2)
        if np.all(h < 1e-6):
            break
    return float(np.max(vals))


def projection_modulus(
    structure: Structure,
    lo,
    hi,
    samples: int = 512,
    seed: int = 0,
    order: int = 1,
    safety: float = 1.1,
) -> float:
    """Estimate ``C(R)`` with ``||Pi^V_y - Pi^V_z|| <= C(R) |y - z|`` on the box ``R = [lo, hi]``.

    ``order=2`` bounds second directional derivatives instead, which is what
    the curve-length padding uses. The supremum is taken over a scrambled
    Sobol sample of ``R`` and refined by a batched compass search from the
    best three samples; the result carries a 10% safety factor.
    """
    lo = np.maximum(np.asarray(lo, float), structure.box[:, 0])
    hi = np.minimum(np.asarray(hi, float), structure.box[:, 1])
    if np.any(lo > hi):
        raise StructureError("region does not meet the working box")
    step = 1e-5 if order == 1 else 1e-4
    span = hi - lo
    if np.all(span == 0):
        pts = lo[None]
    else:
        sampler = qmc.Sobol(d=structure.n, scramble=True, seed=seed)
        m = max(1, math.ceil(math.log2(samples)))
        pts = lo + sampler.random_base2(m)[:samples] * span
        corners = np.array([lo, hi, (lo + hi) / 2])
        pts = np.vstack([pts, corners])
    vals = _projection_derivative_norms(structure, pts, order, step)
    best = float(np.max(vals))
    if np.any(span > 0):
        best = max(best, _refine_maximum(lambda p: _projection_derivative_norms(structure, p, order, step),
                                         pts[np.argsort(vals)[-3:]], lo, hi))
    if best < 1e-9:
        # constant projections up to differencing noise
        return 0.0
    return safety * best


class ModulusCache:
    """Memoized ``projection_modulus`` on dyadic enlargements of query boxes.

    Each query box is replaced by a larger aligned box (half-width a power of
    two times 1.25), so the returned constant is valid for the query and
    repeated nearby queries share one computation.
    """

    def __init__(self, structure: Structure, samples: int = 256, seed: int = 0):
        self.structure = structure
        self.samples = samples
        self.seed = seed
        self._cache: dict = {}

    def __getstate__(self):
        return {"structure": self.structure, "samples": self.samples, "seed": self.seed, "_cache": dict(self._cache)}

    def query(self, lo, hi, order: int = 1) -> float:
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        center = (lo + hi) / 2
        radius = float(np.max(hi - lo)) / 2
        level = math.ceil(math.log2(max(radius, 2.0**-20)))
        q = 2.0**level
        grid = q / 2
        snapped = np.round(center / grid) * grid
        key = (order, level, tuple(np.round(snapped / grid).astype(int)))
        if key not in self._cache:
            half = 1.25 * q
            self._cache[key] = projection_modulus(
                self.structure, snapped - half, snapped + half, samples=self.samples, seed=self.seed, order=order
            )
        return self._cache[key]
