"""Contact sets of graphs with a distribution, dimension and premeasure probes, metric Jacobians."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from ._numeric import compile_polynomials, rng_for
from .calc import Polynomial
from .calc.linalg import rank
from .structures import Structure, StructureError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_TAU = 1e-6
DEGENERATE_MD = 1e-9


class SurfaceGraph:
    """Graph ``Phi(q) = (q, phi(q))`` of polynomial ``phi`` over the box ``domain``."""

    def __init__(self, name: str, domain: Sequence[Sequence[float]], components: Sequence[Polynomial]):
        self.name = name
        self.domain = np.array([[float(lo), float(hi)] for lo, hi in domain])
        self.dim = len(self.domain)
        if self.dim < 1 or np.any(self.domain[:, 0] >= self.domain[:, 1]):
            raise ValueError("domain must be a non-empty box")
        self.components = tuple(components)
        if any(p.num_vars != self.dim for p in self.components):
            raise ValueError("graph components must be polynomials in the domain variables")
        self.n = self.dim + len(self.components)
        self.jacobian = tuple(tuple(p.derivative(i) for i in range(self.dim)) for p in self.components)
        self._phi = compile_polynomials(self.components) if self.components else None
        flat_jac = [d for row in self.jacobian for d in row]
        self._dphi = compile_polynomials(flat_jac, (len(self.components), self.dim)) if flat_jac else None

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_phi"] = state["_dphi"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        if self.components:
            self._phi = compile_polynomials(self.components)
            flat_jac = [d for row in self.jacobian for d in row]
            self._dphi = compile_polynomials(flat_jac, (len(self.components), self.dim))

    def embed(self, q) -> np.ndarray:
        q = np.asarray(q, float)
        if self._phi is None:
            return q.copy()
        return np.concatenate([q, self._phi(q)], axis=-1)

    def tangent(self, q) -> np.ndarray:
        """Columns ``d Phi / d q_i``, shape ``(..., n, dim)``."""
        q = np.asarray(q, float)
        top = np.broadcast_to(np.eye(self.dim), q.shape[:-1] + (self.dim, self.dim))
        if self._dphi is None:
            return top.copy()
        return np.concatenate([top, self._dphi(q)], axis=-2)

    def embed_exact(self, q: Sequence) -> list:
        return list(q) + [p.evaluate(q) for p in self.components]

    def tangent_exact(self, q: Sequence) -> list[list]:
        """Tangent vectors ``d Phi / d q_i`` as exact rows."""
        rows = []
        for i in range(self.dim):
            unit = [Fraction(int(i == j)) for j in range(self.dim)]
            rows.append(unit + [row[i].evaluate(q) for row in self.jacobian])
        return rows


def _polys_from_terms(dim: int, raw) -> Polynomial:
    return Polynomial.from_json(dim, raw)


def saddle_surface() -> SurfaceGraph:
    """``t = x y / 2`` over ``[-1, 1]^2``."""
    return SurfaceGraph("saddle", [(-1, 1), (-1, 1)], [Polynomial(2, [((1, 1), Fraction(1, 2))])])


def plane_surface() -> SurfaceGraph:
    """``t = 0`` over ``[-1, 1]^2``."""
    return SurfaceGraph("plane", [(-1, 1), (-1, 1)], [Polynomial.zero(2)])


SURFACES: Mapping[str, Callable[[], SurfaceGraph]] = {"saddle": saddle_surface, "plane": plane_surface}


def surface_from_dict(data: Mapping, source: str = "<dict>") -> SurfaceGraph:
    """Surface from a mapping with ``domain`` and a list of ``[[component]]`` term tables."""
    try:
        domain = data["domain"]
        comps = data["component"]
    except KeyError as exc:
        raise StructureError(f"{source}: missing {exc.args[0]!r}") from exc
    dim = len(domain)
    try:
        polys = [_polys_from_terms(dim, c["terms"]) for c in comps]
        return SurfaceGraph(data.get("name", source), domain, polys)
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"{source}: {exc}") from exc


def resolve_surface(spec: str) -> SurfaceGraph:
    """A built-in surface name or a TOML file path."""
    if spec in SURFACES:
        return SURFACES[spec]()
    path = Path(spec)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise StructureError(f"{spec!r} is neither a built-in surface nor a readable file") from exc
    except tomllib.TOMLDecodeError as exc:
        raise StructureError(f"{path}: invalid TOML: {exc}") from exc
    return surface_from_dict(data, str(path))


# ---------------------------------------------------------------------------
# contact deficiency


def deficiency_from_frames(horizontal: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """``||(I - P_V) T||_op`` with ``P_V`` orthogonal onto the row span of ``horizontal``
    and ``T`` an orthonormal basis of the column span of ``tangent``."""
    qv, rv = np.linalg.qr(np.swapaxes(horizontal, -1, -2))
    diag = np.abs(np.diagonal(rv, axis1=-2, axis2=-1))
    if np.any(diag.min(axis=-1) <= 1e-12 * np.maximum(diag.max(axis=-1), 1e-300)):
        raise StructureError("horizontal frame is singular at a surface point")
    qt, _ = np.linalg.qr(tangent)
    resid = qt - qv @ (np.swapaxes(qv, -1, -2) @ qt)
    return np.linalg.norm(resid, ord=2, axis=(-2, -1))


def _check_dims(structure: Structure, surf: SurfaceGraph):
    if surf.n != structure.n:
        raise StructureError(f"surface lives in R^{surf.n}, structure in R^{structure.n}")


def contact_deficiency(structure: Structure, surf: SurfaceGraph, q) -> np.ndarray:
    """Largest principal-angle sine between the tangent plane at ``Phi(q)`` and ``V(Phi(q))``.

    Vectorized over leading axes of ``q``.
    """
    _check_dims(structure, surf)
    q = np.asarray(q, float)
    p = surf.embed(q)
    if not np.all(structure.in_box(p)):
        raise StructureError("surface point outside the working box")
    return deficiency_from_frames(structure.horizontal_frame(p), surf.tangent(q))


def exact_contact(structure: Structure, surf: SurfaceGraph, q: Sequence) -> bool:
    """Exact test ``Tan(S, Phi(q)) subset V(Phi(q))`` at a rational point ``q``.

    Float coordinates are read as their shortest decimal representation.
    """
    _check_dims(structure, surf)
    q = [Fraction(repr(v)) if isinstance(v, float) else Fraction(v) for v in q]
    p = surf.embed_exact(q)
    rows = [[c.evaluate(p) for c in f.components] for f in structure.fields[: structure.k]]
    return rank(rows + surf.tangent_exact(q)) == rank(rows)


def rational_grid(domain: np.ndarray, size: int) -> list[list[Fraction]]:
    """Per-axis exact grid coordinates ``lo + i (hi - lo) / (size - 1)``."""
    if size < 2:
        raise ValueError("grid needs at least two points per axis")
    axes = []
    for lo, hi in domain:
        flo, fhi = Fraction(repr(float(lo))), Fraction(repr(float(hi)))
        axes.append([flo + (fhi - flo) * i / (size - 1) for i in range(size)])
    return axes


HISTOGRAM_EDGES = [0.0, 1e-15, 1e-12, 1e-9, 1e-6, 1e-4, 1e-2, 1e-1, 1.0 + 1e-12]


@dataclass
class ContactCloud:
    """Grid points of a surface whose deficiency is at most ``tau``."""

    indices: np.ndarray
    points: np.ndarray
    deltas: np.ndarray
    tau: float
    grid_size: int
    histogram: list = field(default_factory=list)
    exact: list = field(default_factory=list)
    all_deltas: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "grid": self.grid_size,
            "count": len(self),
            "exact_confirmed": int(sum(self.exact)),
            "histogram": self.histogram,
            "points": self.points.tolist(),
            "deltas": self.deltas.tolist(),
        }


def contact_set(structure: Structure, surf: SurfaceGraph, grid: int = 401, tau: float = DEFAULT_TAU,
                verify_exact: bool = True, max_exact: int = 5000) -> ContactCloud:
    """All points of a ``grid^dim`` grid on the surface domain with deficiency ``<= tau``.

    Candidate points are rechecked in exact rational arithmetic (up to
    ``max_exact`` of them); ``exact`` records the outcome per point.
    """
    axes = rational_grid(surf.domain, grid)
    faxes = [np.array([float(v) for v in ax]) for ax in axes]
    mesh = np.stack(np.meshgrid(*faxes, indexing="ij"), axis=-1)
    deltas = contact_deficiency(structure, surf, mesh)
    mask = deltas <= tau
    idx = np.argwhere(mask)
    counts, _ = np.histogram(deltas.ravel(), bins=HISTOGRAM_EDGES)
    hist = [{"lo": lo, "hi": hi, "count": int(c)} for lo, hi, c in zip(HISTOGRAM_EDGES[:-1], HISTOGRAM_EDGES[1:], counts)]
    exact = []
    if verify_exact and len(idx) <= max_exact:
        exact = [exact_contact(structure, surf, [axes[a][i] for a, i in enumerate(ix)]) for ix in idx]
    return ContactCloud(idx, mesh[mask], deltas[mask], tau, grid, hist, exact, deltas)


# ---------------------------------------------------------------------------
# dimension and premeasure


@dataclass
class DimensionEstimate:
    dimension: float
    band: tuple
    scales: list
    counts: list

    def to_json(self):
        return {"dimension": self.dimension, "band": list(self.band), "scales": self.scales, "counts": self.counts}


def box_counting_dimension(points, scales: Sequence[float] | None = None) -> DimensionEstimate:
    """Least-squares slope of ``log N(eps)`` against ``log(1/eps)`` with a 95% band.

    ``N(eps)`` counts occupied cells of the grid of side ``eps`` anchored at
    the cloud's lower corner. Default scales are ``extent / (2^j - 1/2)`` for
    six consecutive ``j`` ending at the finest scale still 1.5 times the
    median nearest-neighbour spacing; the half cell keeps the extent off cell
    boundaries, so a sampled segment occupies ``2^j`` cells, not ``2^j + 1``.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.size == 0 or len(pts) == 0:
        raise ValueError("empty point cloud")
    if scales is None:
        extent = float(np.max(np.ptp(pts, axis=0))) or 1.0
        j_max = 6
        if len(pts) > 1 and np.ptp(pts, axis=0).max() > 0:
            spacing = float(np.median(cKDTree(pts).query(pts, k=2)[0][:, 1]))
            if spacing > 0:
                j_max = max(2, int(math.floor(math.log2(extent / (1.5 * spacing) + 0.5))))
        scales = [extent / (2.0**j - 0.5) for j in range(max(1, j_max - 5), j_max + 1)]
    scales = sorted(float(s) for s in scales)[::-1]
    if len(scales) < 2:
        raise ValueError("need at least two scales")
    origin = pts.min(axis=0)
    counts = [len(np.unique(np.floor((pts - origin) / eps).astype(np.int64), axis=0)) for eps in scales]
    x = np.log(1 / np.array(scales))
    y = np.log(np.array(counts, float))
    if np.all(y == y[0]):
        return DimensionEstimate(0.0, (0.0, 0.0), scales, counts)
    fit = stats.linregress(x, y)
    if len(scales) > 2:
        half = stats.t.ppf(0.975, len(scales) - 2) * fit.stderr
    else:
        half = 0.0
    return DimensionEstimate(float(fit.slope), (float(fit.slope - half), float(fit.slope + half)), scales, counts)


@dataclass
class PremeasureEstimate:
    value: float
    balls: int
    dropped_pairs: int
    delta: float
    exponent: float

    def to_json(self):
        return dict(self.__dict__)


def _as_distance(result):
    """Metric callables may return a float or an estimate with ``upper``/``converged``."""
    if hasattr(result, "upper"):
        return (float(result.upper), bool(getattr(result, "converged", True)))
    return float(result), True


def _group_diameter(group: np.ndarray, metric: Callable, euclidean_lower: bool, bound: float, max_pairs: int = 2000) -> float:
    """Metric diameter of a small group, scanning pairs by decreasing Euclidean distance.

    When the metric dominates the Euclidean distance the scan stops as soon as
    no remaining pair can beat the current maximum. Groups with more than
    ``max_pairs`` candidate pairs fall back to ``bound``.
    """
    if len(group) < 2:
        return 0.0
    a, b = np.triu_indices(len(group), 1)
    eu = np.linalg.norm(group[a] - group[b], axis=1)
    order = np.argsort(-eu, kind="stable")
    if not euclidean_lower and len(order) > max_pairs:
        return bound
    diam = 0.0
    for evaluated, idx in enumerate(order):
        if euclidean_lower and eu[idx] <= diam:
            break
        if evaluated >= max_pairs:
            return max(diam, bound)
        d, ok = _as_distance(metric(group[a[idx]], group[b[idx]]))
        diam = max(diam, d if ok else bound)
    return diam


def hausdorff_premeasure(points, metric: Callable, m: float, delta: float,
                         euclidean_lower: bool = True) -> PremeasureEstimate:
    """Greedy covering by metric balls of radius ``delta/2``; returns the sum of ``diam^m``.

    Points are processed in lexicographic order; each new center collects
    every uncovered point within ``delta/2`` and contributes the diameter of
    that group. With ``euclidean_lower`` the metric is assumed to
    dominate the Euclidean distance, which prunes candidates cheaply.
    Unconverged distances leave the point uncovered by that ball and are
    counted.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    if len(pts) == 0 or pts.size == 0:
        return PremeasureEstimate(0.0, 0, 0, delta, m)
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    uncovered = np.ones(len(pts), bool)
    radius = delta / 2
    total, balls, dropped = 0.0, 0, 0
    for c in range(len(pts)):
        if not uncovered[c]:
            continue
        cand = np.flatnonzero(uncovered)
        if euclidean_lower:
            cand = cand[np.linalg.norm(pts[cand] - pts[c], axis=1) <= radius]
        members = [c]
        far = 0.0
        for j in cand:
            if j == c:
                continue
            d, ok = _as_distance(metric(pts[c], pts[j]))
            if not ok:
                dropped += 1
                continue
            if d <= radius:
                members.append(j)
                far = max(far, d)
        uncovered[members] = False
        diam = _group_diameter(pts[members], metric, euclidean_lower, 2 * far)
        total += diam**m
        balls += 1
    return PremeasureEstimate(total, balls, dropped, delta, m)


# ---------------------------------------------------------------------------
# metric differentials and Jacobians


@dataclass
class MetricDifferential:
    value: float
    spread: float
    slope: float
    divergent: bool
    radii: list
    quotients: list

    def to_json(self):
        return dict(self.__dict__)


def metric_differential(f: Callable, x, u, metric: Callable, radii: Sequence[float] | None = None,
                        domain: Callable | None = None, cap: float = 2.0) -> MetricDifferential:
    """Estimate ``lim_{r->0} d(f(x + r u), f(x)) / r``.

    The limit is a linear extrapolation of the quotients to ``r = 0``. When
    the quotients increase strictly as ``r`` decreases and grow by more than
    ``cap`` over the radius grid, the limit is flagged as divergent and the
    value set to infinity.
    """
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    radii = sorted(radii if radii is not None else np.geomspace(1e-3, 1e-1, 7).tolist())
    admissible = [r for r in radii if r > 0 and (domain is None or domain(x + r * u))]
    if len(admissible) < 3:
        raise ValueError("need at least three admissible radii")
    fx = f(x)
    quotients = []
    for r in admissible:
        d, _ = _as_distance(metric(fx, f(x + r * u)))
        quotients.append(d / r)
    q = np.array(quotients)
    r = np.array(admissible)
    spread = float(q.max() - q.min())
    positive = q > 0
    slope = float(stats.linregress(np.log(r[positive]), np.log(q[positive])).slope) if positive.sum() >= 2 and np.ptp(q[positive]) > 0 else 0.0
    increasing = bool(np.all(np.diff(q) < 0))  # radii ascend, so quotients fall with r
    divergent = increasing and q[0] > cap * q[-1]
    if divergent:
        value = math.inf
    else:
        fit = stats.linregress(r, q)
        value = float(fit.intercept) if np.ptp(q) > 0 else float(q[0])
        value = max(value, 0.0)
    return MetricDifferential(value, spread, slope, divergent, list(map(float, r)), list(map(float, q)))


def direction_grid(m: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Quasi-uniform, antipodally symmetric unit directions in ``R^m``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if m == 1:
        return np.array([[1.0], [-1.0]])
    half = max(1, count // 2)
    if m == 2:
        # k pi / half contains both coordinate axes whenever half is even
        ang = np.pi * np.arange(half) / half
        base = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif m == 3:
        # Fibonacci points on the upper hemisphere
        i = np.arange(half) + 0.5
        z = i / half
        phi = np.pi * (1 + 5**0.5) * i
        rho = np.sqrt(1 - z**2)
        base = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    else:
        base = rng_for(seed, "directions", m).standard_normal((half, m))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
    return np.vstack([base, -base])


@dataclass
class SeminormSample:
    """Values ``MD[u] >= 0`` of a seminorm on a direction grid of the unit sphere."""

    directions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, float))
        self.values = np.asarray(self.values, float).ravel()
        if len(self.values) == 0:
            raise ValueError("empty direction grid")
        if len(self.values) != len(self.directions):
            raise ValueError("one value per direction is required")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("seminorm values must be finite and non-negative")
        norms = np.linalg.norm(self.directions, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("directions must be unit vectors")

    @property
    def m(self) -> int:
        return self.directions.shape[1]

    @classmethod
    def from_function(cls, fn: Callable, m: int, count: int = 64) -> "SeminormSample":
        dirs = direction_grid(m, count)
        return cls(dirs, np.array([float(fn(u)) for u in dirs]))

    def symmetric(self, tol: float = 1e-9) -> bool:
        """True when each direction whose antipode is sampled carries the same value."""
        for i, u in enumerate(self.directions):
            j = np.flatnonzero(np.linalg.norm(self.directions + u, axis=1) <= 1e-12)
            if len(j) and abs(self.values[j[0]] - self.values[i]) > tol * max(1.0, self.values[i]):
                return False
        return True

    def scaled(self, c: float) -> "SeminormSample":
        return SeminormSample(self.directions, c * self.values)

    @classmethod
    def read_csv(cls, path: str | Path) -> "SeminormSample":
        """Columns ``u1..um, value`` with a header row."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


def metric_jacobian(sample: SeminormSample, m: int | None = None) -> float:
    """``m vol(B_1) / int_{S^{m-1}} MD[u]^(-m)``, by the mean over a uniform direction grid.

    The sphere's measure is ``m vol(B_1)``, so the formula reduces to
    ``1 / mean(MD^-m)``. Any sampled value at or below ``1e-9`` makes the
    integral diverge and the Jacobian exactly 0.
    """
    m = sample.m if m is None else int(m)
    if m < 1:
        raise ValueError("m must be at least 1")
    if m != sample.m:
        raise ValueError(f"directions live in R^{sample.m}, not R^{m}")
    if np.any(sample.values <= DEGENERATE_MD):
        return 0.0
    return float(1.0 / np.mean(sample.values ** (-float(m))))


# ---------------------------------------------------------------------------
# cone inclusion along horizontal curves


def cone_inclusion_audit(structure: Structure, controls=None, start=None, pairs: int = 400, seed: int = 0) -> dict:
    """Fit ``C`` in ``|(I - P_V(p))(q - p)| <= C |q - p|^2`` for pairs on a horizontal curve.

    The curve integrates piecewise-constant horizontal controls (default: a
    unit control turning through a quarter circle in the first two
    horizontal directions, which keeps the curve from folding back on
    itself) with ``P_V`` the orthogonal projection onto ``V(p)``. Fitted constants are reported per dyadic
    distance band.
    """
    from .metrics.cc import simulate

    rng = rng_for(seed, "cone", structure.name)
    if controls is None:
        angles = np.linspace(0, np.pi / 2, 16)
        controls = np.zeros((16, structure.k))
        controls[:, 0] = np.cos(angles)
        controls[:, min(1, structure.k - 1)] += np.sin(angles)
    start = np.zeros(structure.n) if start is None else np.asarray(start, float)
    _, _, _, nodes = simulate(structure, start, np.asarray(controls, float), substeps=16, keep_nodes=True)
    if not np.all(structure.in_box(nodes)):
        raise StructureError("horizontal curve leaves the working box")
    i = rng.integers(0, len(nodes), pairs)
    j = rng.integers(0, len(nodes), pairs)
    keep = i != j
    p, q = nodes[i[keep]], nodes[j[keep]]
    frames = structure.horizontal_frame(p)
    qv, _ = np.linalg.qr(np.swapaxes(frames, -1, -2))
    diff = q - p
    dev = np.linalg.norm(diff - np.einsum("pik,pk->pi", qv, np.einsum("pik,pi->pk", qv, diff)), axis=1)
    dist = np.linalg.norm(diff, axis=1)
    ratio = dev / dist**2
    bands = []
    top = float(dist.max())
    for b in range(4):
        hi, lo = top * 2.0**-b, top * 2.0 ** -(b + 1)
        sel = (dist <= hi) & (dist > lo)
        bands.append({"lo": lo, "hi": hi, "C": float(ratio[sel].max()) if sel.any() else math.nan, "pairs": int(sel.sum())})
    return {"C": float(ratio.max()), "pairs": int(keep.sum()), "bands": bands}


__all__ = [
    "ContactCloud", "DimensionEstimate", "MetricDifferential", "PremeasureEstimate", "SURFACES",
    "SeminormSample", "SurfaceGraph", "box_counting_dimension", "cone_inclusion_audit", "contact_deficiency",
    "contact_set", "deficiency_from_frames", "direction_grid", "exact_contact", "hausdorff_premeasure",
    "metric_differential", "metric_jacobian", "plane_surface", "rational_grid", "resolve_surface",
    "saddle_surface", "surface_from_dict",
]
