"""Sup-type anisotropic length and the eta-box distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .._numeric import rng_for
from ..structures import ModulusCache, Structure, StructureError
from .curves import PolygonalCurve
from .estimate import DistanceEstimate

SEGMENT_SAMPLES = 64
VERTEX_GRID = 65

_MODULI: dict[int, ModulusCache] = {}
# proxy value for curves leaving the working box; finite so simplex arithmetic stays defined
_OUTSIDE = 1e30


def modulus_cache(structure: Structure) -> ModulusCache:
    """Process-wide modulus cache per structure object."""
    key = id(structure)
    cache = _MODULI.get(key)
    if cache is None or cache.structure is not structure:
        cache = _MODULI[key] = ModulusCache(structure)
    return cache


def anisotropic_norm(pv: np.ndarray, pw: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    """``|P^V v| + |P^W v|^(1/eta)`` for stacks of projections and vectors."""
    a = np.linalg.norm(np.einsum("...ij,...j->...i", pv, v), axis=-1)
    b = np.linalg.norm(np.einsum("...ij,...j->...i", pw, v), axis=-1)
    return a + b ** (1 / eta)


@dataclass
class EtaLength:
    lower: float
    upper: float
    segment_upper: list

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _check_eta(eta: float):
    if not 1.0 <= eta <= 2.0:
        raise ValueError("eta must lie in [1, 2]")


def eta_length(curve: PolygonalCurve, eta: float, structure: Structure, samples: int = SEGMENT_SAMPLES) -> EtaLength:
    """Bracket for ``sup_t max_{v in derived set} |P^V v| + |P^W v|^(1/eta)``.

    Each segment is sampled at ``samples`` points. Between neighbouring samples
    ``p, q`` the projected velocity moves by at most
    ``min(C1 |v| d / 2, C2 |v| d^2 / 8)`` with ``d = |p - q|``, where ``C1``
    and ``C2`` bound the first and second derivatives of the projections on
    the segment's bounding box; the V and W parts are padded separately
    before the power is applied. At interior vertices the derived set is a
    segment of velocities; both norms are convex along it, so their maxima
    over each cell of a 65-point grid sit at the cell ends.
    """
    _check_eta(eta)
    verts = curve.vertices
    if not np.all(structure.in_box(verts)):
        raise StructureError("curve leaves the working box")
    cache = modulus_cache(structure)
    vel = curve.velocities
    lam = np.linspace(0, 1, samples)
    pts = verts[:-1, None, :] + lam[None, :, None] * curve.displacements[:, None, :]
    pv, pw = structure.projections(pts)
    a = np.linalg.norm(np.einsum("sqij,sj->sqi", pv, vel), axis=-1)
    b = np.linalg.norm(np.einsum("sqij,sj->sqi", pw, vel), axis=-1)
    lower = float(np.max(a + b ** (1 / eta)))
    seg_upper = []
    for s in range(len(vel)):
        speed = float(np.linalg.norm(vel[s]))
        if speed == 0.0:
            seg_upper.append(0.0)
            continue
        lo, hi = np.minimum(verts[s], verts[s + 1]), np.maximum(verts[s], verts[s + 1])
        c1 = cache.query(lo, hi, order=1)
        c2 = cache.query(lo, hi, order=2)
        d = float(np.linalg.norm(curve.displacements[s])) / (samples - 1)
        pad = min(c1 * speed * d / 2, c2 * speed * d * d / 8)
        am = np.maximum(a[s, :-1], a[s, 1:]) + pad
        bm = np.maximum(b[s, :-1], b[s, 1:]) + pad
        seg_upper.append(float(np.max(am + bm ** (1 / eta))))
    upper = max(max(seg_upper), lower)
    # interior vertices: convex combinations of the adjacent velocities
    mu = np.linspace(0, 1, VERTEX_GRID)
    if len(vel) > 1:
        pv_v, pw_v = structure.projections(verts[1:-1])
        combos = mu[None, :, None] * vel[:-1, None, :] + (1 - mu[None, :, None]) * vel[1:, None, :]
        av = np.linalg.norm(np.einsum("vij,vgj->vgi", pv_v, combos), axis=-1)
        bv = np.linalg.norm(np.einsum("vij,vgj->vgi", pw_v, combos), axis=-1)
        lower = max(lower, float(np.max(av + bv ** (1 / eta))))
        cell = np.maximum(av[:, :-1], av[:, 1:]) + np.maximum(bv[:, :-1], bv[:, 1:]) ** (1 / eta)
        upper = max(upper, float(np.max(cell)))
    return EtaLength(lower, max(upper, lower), seg_upper)


# ---------------------------------------------------------------------------
# time balancing


def _durations_for_level(a, b, level: float, eta: float):
    """Durations ``d_i`` with ``a_i/d_i + (b_i/d_i)^(1/eta) = level`` and their ``d log d / d log level``.

    With ``q = d^(-1/eta)`` the equation reads ``a q^eta + b^(1/eta) q = level``,
    convex and increasing in ``q``, so Newton from above converges monotonically.
    """
    ds, slopes = [], []
    inv = 1.0 / eta
    for ai, bi in zip(a, b):
        if bi == 0.0:
            ds.append(ai / level)
            slopes.append(-1.0)
            continue
        c = bi**inv
        if ai == 0.0:
            ds.append(bi / level**eta)
            slopes.append(-eta)
            continue
        q = min((level / ai) ** inv, level / c)
        for _ in range(100):
            f = ai * q**eta + c * q - level
            step = f / (eta * ai * q ** (eta - 1) + c)
            q -= step
            if step <= 1e-16 * q:
                break
        dq = 1.0 / (eta * ai * q ** (eta - 1) + c)
        ds.append(q ** (-eta))
        slopes.append(-eta * level * dq / q)
    return ds, slopes


def balanced_times(a, b, eta: float) -> tuple[float, np.ndarray]:
    """Durations minimizing ``max_i a_i/d_i + (b_i/d_i)^(1/eta)`` subject to ``sum d_i = 1``.

    At the optimum every moving segment attains the same level ``L``. The total
    duration ``D(L)`` is decreasing with log-log slope in ``[-eta, -1]``, so
    ``L`` lies in ``[L0, m L0]`` with ``L0`` the level of unit durations, and a
    safeguarded Newton iteration on ``log D(log L)`` finds it.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    moving = [i for i in range(len(a)) if a[i] > 0 or b[i] > 0]
    if not moving:
        return 0.0, np.full(len(a), 1.0 / len(a))
    am, bm = [a[i] for i in moving], [b[i] for i in moving]
    level0 = max(x + y ** (1 / eta) for x, y in zip(am, bm))
    lo, hi = math.log(level0), math.log(level0 * len(moving))
    t = lo
    for _ in range(200):
        ds, slopes = _durations_for_level(am, bm, math.exp(t), eta)
        total = sum(ds)
        phi = math.log(total)
        if phi > 0:
            lo = t
        else:
            hi = t
        if abs(phi) < 1e-15 or hi - lo < 1e-15:
            break
        dphi = sum(d * s for d, s in zip(ds, slopes)) / total
        nxt = t - phi / dphi
        t = nxt if lo < nxt < hi else (lo + hi) / 2
    level = math.exp(t)
    d = np.zeros(len(a))
    d[moving] = ds
    d /= d.sum()
    return level, d


_PROXY_SAMPLES = np.linspace(0, 1, 8)[None, :, None]
_CORNER_MIX = np.linspace(0, 1, 9)[None, :, None]


def _balanced_curve(structure, verts, eta):
    """Cheap proxy for the best eta-length of ``verts``: balanced segment levels, then corner levels.

    Segment maxima of ``|P^V v|`` and ``|P^W v|`` come from 8 samples per
    segment; ``P^W = I - P^V`` because the projections are complementary.
    """
    disp = np.diff(verts, axis=0)
    pts = verts[:-1, None, :] + _PROXY_SAMPLES * disp[:, None, :]
    pv = structure.projections(pts)[0]
    vpart = np.einsum("sqij,sj->sqi", pv, disp)
    a = np.sqrt((vpart**2).sum(-1)).max(axis=1)
    b = np.sqrt(((disp[:, None, :] - vpart) ** 2).sum(-1)).max(axis=1)
    level, d = balanced_times(a, b, eta)
    if len(d) > 1:
        # velocities mixed at corners can exceed both one-sided levels; projections are linear in v
        scale = 1.0 / np.maximum(d, 1e-300)
        before = vpart[:-1, -1] * scale[:-1, None]
        after = vpart[1:, 0] * scale[1:, None]
        v_before, v_after = disp[:-1] * scale[:-1, None], disp[1:] * scale[1:, None]
        pvm = _CORNER_MIX * before[:, None] + (1 - _CORNER_MIX) * after[:, None]
        vm = _CORNER_MIX * v_before[:, None] + (1 - _CORNER_MIX) * v_after[:, None]
        corner = np.sqrt((pvm**2).sum(-1)) + np.sqrt(((vm - pvm) ** 2).sum(-1)) ** (1 / eta)
        level = max(level, float(corner.max()))
    times = np.concatenate([[0.0], np.cumsum(d)])
    times[-1] = 1.0
    return level, times


# ---------------------------------------------------------------------------
# lower bounds


def squeezed_lower_bound(a: float, b: float, eta: float, modulus: float) -> float:
    """Smallest ``L`` compatible with ``a <= L + C s^2/2`` and ``b <= L^eta + C s^2/2``, ``s = L + L^eta``.

    Any curve of eta-length ``L`` has speed at most ``s`` and stays within
    ``s t`` of its start, so the projections at the start differ from those
    along the curve by at most ``C s t``; integrating gives the two
    inequalities for the start-point components ``a = |P^V_x (y-x)|`` and
    ``b = |P^W_x (y-x)|``.
    """

    def pad(L):
        return modulus * (L + L**eta) ** 2 / 2

    roots = []
    for target, f in ((a, lambda L: L + pad(L)), (b, lambda L: L**eta + pad(L))):
        if target <= 0:
            roots.append(0.0)
            continue
        hi = 1.0
        while f(hi) < target:
            hi *= 2
        roots.append(brentq(lambda L: f(L) - target, 0.0, hi, xtol=1e-15, rtol=1e-14))
    return max(roots)


def _lower_bound(structure, x, y, eta, upper, cache):
    diff = y - x
    dist = float(np.linalg.norm(diff))
    bounds = {}
    if dist < 4.0 ** (-eta):
        bounds["small-ball"] = 2 * dist / 3
    if upper <= 1.0:
        bounds["unit-scale"] = dist
    pv, pw = structure.projections(x)
    a, b = float(np.linalg.norm(pv @ diff)), float(np.linalg.norm(pw @ diff))
    reach = upper + upper**eta
    lo, hi = x - reach, x + reach
    clipped = bool(np.any(lo < structure.box[:, 0]) or np.any(hi > structure.box[:, 1]))
    c1 = cache.query(lo, hi, order=1)
    bounds["squeezed"] = squeezed_lower_bound(a, b, eta, c1)
    best = max(bounds, key=bounds.get)
    return bounds[best], {"lower_bounds": bounds, "lower_method": best, "modulus": c1, "modulus_region_clipped": clipped}


# ---------------------------------------------------------------------------
# distance


def _initial_vertices(structure, x, y, m, rng, kind):
    lam = np.linspace(0, 1, m + 1)[:, None]
    if kind == "straight" or m == 1:
        return x + lam * (y - x)
    pv, pw = structure.projections(x)
    dv, dw = pv @ (y - x), pw @ (y - x)
    if kind in ("v-then-w", "w-then-v"):
        first, second = (dv, dw) if kind == "v-then-w" else (dw, dv)
        half = m // 2 or 1
        path = [x]
        for i in range(1, m + 1):
            if i <= half:
                path.append(x + first * i / half)
            else:
                path.append(x + first + second * (i - half) / (m - half))
        return np.array(path)
    base = x + lam * (y - x)
    noise = rng.standard_normal(base.shape) * 0.3 * np.linalg.norm(y - x)
    noise[0] = noise[-1] = 0
    return base + noise


def eta_distance(
    structure: Structure,
    x,
    y,
    eta: float,
    budget: int = 4,
    seed: int = 0,
    restarts: int = 4,
    max_evals: int = 60,
    certify: int = 2,
) -> DistanceEstimate:
    """Bracket for the eta-box distance between ``x`` and ``y``.

    Polygonal curves with ``2..budget`` vertices are optimized by Nelder-Mead
    over interior vertices (at most ``max_evals`` proxy evaluations per free
    coordinate); for fixed vertices the time grid is chosen optimally by level
    balancing. The ``certify`` best curves by proxy value are then measured
    by ``eta_length`` and the smallest certified upper value is reported.
    Starts: the straight segment, V-then-W and W-then-V staircases, then
    random perturbations.
    """
    _check_eta(eta)
    x = np.asarray([float(v) for v in x])
    y = np.asarray([float(v) for v in y])
    structure.check_point(x)
    structure.check_point(y)
    cache = modulus_cache(structure)
    if np.array_equal(x, y):
        return DistanceEstimate(0.0, 0.0, PolygonalCurve([x, y]), method="eta-polygonal")
    rng = rng_for(seed, "eta", x.tobytes(), y.tobytes(), eta)
    kinds = ["straight", "v-then-w", "w-then-v"]
    candidates = []
    for m in range(1, max(budget, 2)):
        for r in range(restarts if m > 1 else 1):
            kind = kinds[r] if r < len(kinds) else "random"
            candidates.append((m, kind))
    proxies = []
    for index, (m, kind) in enumerate(candidates):
        verts = _initial_vertices(structure, x, y, m, rng, kind)
        if m > 1:
            inner0 = verts[1:-1].ravel()

            def objective(inner, m=m):
                vs = np.vstack([x, inner.reshape(m - 1, -1), y])
                if not np.all(structure.in_box(vs)):
                    return _OUTSIDE
                return _balanced_curve(structure, vs, eta)[0]

            res = minimize(objective, inner0, method="Nelder-Mead",
                           options={"maxfev": max_evals * inner0.size, "xatol": 1e-9, "fatol": 1e-12})
            inner = res.x if res.fun <= objective(inner0) else inner0
            verts = np.vstack([x, inner.reshape(m - 1, -1), y])
        if not np.all(structure.in_box(verts)):
            continue
        level, times = _balanced_curve(structure, verts, eta)
        if np.any(np.diff(times) <= 0):
            # zero-length pieces get dropped
            keep = np.concatenate([[True], np.diff(times) > 0])
            verts, times = verts[keep], times[keep]
            if len(verts) < 2:
                continue
        proxies.append((level, index, kind, PolygonalCurve(verts, times)))
    if not proxies:
        raise StructureError("no admissible curve inside the working box")
    proxies.sort(key=lambda p: (p[0], p[1]))
    best = None
    runs = []
    for level, index, kind, curve in proxies[: max(certify, 1)]:
        length = eta_length(curve, eta, structure)
        runs.append({"vertices": len(curve.vertices), "start": kind, "proxy": level,
                     "upper": length.upper, "lower_sampled": length.lower})
        if best is None or length.upper < best[0].upper:
            best = (length, curve)
    length, curve = best
    lower, diag = _lower_bound(structure, x, y, eta, length.upper, cache)
    diag.update({"eta": eta, "budget": budget, "seed": seed, "candidates": len(proxies),
                 "runs": runs, "length_width": length.width})
    return DistanceEstimate(min(lower, length.upper), length.upper, curve, 0.0, method="eta-polygonal", diagnostics=diag)
