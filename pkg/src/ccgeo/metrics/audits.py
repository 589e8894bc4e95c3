"""Sampled audits of the squeezing, Hölder, triangle and continuity inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._numeric import parallel_map, rng_for
from ..structures import Structure
from .cc import cc_distance
from .estimate import DistanceEstimate
from .eta import eta_distance

METRICS = ("cc", "eta", "euclidean")
PAIR_MODES = ("mixed", "axis", "vertical", "horizontal")
# eta_distance settings for audits over hundreds of pairs: triangle and corner candidates only
AUDIT_ETA_OPTIONS = {"budget": 3, "restarts": 3, "max_evals": 40}


def euclidean_estimate(x, y) -> DistanceEstimate:
    d = float(np.linalg.norm(np.asarray(y, float) - np.asarray(x, float)))
    return DistanceEstimate(d, d, method="euclidean")


def estimate(structure: Structure, metric: str, x, y, eta: float = 2.0, seed: int = 0, **options) -> DistanceEstimate:
    """Dispatch to the distance estimator named by ``metric``."""
    if metric == "cc":
        return cc_distance(structure, x, y, seed=seed, **options)
    if metric == "eta":
        return eta_distance(structure, x, y, eta, seed=seed, **options)
    if metric == "euclidean":
        return euclidean_estimate(x, y)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _pair_job(args):
    structure, metric, x, y, eta, seed, options = args
    return estimate(structure, metric, x, y, eta, seed, **options)


def _unit(v):
    return v / np.linalg.norm(v)


def gauge_pair(structure: Structure, x: np.ndarray, g: float, share: float, eta: float, rng) -> np.ndarray:
    """A point ``y`` with ``|P^V_x(y-x)| = share g`` and ``|P^W_x(y-x)|^(1/eta) = (1-share) g``."""
    frame = structure.frame(x)
    horiz = _unit(rng.standard_normal(structure.k) @ frame[: structure.k])
    delta = share * g * horiz
    if structure.k < structure.n and share < 1:
        vert = _unit(rng.standard_normal(structure.n - structure.k) @ frame[structure.k:])
        delta = delta + ((1 - share) * g) ** eta * vert
    return x + delta


def gauge(structure: Structure, x, y, eta: float) -> float:
    pv, pw = structure.projections(np.asarray(x, float))
    diff = np.asarray(y, float) - np.asarray(x, float)
    return float(np.linalg.norm(pv @ diff) + np.linalg.norm(pw @ diff) ** (1 / eta))


@dataclass
class SqueezeBand:
    band_lo: float
    band_hi: float
    fitted_C: float
    certified_C: float
    pairs_used: int
    dropped: int

    def to_json(self):
        return dict(self.__dict__)


def squeeze_audit(
    structure: Structure,
    metric: str,
    eta: float,
    region: float = 0.2,
    pairs: int = 32,
    bands: int = 4,
    mode: str = "mixed",
    seed: int = 0,
    jobs: int = 1,
    options: dict | None = None,
) -> dict:
    """Smallest ``C`` with ``g/C <= d <= C g`` per dyadic gauge band.

    Base points are uniform in the cube of half-width ``region`` around the
    origin. Gauge values fill the bands ``[region 2^-(j+1), region 2^-j)``;
    the split between V and W displacement is stratified over ``[0, 1]`` (``mixed``), all-or-
    nothing (``axis``), pure W (``vertical``) or pure V (``horizontal``).
    ``fitted_C`` uses the upper estimate as the distance value;
    ``certified_C`` uses the whole bracket (upper for the first inequality,
    lower for the second) and so also absorbs the estimator's slack.
    Unconverged estimates are dropped and counted.
    """
    if mode not in PAIR_MODES:
        raise ValueError(f"unknown pair mode {mode!r}")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    rng = rng_for(seed, "squeeze", structure.name, metric, float(eta), mode)
    per_band = max(1, pairs // bands)
    jobs_list, meta = [], []
    for j in range(bands):
        hi, lo = region * 2.0**-j, region * 2.0 ** -(j + 1)
        for i in range(per_band):
            x = rng.uniform(-region, region, structure.n)
            g = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            if mode == "mixed":
                # the same stratified shares in every band keep bands comparable
                share = i / (per_band - 1) if per_band > 1 else 0.5
            elif mode == "axis":
                share = float(i % 2)
            else:
                share = 0.0 if mode == "vertical" else 1.0
            y = gauge_pair(structure, x, g, share, eta, rng)
            jobs_list.append((structure, metric, x, y, eta, seed + i, options or {}))
            meta.append((j, lo, hi, gauge(structure, x, y, eta)))
    results = parallel_map(_pair_job, jobs_list, jobs)
    report_bands = []
    for j in range(bands):
        rows = [(m, r) for m, r in zip(meta, results) if m[0] == j]
        lo, hi = rows[0][0][1], rows[0][0][2]
        used = [(m[3], r) for m, r in rows if r.converged and r.upper > 0]
        fitted = max((max(r.upper / g, g / r.upper) for g, r in used), default=math.nan)
        certified = max(
            (max(r.upper / g, g / r.lower if r.lower > 0 else math.inf) for g, r in used), default=math.nan
        )
        report_bands.append(SqueezeBand(lo, hi, fitted, certified, len(used), len(rows) - len(used)))
    fitted = [b.fitted_C for b in report_bands if b.pairs_used]
    return {
        "structure": structure.name,
        "metric": metric,
        "eta": eta,
        "mode": mode,
        "region": region,
        "seed": seed,
        "bands": [b.to_json() for b in report_bands],
        "C": max(fitted) if fitted else math.nan,
        "band_ratio": max(fitted) / min(fitted) if fitted else math.nan,
        # C in the smallest band relative to the largest one
        "growth": fitted[-1] / fitted[0] if fitted else math.nan,
    }


def continuity_constant(x, y) -> float:
    r = float(np.linalg.norm(np.asarray(y, float) - np.asarray(x, float)))
    return 2.0 * max(1.0, 2 * r + math.sqrt(r))


def eta_continuity_audit(
    structure: Structure, x, y, eta0: float = 2.0, etas=(1.6, 1.8, 1.9, 1.95, 2.0), seed: int = 0, jobs: int = 1, options=None
) -> dict:
    """Compare ``d_eta`` with ``d_eta0`` against the envelope ``(C^(|eta-eta0|/min) - 1) d0``.

    The difference of upper estimates is allowed twice the summed bracket
    widths on top of the envelope (``ok``). Only one side of that two-sided
    bound follows from comparing curve lengths: the metric with the smaller
    exponent is at most ``C^(|eta-eta0|/min)`` times the other. ``one_sided_ok``
    checks that side alone on the certified bracket ends; the flat vertical
    pair ``|w|^(1/eta)`` shows the other side can fail for short pairs.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    grid = sorted(set(float(e) for e in etas) | {float(eta0)})
    ests = parallel_map(_pair_job, [(structure, "eta", x, y, e, seed, options or {}) for e in grid], jobs)
    by_eta = dict(zip(grid, ests))
    base = by_eta[float(eta0)]
    c = continuity_constant(x, y)
    rows = []
    for e in grid:
        est = by_eta[e]
        if not (est.converged and base.converged):
            rows.append({"eta": e, "status": "dropped"})
            continue
        diff = abs(est.upper - base.upper)
        factor = c ** (abs(e - eta0) / min(e, eta0))
        envelope = factor * base.upper - base.upper
        allowance = envelope + 2 * (est.width + base.width)
        small, large = (est, base) if e <= eta0 else (base, est)
        rows.append({
            "eta": e, "lower": est.lower, "upper": est.upper, "width": est.width,
            "difference": diff, "envelope": envelope, "allowance": allowance, "ok": diff <= allowance,
            "one_sided_ok": small.lower <= factor * large.upper * (1 + 1e-12),
        })
    kept = [r for r in rows if "ok" in r]
    return {
        "x": x.tolist(), "y": y.tolist(), "eta0": eta0, "C": c, "rows": rows,
        "dropped": len(rows) - len(kept), "ok": bool(kept) and all(r["ok"] for r in kept),
        "one_sided_ok": bool(kept) and all(r["one_sided_ok"] for r in kept),
    }


def holder_sandwich_audit(
    structure: Structure, etas=(1.25, 1.5, 1.75, 2.0), pairs: int = 200, seed: int = 0, jobs: int = 1, options=None
) -> dict:
    """Check ``(2/3)|x-y| <= d_eta`` and ``d_eta <= 2|x-y|^(1/eta)`` for ``|x-y| <= 4^-eta``.

    The upper inequality is granted the bracket width; the lower one is
    checked on the certified lower value. Exponents cycle through ``etas``.
    """
    rng = rng_for(seed, "sandwich", structure.name)
    margin = 4.0 ** -min(etas)
    lo, hi = structure.box[:, 0] + margin, structure.box[:, 1] - margin
    items = []
    for i in range(pairs):
        eta = float(etas[i % len(etas)])
        x = rng.uniform(lo, hi)
        r = 4.0**-eta * float(rng.uniform(0.02, 1.0))
        y = x + r * _unit(rng.standard_normal(structure.n))
        items.append((structure, "eta", x, y, eta, seed + i, AUDIT_ETA_OPTIONS if options is None else options))
    results = parallel_map(_pair_job, items, jobs)
    worst_lower, worst_upper, failures = math.inf, math.inf, []
    for (_, _, x, y, eta, _, _), est in zip(items, results):
        r = float(np.linalg.norm(y - x))
        lower_margin = est.lower - 2 * r / 3
        upper_margin = 2 * r ** (1 / eta) + est.width - est.upper
        worst_lower = min(worst_lower, lower_margin)
        worst_upper = min(worst_upper, upper_margin)
        if lower_margin < -1e-12 or upper_margin < -1e-12:
            failures.append({"x": x.tolist(), "y": y.tolist(), "eta": eta, "lower": est.lower, "upper": est.upper})
    return {
        "pairs": pairs, "etas": list(etas), "worst_lower_margin": worst_lower,
        "worst_upper_margin": worst_upper, "failures": failures, "ok": not failures,
    }


def triangle_audit(
    structure: Structure, eta: float = 1.5, triples: int = 500, seed: int = 0, jobs: int = 1, options=None
) -> dict:
    """``d(x,z) <= d(x,y) + d(y,z)`` on upper estimates, up to the three bracket widths.

    Points are uniform in the working box. Each pair is also estimated in the
    reverse direction for a fraction of the triples to report symmetry.
    """
    rng = rng_for(seed, "triangle", structure.name, float(eta))
    lo, hi = structure.box[:, 0], structure.box[:, 1]
    pts = [rng.uniform(lo, hi, (3, structure.n)) for _ in range(triples)]
    opts = AUDIT_ETA_OPTIONS if options is None else options
    items = []
    for i, (x, y, z) in enumerate(pts):
        items += [(structure, "eta", x, y, eta, seed + i, opts), (structure, "eta", y, z, eta, seed + i, opts),
                  (structure, "eta", x, z, eta, seed + i, opts)]
    results = parallel_map(_pair_job, items, jobs)
    worst, failures, dropped = math.inf, [], 0
    for i in range(triples):
        xy, yz, xz = results[3 * i: 3 * i + 3]
        if not (xy.converged and yz.converged and xz.converged):
            dropped += 1
            continue
        slack = xy.upper + yz.upper + xy.width + yz.width + xz.width - xz.upper
        worst = min(worst, slack)
        if slack < -1e-12:
            failures.append({"points": [p.tolist() for p in pts[i]], "slack": slack})
    return {"triples": triples, "eta": eta, "dropped": dropped, "worst_slack": worst,
            "failures": failures, "ok": not failures and dropped < triples}


def symmetry_audit(structure: Structure, eta: float = 1.5, pairs: int = 10, seed: int = 0, jobs: int = 1, options=None) -> dict:
    """``|d(x,y) - d(y,x)|`` against the two bracket widths."""
    rng = rng_for(seed, "symmetry", structure.name, float(eta))
    pts = [rng.uniform(structure.box[:, 0] / 4, structure.box[:, 1] / 4, (2, structure.n)) for _ in range(pairs)]
    opts = AUDIT_ETA_OPTIONS if options is None else options
    items = [(structure, "eta", a, b, eta, seed, opts) for a, b in pts] + [(structure, "eta", b, a, eta, seed, opts) for a, b in pts]
    res = parallel_map(_pair_job, items, jobs)
    worst = min(f.width + b.width - abs(f.upper - b.upper) for f, b in zip(res[:pairs], res[pairs:]))
    return {"pairs": pairs, "worst_slack": worst, "ok": worst >= -1e-12}


def metric_consistency_audit(structure: Structure, pairs: int = 12, region: float = 0.3, seed: int = 0, jobs: int = 1) -> dict:
    """Ratios between ``d_V`` and ``d_{V,2}`` brackets on a compact box.

    Reports ``max d_V upper / d_2 lower`` and ``max d_2 upper / d_V lower``;
    local equivalence of the two metrics means both stay bounded.
    """
    rng = rng_for(seed, "consistency", structure.name)
    pts = [rng.uniform(-region, region, (2, structure.n)) for _ in range(pairs)]
    items = [(structure, "cc", a, b, 2.0, seed, {}) for a, b in pts] + [(structure, "eta", a, b, 2.0, seed, {}) for a, b in pts]
    res = parallel_map(_pair_job, items, jobs)
    cc, et = res[:pairs], res[pairs:]
    used = [(c, e) for c, e in zip(cc, et) if c.converged and e.converged]
    return {
        "pairs": pairs,
        "used": len(used),
        "cc_over_eta": max((c.upper / e.lower for c, e in used), default=math.nan),
        "eta_over_cc": max((e.upper / c.lower for c, e in used), default=math.nan),
    }


__all__ = [
    "AUDIT_ETA_OPTIONS", "METRICS", "SqueezeBand", "continuity_constant", "estimate", "eta_continuity_audit", "euclidean_estimate",
    "gauge", "gauge_pair", "holder_sandwich_audit", "metric_consistency_audit", "squeeze_audit",
    "symmetry_audit", "triangle_audit",
]
