"""Flows of frame combinations, the exponential chart, anisotropic gauges and
Ball-Box exponent fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .structures import Structure


class FlowError(RuntimeError):
    """Raised when a trajectory leaves the working box or a chart radius is exceeded."""


DEFAULT_STEP = 1e-2


def _coefficients(structure: Structure, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] == structure.k and structure.k != structure.n:
        pad = np.zeros(c.shape[:-1] + (structure.n - structure.k,))
        c = np.concatenate([c, pad], axis=-1)
    if c.shape[-1] != structure.n:
        raise ValueError(f"need {structure.k} or {structure.n} coefficients, got {c.shape[-1]}")
    return c


def velocity(structure: Structure, x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``sum_j c_j X_j(x)`` for batches of points and coefficient vectors."""
    return np.einsum("...i,...ij->...j", coeffs, structure.frame(x))


def rk4(structure: Structure, x0, coeffs, time: float, steps: int, check: bool = True) -> np.ndarray:
    """Classical fixed-step RK4 for ``x' = sum_j c_j X_j(x)``, batched over leading axes."""
    x = np.array(x0, dtype=float)
    c = _coefficients(structure, coeffs)
    h = time / steps
    for _ in range(steps):
        k1 = velocity(structure, x, c)
        k2 = velocity(structure, x + 0.5 * h * k1, c)
        k3 = velocity(structure, x + 0.5 * h * k2, c)
        k4 = velocity(structure, x + h * k3, c)
        x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if check and not np.all(structure.in_box(x, slack=1e-12)):
            raise FlowError("trajectory left the working box")
    return x


@dataclass
class FlowResult:
    point: np.ndarray
    error_estimate: float
    steps: int
    step: float

    def to_json(self) -> dict:
        return {
            "point": self.point.tolist(),
            "error_estimate": self.error_estimate,
            "steps": self.steps,
            "step": self.step,
        }


def flow(structure: Structure, x, coeffs, time: float = 1.0, step: float = DEFAULT_STEP) -> FlowResult:
    """Flow with a step-halving error estimate (Richardson: difference / 15)."""
    x = np.asarray([float(v) for v in x]) if not isinstance(x, np.ndarray) else x.astype(float)
    if not np.all(structure.in_box(x)):
        raise FlowError("starting point outside the working box")
    if time == 0:
        return FlowResult(x.copy(), 0.0, 0, step)
    steps = max(1, math.ceil(abs(time) / step))
    coarse = rk4(structure, x, coeffs, time, steps)
    fine = rk4(structure, x, coeffs, time, 2 * steps)
    err = float(np.max(np.abs(fine - coarse))) / 15
    return FlowResult(fine, err, 2 * steps, time / (2 * steps))


def flow_point(structure: Structure, x, coeffs, time: float = 1.0, step: float = DEFAULT_STEP) -> np.ndarray:
    return flow(structure, x, coeffs, time, step).point


class ExpChart:
    """``t -> Exp_base(t)``, the time-one flow of ``sum_j t_j X_j`` over the full frame."""

    def __init__(self, structure: Structure, base, step: float = DEFAULT_STEP, radius: float = 1.0):
        if step > radius / 100:
            raise ValueError("integrator step must be at most radius/100")
        self.structure = structure
        self.base = np.asarray([float(v) for v in base])
        structure.check_point(self.base)
        self.step = step
        self.radius = radius
        self.steps = max(1, math.ceil(1.0 / step))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(np.linalg.norm(t, axis=-1) > self.radius * (1 + 1e-12)):
            raise FlowError(f"chart coordinates exceed radius {self.radius}")
        if not np.any(t):
            return np.broadcast_to(self.base, t.shape).copy()
        start = np.broadcast_to(self.base, t.shape)
        return rk4(self.structure, start, t, 1.0, self.steps)

    def linear_part(self, t) -> np.ndarray:
        return np.asarray(t, float) @ self.structure.frame(self.base)

    def jacobian(self, t, eps: float = 1e-6) -> np.ndarray:
        """Central-difference Jacobian, one batched flow for all ``2n`` perturbations."""
        t = np.asarray(t, float)
        n = t.size
        pert = np.concatenate([t + eps * np.eye(n), t - eps * np.eye(n)])
        vals = rk4(self.structure, np.broadcast_to(self.base, pert.shape), pert, 1.0, self.steps, check=False)
        return ((vals[:n] - vals[n:]) / (2 * eps)).T

    def inverse(self, y, tol: float = 1e-12, max_iter: int = 60, refresh: int = 3) -> dict:
        """Damped Newton for ``Exp(t) = y``; the Jacobian is refreshed every ``refresh`` iterations."""
        y = np.asarray(y, float)
        t = np.linalg.solve(self.structure.frame(self.base).T, y - self.base)
        jac = None
        residual = math.inf
        for it in range(max_iter):
            if np.linalg.norm(t) > self.radius:
                t = t * (self.radius / np.linalg.norm(t))
            r = self(t) - y
            residual = float(np.linalg.norm(r))
            if residual <= tol:
                return {"t": t, "converged": True, "iterations": it, "residual": residual}
            if jac is None or it % refresh == 0:
                jac = self.jacobian(t)
            dt = np.linalg.solve(jac, -r)
            lam = 1.0
            while lam > 1e-4:
                cand = t + lam * dt
                if np.linalg.norm(cand) <= self.radius and np.linalg.norm(self(cand) - y) < residual:
                    break
                lam /= 2
            else:
                jac = self.jacobian(t)
                dt = np.linalg.solve(jac, -r)
                cand = t + dt
                if np.linalg.norm(cand) > self.radius:
                    break
            t = cand
        return {"t": t, "converged": residual <= tol, "iterations": max_iter, "residual": residual}

    def openness_radius(self, rho: float, radii: Sequence[float] | None = None, directions: int = 32, seed: int = 0) -> dict:
        """Largest sampled ``delta`` with every target in ``U(base, delta)`` inverted inside ``U(0, rho)``."""
        from scipy.stats import qmc

        if rho > self.radius:
            raise ValueError("rho exceeds the chart radius")
        if radii is None:
            radii = rho * np.geomspace(1e-3, 1.0, 13)
        dirs = qmc.MultivariateNormalQMC(np.zeros(self.structure.n), seed=seed).random(directions)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        best = 0.0
        rows = []
        for delta in sorted(radii):
            ok = True
            for u in dirs:
                target = self.base + delta * u
                if not np.all(self.structure.in_box(target)):
                    ok = False
                    break
                out = self.inverse(target)
                if not out["converged"] or np.linalg.norm(out["t"]) > rho:
                    ok = False
                    break
            rows.append({"delta": float(delta), "all_inverted": ok})
            if not ok:
                break
            best = float(delta)
        return {"rho": rho, "delta": best, "rows": rows, "directions": directions}


def second_order_slope(chart: ExpChart, direction, scales: Sequence[float]) -> dict:
    """Log-log slope of ``|Exp(s u) - base - s sum u_j X_j(base)|`` against ``s``."""
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    scales = np.asarray(scales, float)
    t = scales[:, None] * u[None]
    res = np.linalg.norm(chart(t) - chart.base - chart.linear_part(t), axis=1)
    fit = stats.linregress(np.log(scales), np.log(res))
    return {"slope": float(fit.slope), "stderr": float(fit.stderr), "residuals": res.tolist(), "scales": scales.tolist()}


# ---------------------------------------------------------------------------
# gauges


def _exact(v) -> Fraction:
    if isinstance(v, float):
        # shortest round-trip decimal, so 0.1 and "0.1" agree
        return Fraction(repr(v))
    return Fraction(v)


@dataclass(frozen=True)
class GaugeSpec:
    """Anisotropic box ``Q(rho)`` (kind "box") or cone ``X(Lambda)`` (kind "cone")."""

    kind: str
    parameter: object
    degrees: tuple

    def __post_init__(self):
        if self.kind not in ("box", "cone"):
            raise ValueError("gauge kind must be 'box' or 'cone'")
        if _exact(self.parameter) <= 0:
            raise ValueError("gauge parameter must be positive")
        if any(int(d) < 1 for d in self.degrees):
            raise ValueError("degrees must be positive integers")

    def contains(self, t) -> bool:
        return gauge_membership(self, t)


def gauge_membership(gauge: GaugeSpec, t) -> bool:
    """Exact inequality test on the rational values of the inputs.

    Floats are read through their shortest decimal representation and strings
    such as ``"0.1"`` as decimal rationals, so both spellings agree. The cone condition ``|t_l| <= (L |t|)^d`` is checked
    squared so that no root is taken.
    """
    if len(t) != len(gauge.degrees):
        raise ValueError("coordinate count does not match the degrees")
    vals = [_exact(v) for v in t]
    p = _exact(gauge.parameter)
    if gauge.kind == "box":
        return all(abs(v) <= p ** int(d) for v, d in zip(vals, gauge.degrees))
    norm2 = sum(v * v for v in vals)
    return all(v * v <= p ** (2 * int(d)) * norm2 ** int(d) for v, d in zip(vals, gauge.degrees))


# ---------------------------------------------------------------------------
# Ball-Box exponents


def ballbox_exponent_fit(
    chart: ExpChart,
    direction: int,
    distance: Callable,
    scales: Sequence[float],
) -> dict:
    """Slope of ``log d(base, Exp(tau e_j))`` against ``log tau``.

    ``direction`` is 1-based. ``distance(x, y, previous)`` must return an object
    with ``upper``, ``lower`` and ``converged`` attributes; ``previous`` is the
    estimate at the preceding scale (or ``None``), which estimators may use for
    warm starts. Unconverged scales are dropped and listed.
    """
    s = chart.structure
    j = direction - 1
    if not 0 <= j < s.n:
        raise ValueError("direction index out of range")
    deg = s.degrees[j]
    rows, dropped = [], []
    previous = None
    for tau in sorted(float(v) for v in scales):
        t = np.zeros(s.n)
        t[j] = tau
        target = chart(t)
        est = distance(chart.base, target, previous)
        if not est.converged:
            dropped.append(tau)
            continue
        previous = est
        rows.append({"tau": tau, "dist_upper": est.upper, "dist_lower": est.lower})
    if len(rows) < 2:
        return {"direction": direction, "degree": deg, "slope": None, "rows": rows, "dropped": dropped}
    x = np.log([r["tau"] for r in rows])
    y = np.log([r["dist_upper"] for r in rows])
    fit = stats.linregress(x, y)
    half = float(stats.t.ppf(0.975, len(rows) - 2) * fit.stderr) if len(rows) > 2 else math.inf
    return {
        "direction": direction,
        "degree": deg,
        "expected": 1.0 / deg if deg else None,
        "slope": float(fit.slope),
        "band": [float(fit.slope) - half, float(fit.slope) + half],
        "rows": rows,
        "dropped": dropped,
    }
