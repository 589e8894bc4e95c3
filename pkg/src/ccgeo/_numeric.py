"""Float-side helpers: compiled polynomial evaluation, seeding, parallel map."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .calc.polynomial import Polynomial


def compile_polynomials(polys: Sequence[Polynomial], shape: tuple[int, ...] | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Compile polynomials into one vectorized numpy function.

    The returned function maps an array of shape ``(..., n)`` to an array of
    shape ``(..., *shape)``.
    """
    polys = list(polys)
    if not polys:
        raise ValueError("nothing to compile")
    n = polys[0].num_vars
    shape = tuple(shape) if shape is not None else (len(polys),)
    if int(np.prod(shape)) != len(polys):
        raise ValueError("shape does not match the number of polynomials")
    powers: set[tuple[int, int]] = set()
    exprs = []
    for p in polys:
        parts = []
        for exps, c in p.terms:
            factors = [repr(float(c))]
            for i, k in enumerate(exps):
                if k:
                    powers.add((i, k))
                    factors.append(f"p{i}_{k}")
            parts.append("*".join(factors))
        exprs.append(" + ".join(parts) if parts else None)
    lines = ["def _compiled(x):", "    x = _np.asarray(x, dtype=float)", f"    out = _np.zeros(x.shape[:-1] + ({len(polys)},))"]
    for i, k in sorted(powers):
        lines.append(f"    p{i}_{k} = x[..., {i}]" + (f" ** {k}" if k > 1 else ""))
    for j, e in enumerate(exprs):
        if e is not None:
            lines.append(f"    out[..., {j}] = {e}")
    lines.append(f"    return out.reshape(x.shape[:-1] + {shape!r})")
    namespace = {"_np": np}
    exec(compile("\n".join(lines), "<compiled-polynomials>", "exec"), namespace)
    fn = namespace["_compiled"]
    fn.num_vars = n
    return fn


def derive_seed(base: int, *labels) -> int:
    """Deterministic child seed from a base seed and arbitrary labels."""
    text = repr((int(base),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little") & ((1 << 63) - 1)


def rng_for(base: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *labels))


def parallel_map(func: Callable, items: Iterable, jobs: int = 1) -> list:
    """Order-preserving map, optionally across processes."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    workers = min(jobs, len(items), os.cpu_count() or 1)
    if workers <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def solve_batched(matrices: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for stacks of square systems, ``b`` of shape (..., n)."""
    return np.linalg.solve(matrices, rhs[..., None])[..., 0]
