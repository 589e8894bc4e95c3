from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccgeo.calc import Polynomial
from ccgeo.involutivity import (
    annihilators_vanish_on,
    bracket_form,
    grassmann_multistart,
    h_noninvolutive_at,
    minimal_noninvolutive_order,
    noninvolutive_at,
    null_objective,
    realize_null_subspace,
    strong_form_check,
    witness_covector_fields,
    witness_covectors,
)
from ccgeo.structures import Structure, catalog


def test_heisenberg_form_and_witness(heis):
    form = bracket_form(heis, [0, 0, 0])
    assert form.exact == [[[0, 1], [-1, 0]]]
    x, y, t = Polynomial.variables(3)
    lam = witness_covector_fields(heis)
    assert lam == [[y / 2, -x / 2, x**0]]
    assert witness_covectors(heis, [Fraction(1), Fraction(2), 0]) == [[1, Fraction(-1, 2), 1]]


def test_heisenberg_two_non_involutive(heis):
    v = h_noninvolutive_at(heis, [0, 0, 0], 2)
    assert v.non_involutive and v.exact and v.residual == 1.0
    assert v.criterion == "pointwise-B reduction"


def test_free33_form_entries(free33):
    form = bracket_form(free33, [0] * 14)
    x7 = np.argwhere(np.array(form.exact[0], dtype=object) != 0).tolist()
    assert x7 == [[0, 3], [3, 0]]
    # X9 and X11 components pick up the (3,4) entry
    assert form.exact[2][2][3] == -1 and form.exact[4][2][3] == 1


def test_free33_verdicts(free33):
    origin = [0] * 14
    v2 = h_noninvolutive_at(free33, origin, 2)
    assert v2.verdict == "involutive-at-x" and v2.exact
    v3 = h_noninvolutive_at(free33, origin, 3)
    assert v3.verdict == "involutive-at-x" and v3.witness_subspace == [
        [1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0]
    ]
    v4 = h_noninvolutive_at(free33, origin, 4, restarts=16)
    assert v4.non_involutive and min(v4.restart_residuals) >= 1e-4


def test_free33_minimal_order(free33):
    out = minimal_noninvolutive_order(free33, [0] * 14, restarts=8)
    assert out["order"] == 4


def test_minimal_order_heisenberg_and_flat(heis):
    assert minimal_noninvolutive_order(heis, [0, 0, 0])["order"] == 2
    flat = catalog("flat", n=4, k=3)
    out = minimal_noninvolutive_order(flat, [0, 0, 0, 0], restarts=4)
    assert out["status"] == "involutive"


def test_noninvolutive_at(heis, free33):
    rep = noninvolutive_at(heis, [0, 0, 0])
    assert rep["verdict"] == "non-involutive" and rep["pair"] == [1, 2]
    assert rep["covector"] == ["0", "0", "1"] and rep["covector_on_bracket"] == "1"
    rep = noninvolutive_at(heis, [Fraction(1), Fraction(2), 0])
    assert rep["covector"] == ["1", "-1/2", "1"]
    assert noninvolutive_at(free33, [0] * 14)["verdict"] == "non-involutive"
    flat = noninvolutive_at(catalog("flat"), [0, 0, 0])
    assert flat["verdict"] == "involutive-at-x" and flat["residual"] == 0.0


def test_strong_form(free33):
    assert strong_form_check(free33, [0] * 14)["holds"]
    rows = [[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0]]
    assert annihilators_vanish_on(free33, [0] * 14, rows)
    assert not annihilators_vanish_on(free33, [0] * 14, [[1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0]])


def test_optimizer_finds_planted_null_plane():
    rng = np.random.default_rng(0)
    k, m = 5, 3
    mats = rng.standard_normal((m, k, k))
    mats = mats - mats.transpose(0, 2, 1)
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    # make span(q0, q1) null by removing the (0,1) entry in that basis
    b = np.einsum("ia,lij,jb->lab", q, mats, q)
    b[:, 0, 1] = b[:, 1, 0] = 0
    mats = np.einsum("ia,lab,jb->lij", q, b, q)
    runs = grassmann_multistart(mats, 2, restarts=8, seed=1)
    assert min(r.residual for r in runs) < 1e-20


def test_realize_null_subspace(free33):
    rows = [[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0]]
    for point in ([0] * 14, [Fraction(1, 3), -1, Fraction(1, 2)] + [0] * 11):
        ys = realize_null_subspace(free33, point, rows)
        for a in range(3):
            assert ys[a].evaluate(point) == free33.fields[a].evaluate(point)
            for b in range(a + 1, 3):
                assert all(v == 0 for v in ys[a].bracket(ys[b]).evaluate(point))


def test_realize_rejects_non_null(heis):
    with pytest.raises(ValueError):
        realize_null_subspace(heis, [0, 0, 0], [[1, 0], [0, 1]])


def _frame_change(structure: Structure, g) -> Structure:
    """Same complement, horizontal frame replaced by ``Y_a = sum g[i][a] X_i``."""
    k = structure.k
    new = []
    for a in range(k):
        f = structure.fields[0].scale(g[0][a])
        for i in range(1, k):
            f = f + structure.fields[i].scale(g[i][a])
        new.append(f)
    return Structure("changed", new + list(structure.complement), k, box=structure.box.tolist())


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=16, max_size=16), st.lists(st.integers(-2, 2), min_size=4, max_size=4))
def test_equivariance(entries, coords):
    eng = catalog("heisenberg_d", d=2)
    g = np.array(entries, dtype=float).reshape(4, 4) + 5 * np.eye(4)
    changed = _frame_change(eng, [[int(v) for v in row] for row in g])
    point = [Fraction(c, 2) for c in coords] + [0]
    b = bracket_form(eng, point).matrices
    b2 = bracket_form(changed, point).matrices
    np.testing.assert_allclose(b2, np.einsum("ia,lij,jb->lab", g, b, g), atol=1e-9)


def test_equivariance_exact(free33):
    rng = np.random.default_rng(9)
    g = (rng.integers(-2, 3, size=(6, 6)) + 4 * np.eye(6, dtype=int)).tolist()
    changed = _frame_change(free33, g)
    point = [Fraction(1, 2), -1, 0, Fraction(1, 3)] + [0] * 10
    expected = bracket_form(free33, point).transformed(g).exact
    assert bracket_form(changed, point).exact == expected


def test_equivariance_with_polynomial_change(heis):
    x, y, t = Polynomial.variables(3)
    g = [[x**0, y], [x * 0, x**0 + t]]
    changed = _frame_change(heis, g)
    point = [Fraction(1, 2), Fraction(-1, 3), Fraction(2)]
    gv = np.array([[float(p.evaluate(point)) for p in row] for row in g])
    b = bracket_form(heis, point).matrices
    np.testing.assert_allclose(bracket_form(changed, point).matrices, np.einsum("ia,lij,jb->lab", gv, b, gv), atol=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3), st.integers(0, 1000))
def test_verdict_invariant_under_rescaling(scales, seed):
    rng = np.random.default_rng(seed)
    mats = rng.integers(-2, 3, size=(3, 3, 3)).astype(float)
    mats = mats - mats.transpose(0, 2, 1)
    base = min(r.residual for r in grassmann_multistart(mats, 2, 6, seed))
    scaled = mats * np.array(scales)[:, None, None]
    other = min(r.residual for r in grassmann_multistart(scaled, 2, 6, seed))
    assert (base < 1e-10) == (other < 1e-10)


def test_objective_subspace_invariance():
    rng = np.random.default_rng(2)
    mats = rng.standard_normal((2, 4, 4))
    mats -= mats.transpose(0, 2, 1)
    w, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    rot = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    assert null_objective(mats, w) == pytest.approx(null_objective(mats, w @ rot))


def test_oracle_agreement_on_random_distributions():
    from ccgeo.involutivity import grid_oracle
    from ccgeo.structures import random_polynomial_structure

    rng = np.random.default_rng(2024)
    agree = 0
    outcomes = set()
    for trial in range(50):
        k = int(rng.integers(3, 5))
        m = int(rng.integers(1, 6))
        s = random_polynomial_structure(rng, k, m)
        point = [Fraction(int(v), 2) for v in rng.integers(-2, 3, size=s.n)]
        verdict = h_noninvolutive_at(s, point, 2, restarts=16, seed=trial)
        oracle = grid_oracle(bracket_form(s, point).matrices, 2)
        outcomes.add(verdict.verdict)
        assert oracle["verdict"] == verdict.verdict, (trial, oracle, verdict)
        agree += 1
    assert agree == 50 and outcomes == {"h-non-involutive", "involutive-at-x"}


def test_roundoff_residuals_reported_as_zero():
    from ccgeo.involutivity import ROUNDOFF_FLOOR, grassmann_multistart

    mats = np.zeros((1, 3, 3))
    mats[0, 0, 1], mats[0, 1, 0] = 1.0, -1.0
    runs = grassmann_multistart(mats, 1, restarts=8, seed=3)
    assert all(r.residual == 0.0 or r.residual >= ROUNDOFF_FLOOR for r in runs)
    assert all(r.residual == 0.0 for r in runs)
