from fractions import Fraction

import numpy as np
import pytest

from ccgeo.calc import Polynomial, VectorField
from ccgeo.structures import (
    StructureError,
    catalog,
    check_jacobi,
    check_relations,
    free33_relation_table,
    hormander_step,
    load_structure,
    resolve_structure,
    structure_from_dict,
)

HALF = Fraction(1, 2)


def test_heisenberg_fields(heis):
    x, y, t = Polynomial.variables(3)
    assert heis.fields[0] == VectorField([x**0, 0 * x, -HALF * y])
    assert heis.fields[1] == VectorField([0 * x, x**0, HALF * x])
    assert heis.bracket(0, 1) == heis.fields[2]


def test_engel_fields_by_hand(engel):
    x1, x2, x3, x4 = Polynomial.variables(4)
    z = 0 * x1
    twelfth = Fraction(1, 12)
    assert engel.fields[0] == VectorField([x1**0, z, -HALF * x2, -HALF * x3 - twelfth * x1 * x2])
    assert engel.fields[1] == VectorField([z, x1**0, HALF * x1, twelfth * x1**2])
    assert engel.bracket(0, 1) == engel.fields[2]
    assert engel.bracket(0, 2) == engel.fields[3]
    assert engel.bracket(1, 2).is_zero()


def test_engel_warns_about_mixed_complement(engel):
    assert engel.warnings and "different lengths" in engel.warnings[0]


def test_free33_model_relations(free33):
    results = check_relations(free33, free33_relation_table())
    assert len(results) == 12 and all(r["holds"] for r in results)


def test_free33_x3_x4_relation(free33):
    results = check_relations(free33, {(3, 4): {9: -1, 11: 1}, (2, 5): {11: 1}})
    assert all(r["holds"] for r in results)


def test_jacobi_detects_bad_table():
    # [e3,e4] = -e8 + e11 together with the rest of the step-3 table is inconsistent
    table = {(i - 1, j - 1): {l - 1: c for l, c in img.items()} for (i, j), img in free33_relation_table().items()}
    table[(2, 3)] = {7: -1, 10: 1}
    assert (0, 1, 2) in check_jacobi(14, table)


def test_heisenberg_d_relations():
    s = catalog("heisenberg_d", d=3)
    assert s.n == 7 and s.k == 6
    for i in range(3):
        assert s.bracket(i, 3 + i) == s.fields[6]
        assert s.bracket(i, 3 + (i + 1) % 3).is_zero()


def test_hormander_steps(heis, engel, free33):
    assert hormander_step(heis, [0, 0, 0])["step"] == 2
    assert hormander_step(engel, [0, 0, 0, 0])["step"] == 3
    assert hormander_step(free33, [0] * 14, generators=[0, 1, 2])["step"] == 3
    assert hormander_step(free33, [0] * 14)["step"] == 2
    assert hormander_step(catalog("flat"), [0, 0, 0], max_step=4)["step"] is None


def test_projection_oracle(heis):
    pv, pw = heis.projections(np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(pw @ [1, 0, 0], [0, 0, 0.5], atol=1e-15)
    pv_e, pw_e = heis.projections_exact([0, 1, 0])
    assert [row[0] for row in pw_e] == [0, 0, HALF]


def test_projections_are_complementary(engel):
    pts = engel.sample_box(64, seed=1, shrink=0.5)
    pv, pw = engel.projections(pts)
    np.testing.assert_allclose(pv @ pv, pv, atol=1e-10)
    np.testing.assert_allclose(pv + pw, np.broadcast_to(np.eye(4), pv.shape), atol=1e-12)
    frame = engel.horizontal_frame(pts)
    np.testing.assert_allclose(np.einsum("bij,bkj->bki", pv, frame), frame, atol=1e-10)


def test_toml_loading(tmp_path):
    text = """
name = "heis-file"
n = 3
k = 2
box = [-3, 3]
[[field]]
components = [[["1", [0,0,0]]], [], [["-1/2", [0,1,0]]]]
[[field]]
components = [[], [["1", [0,0,0]]], [["1/2", [1,0,0]]]]
[[complement]]
recipe = [1, 2]
"""
    path = tmp_path / "h.toml"
    path.write_text(text)
    s = load_structure(path)
    assert s.fields == catalog("heisenberg1").fields
    assert resolve_structure(str(path)).name == "heis-file"


def test_toml_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("n = 3\nk = 2\n[[field]]\ncomponents = [[[0.5, [0,0,0]]], [], []]\n")
    with pytest.raises(StructureError):
        load_structure(bad)
    with pytest.raises(StructureError):
        resolve_structure("no-such-model")


def test_degenerate_frame_rejected():
    x, y = Polynomial.variables(2)
    data = {
        "n": 2, "k": 1, "box": [-1, 1],
        "field": [{"components": [[["1", [0, 0]]], []]}],
        "complement": [{"components": [[["1", [1, 0]]], []]}],
    }
    with pytest.raises(StructureError, match="degenerates"):
        structure_from_dict(data)


def test_projection_modulus_flat_is_zero():
    from ccgeo.structures import projection_modulus

    assert projection_modulus(catalog("flat"), [-1] * 3, [1] * 3) == 0.0


def test_projection_modulus_reproducible_and_valid(heis):
    from ccgeo.structures import projection_modulus

    vals = [projection_modulus(heis, [-1] * 3, [1] * 3, seed=s) for s in range(3)]
    assert all(f"{v:.2g}" == f"{vals[0]:.2g}" for v in vals) and vals[0] > 0
    # dense-pair oracle: the constant dominates all sampled difference quotients
    rng = np.random.default_rng(0)
    y, z = rng.uniform(-1, 1, (2, 5000, 3))
    pv_y, pv_z = heis.projections(y)[0], heis.projections(z)[0]
    quot = np.linalg.norm(pv_y - pv_z, ord=2, axis=(1, 2)) / np.linalg.norm(y - z, axis=1)
    assert quot.max() <= vals[0]


def test_projection_modulus_monotone(engel):
    from ccgeo.structures import projection_modulus

    center = np.array([0.3, -0.2, 0.1, 0.0])
    values = [projection_modulus(engel, center - r, center + r) for r in (1.0, 0.5, 0.25, 0.1)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))


def test_modulus_cache_covers_query(engel):
    from ccgeo.structures import ModulusCache, projection_modulus

    cache = ModulusCache(engel)
    lo, hi = np.array([0.1, 0.1, 0, 0]), np.array([0.2, 0.15, 0.05, 0.1])
    assert cache.query(lo, hi) >= projection_modulus(engel, lo, hi) * 0.999
    assert cache.query(lo, hi) == cache.query(lo, hi)
