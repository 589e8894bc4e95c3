import numpy as np
import pytest

from ccgeo.metrics import cc_distance
from ccgeo.structures import StructureError, catalog
from ccgeo.tangency import (
    SeminormSample,
    box_counting_dimension,
    cone_inclusion_audit,
    contact_deficiency,
    contact_set,
    deficiency_from_frames,
    direction_grid,
    exact_contact,
    hausdorff_premeasure,
    metric_differential,
    metric_jacobian,
    plane_surface,
    resolve_surface,
    saddle_surface,
)


@pytest.fixture(scope="module")
def saddle_cloud(heis):
    return contact_set(heis, saddle_surface(), 401, 1e-6)


def test_deficiency_examples(heis):
    saddle, plane = saddle_surface(), plane_surface()
    assert contact_deficiency(heis, saddle, [0.3, 0.0]) <= 1e-15
    assert exact_contact(heis, saddle, [0.3, 0]) and not exact_contact(heis, saddle, [0.3, 0.1])
    assert contact_deficiency(heis, plane, [0.0, 1.0]) > 0.1
    assert not exact_contact(heis, plane, [0, 1]) and exact_contact(heis, plane, [0, 0])


def test_full_tangent_distribution_has_zero_deficiency():
    frame = np.eye(3)
    tangent = np.array([[1.0, 0.2], [0.3, 1.0], [0.5, -0.7]])
    assert deficiency_from_frames(frame, tangent) <= 1e-15


def test_deficiency_is_frame_invariant(heis):
    rng = np.random.default_rng(4)
    surf = saddle_surface()
    q = rng.uniform(-1, 1, (50, 2))
    p = surf.embed(q)
    frame = heis.horizontal_frame(p)
    mix = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    base = deficiency_from_frames(frame, surf.tangent(q))
    mixed = deficiency_from_frames(mix @ frame, surf.tangent(q))
    assert np.max(np.abs(base - mixed)) <= 1e-10
    assert np.all(base >= 0) and np.all(base <= 1 + 1e-12)


def test_saddle_contact_cloud_is_the_line(saddle_cloud):
    cloud = saddle_cloud
    assert set(cloud.indices[:, 1]) == {200} and len(cloud) == 401
    assert all(cloud.exact)
    assert sum(b["count"] for b in cloud.histogram) == 401**2
    dim = box_counting_dimension(cloud.points)
    assert dim.dimension == pytest.approx(1.0, abs=0.15)


def test_plane_contact_cloud_is_the_origin(heis):
    cloud = contact_set(heis, plane_surface(), 401, 1e-6)
    np.testing.assert_array_equal(cloud.points, [[0.0, 0.0]])
    assert box_counting_dimension(cloud.points).dimension <= 0.15


def test_large_tau_takes_everything(heis):
    cloud = contact_set(heis, saddle_surface(), 21, 1.0, verify_exact=False)
    assert len(cloud) == 21**2


def test_box_counting_references():
    assert box_counting_dimension([[0.2, 0.4]]).dimension == pytest.approx(0.0, abs=0.05)
    line = np.stack([np.linspace(-1, 1, 401), np.zeros(401)], axis=1)
    assert box_counting_dimension(line).dimension == pytest.approx(1.0, abs=0.1)
    g = np.linspace(0, 1, 201)
    square = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    assert box_counting_dimension(square).dimension == pytest.approx(2.0, abs=0.1)
    with pytest.raises(ValueError):
        box_counting_dimension(np.empty((0, 2)))
    with pytest.raises(ValueError):
        box_counting_dimension(line, scales=[0.1])


def test_premeasure_references(heis):
    seg = np.stack([np.linspace(0, 1, 1001), np.zeros(1001)], axis=1)
    euclid = hausdorff_premeasure(seg, lambda a, b: float(np.linalg.norm(a - b)), 1, 0.1)
    assert euclid.value == pytest.approx(1.0, abs=0.1)
    assert hausdorff_premeasure(np.empty((0, 3)), None, 2, 0.1).value == 0.0
    horiz = np.stack([np.linspace(0, 1, 81), np.zeros(81), np.zeros(81)], axis=1)
    values = [hausdorff_premeasure(horiz, lambda a, b: cc_distance(heis, a, b), 2, d).value for d in (0.2, 0.1, 0.05)]
    assert values[2] <= 0.2
    assert values[0] > values[1] > values[2]


def test_metric_differentials(heis):
    flat = catalog("flat")
    from ccgeo.metrics import eta_distance

    md = metric_differential(lambda s: np.array([s[0], s[1], 0.0]), [0.1, 0.0], [0.6, 0.8],
                             lambda a, b: eta_distance(flat, a, b, 1.5, budget=2))
    assert md.value == pytest.approx(1.0, rel=1e-9)
    horiz = metric_differential(lambda s: np.array([s[0], 0, 0]), [0.0], [1.0], lambda a, b: cc_distance(heis, a, b))
    assert horiz.value == pytest.approx(1.0, abs=1e-6) and not horiz.divergent
    vert = metric_differential(lambda s: np.array([0, 0, s[0]]), [0.0], [1.0], lambda a, b: cc_distance(heis, a, b))
    assert vert.divergent and vert.slope == pytest.approx(-0.5, abs=0.05)
    with pytest.raises(ValueError):
        metric_differential(lambda s: s, [0.0], [1.0], lambda a, b: 0.0, radii=[0.1, 0.2])


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_jacobian_euclidean_and_scaling(m):
    sample = SeminormSample.from_function(np.linalg.norm, m, 128)
    assert metric_jacobian(sample, m) == pytest.approx(1.0, abs=1e-3)
    assert metric_jacobian(sample.scaled(2.5), m) == pytest.approx(2.5**m, rel=1e-12)
    assert sample.symmetric()


def test_jacobian_of_general_seminorm_is_homogeneous():
    sample = SeminormSample.from_function(lambda u: abs(u[0]) + 2 * abs(u[1]), 2, 256)
    j = metric_jacobian(sample)
    assert 0 < j and metric_jacobian(sample.scaled(3.0)) == pytest.approx(9 * j, rel=1e-12)


def test_jacobian_degenerate_direction_is_exactly_zero():
    sample = SeminormSample.from_function(lambda u: abs(u[0]), 2, 64)
    assert metric_jacobian(sample) == 0.0


def test_seminorm_validation(tmp_path):
    with pytest.raises(ValueError):
        SeminormSample(np.empty((0, 2)), [])
    with pytest.raises(ValueError):
        SeminormSample([[1.0, 0.0]], [-1.0])
    with pytest.raises(ValueError):
        metric_jacobian(SeminormSample(direction_grid(2, 8), np.ones(8)), 0)
    path = tmp_path / "md.csv"
    dirs = direction_grid(2, 16)
    np.savetxt(path, np.column_stack([dirs, np.full(16, 2.0)]), delimiter=",", header="u1,u2,value", comments="")
    assert metric_jacobian(SeminormSample.read_csv(path)) == pytest.approx(4.0)


def test_surface_files(tmp_path, heis):
    path = tmp_path / "s.toml"
    path.write_text('name = "s"\ndomain = [[-1, 1], [-1, 1]]\n[[component]]\nterms = [["1/2", [1, 1]]]\n')
    surf = resolve_surface(str(path))
    assert exact_contact(heis, surf, [0.5, 0])
    with pytest.raises(StructureError):
        resolve_surface(str(tmp_path / "missing.toml"))
    with pytest.raises(StructureError):
        contact_deficiency(catalog("engel"), surf, [0, 0])


def test_cone_inclusion_constant_is_finite(heis):
    rep = cone_inclusion_audit(heis)
    assert np.isfinite(rep["C"]) and rep["C"] < 1
