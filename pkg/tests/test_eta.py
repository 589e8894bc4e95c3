from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccgeo.metrics import (
    PolygonalCurve,
    balanced_times,
    derived_set,
    eta_distance,
    eta_length,
    mean_value_point,
    squeezed_lower_bound,
)
from ccgeo.structures import StructureError, catalog


@pytest.fixture(scope="module")
def flat():
    return catalog("flat")


# ---------------------------------------------------------------- curves


def test_curve_validation():
    with pytest.raises(ValueError):
        PolygonalCurve([[0, 0]])
    with pytest.raises(ValueError):
        PolygonalCurve([[0, 0], [1, 0]], times=[0, 0.5])
    with pytest.raises(ValueError):
        PolygonalCurve([[0, 0], [1, 0], [1, 1]], times=[0, 0.7, 0.7])


def test_derived_sets():
    const = PolygonalCurve([[1, 2], [1, 2]])
    np.testing.assert_array_equal(derived_set(const, 0.3).vectors, [[0, 0]])
    c = PolygonalCurve([[0, 0], [1, 0], [1, 2]], times=[0, 0.5, 1])
    inner = derived_set(c, 0.25)
    assert not inner.is_segment and np.allclose(inner.vectors, [[2, 0]])
    corner = derived_set(c, 0.5)
    assert corner.is_segment
    assert corner.contains([1, 2]) and corner.contains([2, 0]) and not corner.contains([2, 4])
    assert corner.diameter <= c.lipschitz() * 2
    np.testing.assert_allclose(derived_set(c, 1.0).vectors, [[0, 4]])
    with pytest.raises(ValueError):
        derived_set(c, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 8))
def test_mean_value_on_closed_curves(seed, m):
    rng = np.random.default_rng(seed)
    verts = rng.normal(size=(m, 3))
    verts = np.vstack([verts, verts[:1]])
    times = np.concatenate([[0], np.sort(rng.uniform(0.01, 0.99, m - 1)), [1]])
    if np.any(np.diff(times) <= 0):
        return
    curve = PolygonalCurve(verts, times)
    w = rng.normal(size=3)
    t, slopes = mean_value_point(curve, w)
    assert 0 <= t <= 1
    assert min(slopes) <= 0 <= max(slopes)
    assert all(isinstance(s, Fraction) for s in slopes)


def test_mean_value_needs_closed_curve():
    with pytest.raises(ValueError):
        mean_value_point(PolygonalCurve([[0, 0], [1, 0]]), [1, 0])


# ---------------------------------------------------------------- eta length


@pytest.mark.parametrize("eta", [1.0, 1.5, 2.0])
def test_flat_segment_length_is_exact(flat, eta):
    delta = np.array([0.3, -0.4, 0.2])
    length = eta_length(PolygonalCurve([np.zeros(3), delta]), eta, flat)
    expected = 0.5 + 0.2 ** (1 / eta)
    assert length.lower == pytest.approx(expected, rel=1e-14)
    assert length.width <= 1e-14


def test_flat_half_time_doubles_speed(flat):
    delta = np.array([0.3, -0.4, 0.2])
    curve = PolygonalCurve([np.zeros(3), delta, delta], times=[0, 0.5, 1])
    length = eta_length(curve, 1.5, flat)
    assert length.lower == pytest.approx(1.0 + 0.4 ** (1 / 1.5), rel=1e-14)
    assert length.width <= 1e-14


def test_heisenberg_horizontal_segment(heis):
    length = eta_length(PolygonalCurve([[0, 0, 0], [1, 0, 0]]), 2.0, heis)
    assert length.lower <= 1.0 <= length.upper and length.width <= 0.01


def test_off_axis_segment_bracket_is_ordered(heis):
    length = eta_length(PolygonalCurve([[0, 0.5, 0], [1, 0.7, 0.1]]), 1.7, heis)
    assert length.lower <= length.upper and length.width < 0.05


def test_curve_outside_box(heis):
    with pytest.raises(StructureError):
        eta_length(PolygonalCurve([[0, 0, 0], [9, 0, 0]]), 2.0, heis)
    with pytest.raises(ValueError):
        eta_length(PolygonalCurve([[0, 0, 0], [1, 0, 0]]), 2.5, heis)


# ---------------------------------------------------------------- balancing


def test_balanced_times_equalize_levels():
    a, b = [0.3, 0.1, 0.0], [0.01, 0.2, 0.05]
    level, d = balanced_times(a, b, 1.5)
    assert d.sum() == pytest.approx(1.0)
    levels = [x / t + (y / t) ** (1 / 1.5) for x, y, t in zip(a, b, d)]
    np.testing.assert_allclose(levels, level, rtol=1e-12)


def test_balanced_times_golden_ratio():
    level, d = balanced_times([1, 0], [0, 1], 2.0)
    assert level == pytest.approx((1 + 5**0.5) / 2, rel=1e-14)


def test_squeezed_lower_bound_flat_limit():
    assert squeezed_lower_bound(0.3, 0.04, 2.0, 0.0) == pytest.approx(0.3)
    assert squeezed_lower_bound(0.1, 0.04, 2.0, 0.0) == pytest.approx(0.2)
    assert squeezed_lower_bound(0.1, 0.04, 2.0, 1.0) < 0.2


# ---------------------------------------------------------------- eta distance


@pytest.mark.parametrize("eta", [1.25, 1.5, 1.75, 2.0])
def test_flat_vertical_distance(flat, eta):
    est = eta_distance(flat, [0, 0, 0], [0, 0, 0.1], eta)
    target = 0.1 ** (1 / eta)
    assert est.lower <= target * (1 + 1e-12) and est.upper >= target * (1 - 1e-12)
    assert est.upper == pytest.approx(target, rel=0.01)
    assert est.width <= 0.02 * target


def test_flat_horizontal_distance(flat):
    est = eta_distance(flat, [0.1, 0, 0], [0.4, 0.4, 0], 1.5)
    assert est.lower <= 0.5 + 1e-12 <= est.upper + 2e-12
    assert est.width <= 1e-9


def test_identical_points_give_zero(heis):
    est = eta_distance(heis, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], 1.5)
    assert est.lower == est.upper == 0.0


def test_heisenberg_bracket_and_determinism(heis):
    a = eta_distance(heis, [0, 0, 0], [0.1, 0.1, 0.05], 2.0, seed=3)
    b = eta_distance(heis, [0, 0, 0], [0.1, 0.1, 0.05], 2.0, seed=3)
    assert a.lower <= a.upper
    assert a.upper == b.upper and a.lower == b.lower
    # the straight segment is a candidate, so the estimate never exceeds its length
    straight = eta_length(PolygonalCurve([[0, 0, 0], [0.1, 0.1, 0.05]]), 2.0, heis)
    assert a.upper <= straight.upper
    # local squeezing lower bound is at least the Euclidean fraction
    assert a.lower >= 2 / 3 * np.linalg.norm([0.1, 0.1, 0.05]) - 1e-15
