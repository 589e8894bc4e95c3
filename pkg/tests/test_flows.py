import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccgeo.flows import (
    ExpChart,
    FlowError,
    GaugeSpec,
    flow,
    flow_point,
    gauge_membership,
    second_order_slope,
)


def test_zero_field_is_stationary(heis):
    x = np.array([0.3, -0.2, 0.5])
    assert np.array_equal(flow_point(heis, x, [0, 0, 0], 2.0), x)


def test_heisenberg_closed_forms(heis):
    np.testing.assert_allclose(flow_point(heis, [0, 0, 0], [1, 0], 0.7), [0.7, 0, 0], atol=1e-14)
    t = [0.3, -0.2, 0.1]
    np.testing.assert_allclose(flow_point(heis, [0, 0, 0], t), t, atol=1e-14)
    # off the origin the t-coordinate picks up (x dy - y dx)/2 along the line
    x0 = np.array([0.5, 0.25, 0.0])
    expected = [0.8, 0.05, (0.5 * -0.2 - 0.25 * 0.3) / 2 + 0.1]
    np.testing.assert_allclose(flow_point(heis, x0, t), expected, atol=1e-13)


def test_error_estimate_reported(engel):
    res = flow(engel, [0.1, 0.2, 0.0, 0.0], [0.5, -0.4, 0.3, 0.2], 1.0, step=0.1)
    assert res.error_estimate < 1e-10 and res.steps == 20


def test_leaving_the_box_raises(heis):
    with pytest.raises(FlowError):
        flow_point(heis, [3.9, 0, 0], [1, 0], 1.0)


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4),
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.floats(0.05, 0.6),
    st.floats(0.05, 0.6),
)
def test_flow_semigroup(engel, x, c, a, b):
    step = 1e-2
    direct = flow(engel, x, c, a + b, step)
    mid = flow(engel, x, c, a, step)
    two = flow(engel, mid.point, c, b, step)
    tol = 10 * max(direct.error_estimate + mid.error_estimate + two.error_estimate, 1e-13)
    assert np.max(np.abs(direct.point - two.point)) <= tol


def test_exp_chart_basics(heis):
    chart = ExpChart(heis, [0, 0, 0])
    np.testing.assert_array_equal(chart([0, 0, 0]), [0, 0, 0])
    np.testing.assert_allclose(chart([0.1, 0.2, 0.3]), [0.1, 0.2, 0.3], atol=1e-14)
    with pytest.raises(FlowError):
        chart([2.0, 0, 0])
    with pytest.raises(ValueError):
        ExpChart(heis, [0, 0, 0], step=0.1, radius=1.0)


def test_exp_second_order_slope(engel):
    # Heisenberg charts are affine in these coordinates, Engel off the origin is not
    chart = ExpChart(engel, [0.5, -0.3, 0.2, 0.1])
    fit = second_order_slope(chart, [1, 1, 1, 1], np.geomspace(1e-3, 1e-1, 8))
    assert fit["slope"] == pytest.approx(2.0, abs=0.1)


def test_exp_inverse_and_openness(engel):
    chart = ExpChart(engel, [0.5, -0.3, 0.2, 0.1])
    t = np.array([0.2, 0.1, -0.1, 0.05])
    out = chart.inverse(chart(t))
    assert out["converged"] and np.allclose(out["t"], t, atol=1e-10)
    rep = chart.openness_radius(0.5, directions=8)
    assert 0 < rep["delta"] <= 0.5


def test_gauge_examples():
    q = GaugeSpec("box", 0.1, (1, 1, 2))
    assert q.contains([0.1, 0.1, 0.01])
    assert not q.contains([0, 0, 0.02])
    assert gauge_membership(GaugeSpec("box", "0.1", (1, 1, 2)), ["0.1", "0.1", "0.01"])
    assert gauge_membership(GaugeSpec("cone", 2, (1, 1, 2)), [0.1, 0, 0.04])
    assert not gauge_membership(GaugeSpec("cone", 2, (1, 1, 2)), [0.1, 0, 0.06])
    with pytest.raises(ValueError):
        GaugeSpec("ball", 1, (1,))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0.01, 2),
    st.floats(1.0, 3.0),
)
def test_gauge_monotonicity(t, p, factor):
    degrees = (1, 1, 2)
    for kind in ("box", "cone"):
        if gauge_membership(GaugeSpec(kind, p, degrees), t):
            assert gauge_membership(GaugeSpec(kind, p * factor, degrees), t)
