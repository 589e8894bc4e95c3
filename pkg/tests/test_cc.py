import math

import numpy as np
import pytest

from ccgeo.flows import ExpChart, ballbox_exponent_fit
from ccgeo.metrics import cc_distance, heisenberg_lattice_distance


def test_identical_points(heis):
    est = cc_distance(heis, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert est.lower == est.upper == 0.0


def test_horizontal_segment(heis):
    est = cc_distance(heis, [0, 0, 0], [1, 0, 0])
    assert 1.0 <= est.lower <= est.upper <= 1.001 and est.converged


def test_lattice_oracle_bounds_the_true_distance():
    # the optimal loop for (0,0,s) is a circle of ambient length about sqrt(4 pi s)
    for s in (0.05, 0.1):
        assert heisenberg_lattice_distance([0, 0, s]) >= math.sqrt(4 * math.pi * s)
    with pytest.raises(ValueError):
        heisenberg_lattice_distance([0.01, 0, 0])


@pytest.mark.parametrize("s", [0.05, 0.1])
def test_vertical_against_lattice_oracle(heis, s):
    oracle = heisenberg_lattice_distance([0, 0, s])
    est = cc_distance(heis, [0, 0, 0], [0, 0, s])
    assert est.converged and est.endpoint_gap <= 1e-6
    assert abs(est.upper - oracle) <= 0.1 * oracle
    assert est.lower <= est.upper


def test_witness_reaches_target(engel):
    y = np.array([0.2, -0.1, 0.05, 0.02])
    est = cc_distance(engel, [0, 0, 0, 0], y)
    assert np.linalg.norm(est.witness.endpoint(engel) - y) <= 1e-6
    assert est.witness.length(engel) == pytest.approx(est.upper, rel=1e-9)


def test_deterministic(heis):
    a = cc_distance(heis, [0, 0, 0], [0.1, 0.05, 0.02], seed=5)
    b = cc_distance(heis, [0, 0, 0], [0.1, 0.05, 0.02], seed=5)
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("name,direction,expected,tol", [
    ("heisenberg1", 1, 1.0, 0.02),
    ("heisenberg1", 3, 0.5, 0.05),
])
def test_ballbox_slopes(name, direction, expected, tol):
    from ccgeo.structures import catalog

    s = catalog(name)
    chart = ExpChart(s, [0] * s.n)
    fit = ballbox_exponent_fit(chart, direction, lambda x, y, p: cc_distance(s, x, y, warm_start=p), np.geomspace(1e-3, 1e-1, 8))
    assert fit["slope"] == pytest.approx(expected, abs=tol) and not fit["dropped"]
