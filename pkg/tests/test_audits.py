import math

import numpy as np
import pytest

from ccgeo.metrics import (
    eta_continuity_audit,
    holder_sandwich_audit,
    squeeze_audit,
    symmetry_audit,
    triangle_audit,
)
from ccgeo.metrics.audits import continuity_constant, estimate, gauge, gauge_pair
from ccgeo.structures import catalog


@pytest.fixture(scope="module")
def flat():
    return catalog("flat")


def test_gauge_pair_hits_the_requested_gauge(heis):
    rng = np.random.default_rng(0)
    x = np.array([0.1, -0.2, 0.05])
    for share in (0.0, 0.3, 1.0):
        y = gauge_pair(heis, x, 0.05, share, 1.7, rng)
        # a pure V pair leaves a roundoff W part whose 1/eta power is about 1e-11
        assert gauge(heis, x, y, 1.7) == pytest.approx(0.05, abs=1e-9)


def test_flat_squeeze_constant_is_one(flat):
    rep = squeeze_audit(flat, "eta", 1.5, pairs=8, mode="axis")
    assert abs(rep["C"] - 1) <= 1e-6
    assert all(b["pairs_used"] == 2 for b in rep["bands"])


def test_euclidean_metric_is_flagged(heis):
    rep = squeeze_audit(heis, "euclidean", 2.0, pairs=16, mode="vertical")
    assert rep["growth"] >= 4
    cs = [b["fitted_C"] for b in rep["bands"]]
    assert cs == sorted(cs)


def test_unknown_metric(heis):
    with pytest.raises(ValueError):
        squeeze_audit(heis, "taxicab", 2.0)
    with pytest.raises(ValueError):
        estimate(heis, "taxicab", [0, 0, 0], [1, 0, 0])


def test_continuity_envelope_identity_and_flat(flat):
    assert continuity_constant([0, 0, 0], [0, 0, 0]) == 2.0
    rep = eta_continuity_audit(flat, [0, 0, 0], [0, 0, 0.05], 2.0, etas=(1.6, 2.0))
    row = {r["eta"]: r for r in rep["rows"]}
    assert row[2.0]["difference"] == 0 and row[2.0]["ok"]
    assert row[1.6]["difference"] == pytest.approx(abs(0.05 ** (1 / 1.6) - 0.05**0.5), rel=1e-9)
    # |w|^(1/1.6) falls below d_2 by more than the two-sided envelope allows;
    # the proven side (d_1.6 <= C^(0.4/1.6) d_2) still holds
    assert not rep["ok"] and rep["one_sided_ok"]


def test_continuity_flat_unit_scale(flat):
    rep = eta_continuity_audit(flat, [0, 0, 0], [0, 0, 0.9], 2.0, etas=(1.6, 1.8, 2.0))
    assert rep["ok"] and rep["one_sided_ok"]


def test_small_audits_pass(heis):
    assert holder_sandwich_audit(heis, pairs=8)["ok"]
    assert triangle_audit(heis, triples=4)["ok"]
    assert symmetry_audit(heis, pairs=3)["ok"]


def test_cc_squeeze_is_band_stable(heis):
    rep = squeeze_audit(heis, "cc", 2.0, pairs=16)
    assert math.isfinite(rep["C"]) and rep["band_ratio"] <= 3
