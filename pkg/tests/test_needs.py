import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexneeds.needs import (
    EmpiricalCDF,
    cc_quantile,
    ecdf,
    normal_fit_error,
    robust_needs,
    variance_report,
)


def test_ecdf_step_values():
    F = ecdf([0.0, 0.0, 0.0])
    assert F(0.0) == 1.0
    assert F(-0.1) == 0.0
    F = ecdf([1.0, 2.0, 3.0, 4.0])
    assert F(2.5) == 0.5
    assert F(4.0) == 1.0
    assert F(0.0) == 0.0


def test_ecdf_rejects_empty():
    with pytest.raises(ValueError):
        ecdf([])


def test_ecdf_close_to_normal_cdf():
    rng = np.random.default_rng(8)
    samples = rng.standard_normal(1000)
    F = ecdf(samples)
    zs = np.linspace(-3, 3, 241)
    phi = 0.5 * (1.0 + np.vectorize(math.erf)(zs / math.sqrt(2.0)))
    assert np.max(np.abs(F(zs) - phi)) <= 0.06


def test_cc_quantile_examples():
    assert cc_quantile(ecdf([0.0, 1.0, 5.0]), 0.0, "down") == 5.0
    assert cc_quantile(ecdf([1.0, 2.0, 3.0, 4.0]), 0.5, "down") == 2.0
    assert cc_quantile(ecdf([3.0, 3.0, 3.0]), 0.37, "down") == 3.0
    assert cc_quantile(ecdf([-4.0, -1.0, 0.0]), 0.0, "up") == -4.0
    with pytest.raises(ValueError):
        cc_quantile(ecdf([1.0]), 1.5, "down")
    with pytest.raises(ValueError):
        cc_quantile(ecdf([1.0]), 0.5, "sideways")


@given(
    samples=st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=1, max_size=40),
    p=st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=200, deadline=None)
def test_inverse_matches_order_statistic(samples, p):
    F = EmpiricalCDF.from_samples(samples)
    got = F.inverse(p)
    srt = sorted(samples)
    # brute force: smallest sample whose ECDF weight reaches p
    expect = None
    n = len(srt)
    for k, z in enumerate(srt, start=1):
        if k / n >= p - 1e-15:
            expect = z
            break
    if expect is None:
        expect = srt[-1]
    assert got == expect


def test_robust_needs_identical_dispatches():
    down = np.tile(np.array([[1.0, 2.0]]), (1, 4, 1)).reshape(1, 4, 2)
    up = np.tile(np.array([[-0.5, 0.0]]), (1, 4, 1)).reshape(1, 4, 2)
    for cc in (0.0, 0.3, 0.9):
        needs = robust_needs(down, up, 1.0, cc, ("a",))
        assert np.array_equal(needs.power_down_kw, [[1.0, 2.0]])
        assert np.array_equal(needs.power_up_kw, [[-0.5, 0.0]])
        assert needs.energy_down_kwh[0] == 3.0
        assert needs.energy_up_kwh[0] == -0.5


def test_needs_monotone_in_risk_level():
    rng = np.random.default_rng(5)
    down = np.abs(rng.normal(size=(3, 40, 6)))
    up = -np.abs(rng.normal(size=(3, 40, 6)))
    prev = None
    for cc in (0.0, 0.1, 0.25, 0.5, 0.9):
        needs = robust_needs(down, up, 0.5, cc, ("a", "b", "c"))
        assert np.all(needs.power_down_kw >= 0.0)
        assert np.all(needs.power_up_kw <= 0.0)
        if prev is not None:
            assert np.all(needs.power_down_kw <= prev.power_down_kw + 1e-12)
            assert np.all(needs.power_up_kw >= prev.power_up_kw - 1e-12)
            assert np.all(np.abs(needs.energy_down_kwh) <= np.abs(prev.energy_down_kwh) + 1e-12)
        prev = needs


def test_single_zone_aggregation_collapses_to_totals():
    rng = np.random.default_rng(9)
    down = np.abs(rng.normal(size=(4, 25, 3)))
    up = -np.abs(rng.normal(size=(4, 25, 3)))
    zone_of = np.ones(4, dtype=int)
    zonal = robust_needs(down, up, 1.0, 0.2, ("a", "b", "c", "d"), zone_of=zone_of)
    assert zonal.entities == (1,)
    total = robust_needs(down.sum(axis=0, keepdims=True), up.sum(axis=0, keepdims=True),
                         1.0, 0.2, ("all",))
    assert np.allclose(zonal.power_down_kw, total.power_down_kw, atol=1e-12)
    assert np.allclose(zonal.energy_up_kwh, total.energy_up_kwh, atol=1e-12)


def test_zonal_sum_before_quantile():
    # two perfectly anti-correlated nodes: zone max is NOT the sum of node maxes
    down = np.zeros((2, 2, 1))
    down[0, 0, 0] = 4.0
    down[1, 1, 0] = 4.0
    up = np.zeros((2, 2, 1))
    nodal = robust_needs(down, up, 1.0, 0.0, (0, 1))
    zonal = robust_needs(down, up, 1.0, 0.0, (0, 1), zone_of=np.array([1, 1]))
    assert nodal.power_down_kw.sum() == 8.0
    assert zonal.power_down_kw[0, 0] == 4.0


def test_variance_report_structure():
    rng = np.random.default_rng(11)
    down = np.abs(rng.normal(size=(6, 50, 4)))
    up = -np.abs(rng.normal(size=(6, 50, 4)))
    zone_of = np.array([1, 1, 1, 2, 2, 2])
    rep = variance_report(down, up, 1.0, zone_of)
    assert rep.zonal_mean_down_kwh == rep.nodal_mean_down_kwh
    assert rep.zonal_mean_up_kwh == rep.nodal_mean_up_kwh
    assert rep.zonal_std_down_kwh <= rep.nodal_std_down_kwh
    assert rep.zonal_std_up_kwh <= rep.nodal_std_up_kwh
    assert 0.0 <= rep.std_reduction_down_pct <= 100.0


def test_variance_report_one_node_per_zone_no_reduction():
    rng = np.random.default_rng(12)
    down = np.abs(rng.normal(size=(3, 30, 2)))
    up = -np.abs(rng.normal(size=(3, 30, 2)))
    rep = variance_report(down, up, 1.0, np.array([1, 2, 3]))
    assert rep.std_reduction_down_pct == 0.0
    assert rep.std_reduction_up_pct == 0.0
    assert rep.zonal_std_down_kwh == rep.nodal_std_down_kwh


def test_normal_fit_diagnostic_close_on_gaussian_data():
    rng = np.random.default_rng(4)
    samples = rng.normal(50.0, 5.0, size=20000)
    emp, gauss, err = normal_fit_error(samples, 0.05, "down")
    assert err < 0.01
