import numpy as np
import pytest

from flexneeds.cli import node_tan_phi
from flexneeds.dispatch import FlexBounds, Penalties, batch_solve
from flexneeds.needs import robust_needs
from flexneeds.scenarios import generate_feeder_scenarios
from flexneeds.studies import (
    CCSweepRow,
    cc_sweep,
    clip_to_needs,
    pareto_knee,
    tightened_bounds,
    tightening_reference,
    tightening_sweep,
)


def row(cc, needs, hours):
    return CCSweepRow(cc_level=cc, under_voltage_pct=0, over_voltage_pct=0,
                      thermal_pct=0, congested_hours_pct=hours, unresolved_pct=0,
                      needs_energy_kwh=needs)


def test_knee_of_l_shape():
    rows = [row(0.0, 100.0, 0.0), row(0.01, 90.0, 0.2), row(0.05, 30.0, 1.0),
            row(0.2, 25.0, 20.0), row(0.4, 22.0, 45.0)]
    assert pareto_knee(rows) == 0.05


def test_knee_of_linear_tradeoff():
    rows = [row(0.0, 100.0, 0.0), row(0.1, 50.0, 25.0), row(0.2, 0.0, 50.0)]
    assert pareto_knee(rows) == 0.1


def test_dominated_row_ignored():
    rows = [row(0.0, 100.0, 0.0), row(0.01, 90.0, 0.2), row(0.05, 30.0, 1.0),
            row(0.2, 25.0, 20.0), row(0.4, 22.0, 45.0)]
    with_dominated = rows + [row(0.1, 95.0, 30.0)]
    assert pareto_knee(with_dominated) == pareto_knee(rows)


def test_degenerate_front_returns_smallest():
    rows = [row(0.3, 10.0, 5.0), row(0.1, 10.0, 5.0), row(0.2, 10.0, 5.0)]
    assert pareto_knee(rows) == 0.1


def test_knee_needs_three_rows():
    with pytest.raises(ValueError):
        pareto_knee([row(0.0, 1.0, 0.0), row(0.1, 0.5, 1.0)])


@pytest.fixture(scope="module")
def small_batch(feeder, feeder_profiles):
    scen = generate_feeder_scenarios(feeder, feeder_profiles, 24, seed=99)
    tan_phi = node_tan_phi(feeder, feeder_profiles)
    batch = batch_solve(feeder, scen, tan_phi, FlexBounds.unbounded(30, 24),
                        Penalties(), validate=True)
    return scen, tan_phi, batch


def test_clip_to_needs_identity_at_full_robustness(feeder, small_batch):
    scen, tan_phi, batch = small_batch
    node_ids = tuple(n.id for n in feeder.nodes)
    needs = robust_needs(batch.stack_down_kw(), batch.stack_up_kw(), 1.0, 0.0, node_ids)
    applied = clip_to_needs(batch, needs)
    full = batch.stack_down_kw() + batch.stack_up_kw()
    assert np.allclose(applied, full, atol=1e-12)


def test_cc_sweep_trends_on_feeder(feeder, small_batch):
    scen, tan_phi, batch = small_batch
    rows, baseline = cc_sweep(feeder, scen, tan_phi, batch, [0.0, 0.1, 0.4], 1.0)
    assert baseline.congested_hours > 0
    assert rows[0].cc_level == 0.0
    assert rows[0].congested_hours_pct == 0.0
    assert rows[0].under_voltage_pct == 0.0
    hours = [r.congested_hours_pct for r in rows]
    assert hours == sorted(hours)
    needs = [r.needs_energy_kwh for r in rows]
    assert needs == sorted(needs, reverse=True)
    for r in rows:
        assert r.congested_hours_pct <= baseline.congested_hours * 100 + 1e-9


def test_tightening_reference_and_bounds(small_batch):
    scen, tan_phi, batch = small_batch
    ref = tightening_reference(batch, 1.0, tuple(range(30)))
    bounds = tightened_bounds(ref, 0.5, 0.25, 24)
    assert np.all(bounds.ramp_down_max_kw[:, 0] == 0.5 * ref.power_down_kw.max(axis=1))
    assert np.all(bounds.energy_down_max_kwh == 0.75 * ref.energy_down_kwh)
    assert np.all(bounds.ramp_up_min_kw <= 0.0)


def test_tightening_grid_properties(feeder, feeder_profiles):
    scen = generate_feeder_scenarios(feeder, feeder_profiles, 10, seed=17)
    tan_phi = node_tan_phi(feeder, feeder_profiles)
    cells = tightening_sweep(feeder, scen, tan_phi, Penalties(), [0.0, 0.3], [0.0, 0.4])
    by_key = {(c.alpha_power, c.alpha_energy): c for c in cells}
    origin = by_key[(0.0, 0.0)]
    assert origin.objective_increase_pct == pytest.approx(0.0, abs=1e-6)
    assert origin.feasible_pct == 100.0
    # feasibility nonincreasing along each axis
    assert by_key[(0.3, 0.0)].feasible_pct <= origin.feasible_pct
    assert by_key[(0.0, 0.4)].feasible_pct <= origin.feasible_pct
    assert by_key[(0.3, 0.4)].feasible_pct <= min(by_key[(0.3, 0.0)].feasible_pct,
                                                  by_key[(0.0, 0.4)].feasible_pct)
    # per-scenario objective monotone on commonly feasible scenarios
    for tight in ((0.3, 0.0), (0.0, 0.4), (0.3, 0.4)):
        a = np.array(origin.objectives)
        b = np.array(by_key[tight].objectives)
        both = np.isfinite(a) & np.isfinite(b)
        assert np.all(b[both] >= a[both] - 1e-6)


def test_tightening_grid_caps():
    with pytest.raises(ValueError):
        tightening_sweep(None, None, None, Penalties(), [0.7], [0.0])
    with pytest.raises(ValueError):
        tightening_sweep(None, None, None, Penalties(), [0.0], [0.9])
