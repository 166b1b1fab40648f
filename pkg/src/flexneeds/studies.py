"""Case studies: risk-level sweep with congestion projection, Pareto knee
selection and power/energy bound-tightening with marginal-value reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispatch import BatchResult, FlexBounds, Penalties, batch_solve
from .needs import RobustNeeds, robust_needs
from .network import Network
from .powerflow import CongestionStats, congestion_scan

POWER_TIGHTEN_CAP = 0.6
ENERGY_TIGHTEN_CAP = 0.8


@dataclass(frozen=True)
class CCSweepRow:
    cc_level: float
    under_voltage_pct: float
    over_voltage_pct: float
    thermal_pct: float
    congested_hours_pct: float
    unresolved_pct: float
    needs_energy_kwh: float


def clip_to_needs(batch: BatchResult, needs: RobustNeeds) -> np.ndarray:
    """Per-scenario activation capped by the procured envelope.

    Procurement at a risk level buys the quantile amounts; in operation each
    scenario activates its own optimal dispatch truncated to what was
    procured. Returns (nodes, J, T) applied flexibility in kW.
    """
    down = np.minimum(batch.stack_down_kw(), needs.power_down_kw[:, None, :])
    up = np.maximum(batch.stack_up_kw(), needs.power_up_kw[:, None, :])
    return down + up


def total_needs_energy_kwh(needs: RobustNeeds) -> float:
    return float(needs.energy_down_kwh.sum() + np.abs(needs.energy_up_kwh).sum())


def cc_sweep(net: Network, scenarios, tan_phi: np.ndarray, batch: BatchResult,
             cc_levels, dt_hours: float) -> tuple[list[CCSweepRow], CongestionStats]:
    """Project risk levels onto residual congestion probabilities.

    For every level: extract robust needs from the unbounded batch, apply
    the procurement-capped activation in every scenario and scan the full AC
    power flow for remaining violations. Also returns the no-flexibility
    baseline scan.
    """
    node_ids = tuple(n.id for n in net.nodes)
    baseline = congestion_scan(net, scenarios, tan_phi)
    down = batch.stack_down_kw()
    up = batch.stack_up_kw()
    rows = []
    for cc in sorted(float(c) for c in cc_levels):
        needs = robust_needs(down, up, dt_hours, cc, node_ids)
        applied = clip_to_needs(batch, needs)
        stats = congestion_scan(net, scenarios, tan_phi, dispatch_kw=applied)
        rows.append(CCSweepRow(
            cc_level=cc,
            under_voltage_pct=100.0 * stats.under_voltage,
            over_voltage_pct=100.0 * stats.over_voltage,
            thermal_pct=100.0 * stats.thermal,
            congested_hours_pct=100.0 * stats.congested_hours,
            unresolved_pct=100.0 * stats.unresolved,
            needs_energy_kwh=total_needs_energy_kwh(needs),
        ))
    return rows, baseline


def pareto_knee(rows: list[CCSweepRow]) -> float:
    """Risk level of the non-dominated row closest to the utopia point.

    Both objectives (procured needs energy, congested-hours share) are
    min-max normalized; dominated rows are dropped; ties resolve to the
    smaller risk level.
    """
    if len(rows) < 3:
        raise ValueError("need at least three sweep rows for a knee")
    pts = np.array([[r.needs_energy_kwh, r.congested_hours_pct] for r in rows])
    span = pts.max(axis=0) - pts.min(axis=0)
    if np.all(span == 0):
        return min(r.cc_level for r in rows)
    span[span == 0] = 1.0
    norm = (pts - pts.min(axis=0)) / span
    keep = []
    for i in range(len(rows)):
        dominated = any(
            np.all(pts[j] <= pts[i]) and np.any(pts[j] < pts[i]) for j in range(len(rows)) if j != i
        )
        if not dominated:
            keep.append(i)
    dist = np.hypot(norm[:, 0], norm[:, 1])
    best = min(keep, key=lambda i: (dist[i], rows[i].cc_level))
    return rows[best].cc_level


@dataclass(frozen=True)
class TighteningCell:
    alpha_power: float
    alpha_energy: float
    objective_increase_pct: float
    feasible_pct: float
    unreliable_pct: float
    ramp_up_energy_kwh: float
    ramp_down_energy_kwh: float
    objectives: tuple  # per-scenario objective, nan where infeasible


def tightening_reference(batch: BatchResult, dt_hours: float, node_ids) -> RobustNeeds:
    """Fully robust (cc = 0) needs of the unbounded batch: the anchor that
    the tightening grid scales down."""
    return robust_needs(batch.stack_down_kw(), batch.stack_up_kw(), dt_hours, 0.0, node_ids)


def tightened_bounds(ref: RobustNeeds, alpha_power: float, alpha_energy: float,
                     n_steps: int) -> FlexBounds:
    """Bounds at (1 - alpha) of the per-node unbounded-reference maxima."""
    p_down = ref.power_down_kw.max(axis=1) * (1.0 - alpha_power)
    p_up = ref.power_up_kw.min(axis=1) * (1.0 - alpha_power)
    return FlexBounds(
        ramp_down_max_kw=np.repeat(p_down[:, None], n_steps, axis=1),
        ramp_up_min_kw=np.repeat(p_up[:, None], n_steps, axis=1),
        energy_down_max_kwh=ref.energy_down_kwh * (1.0 - alpha_energy),
        energy_up_min_kwh=ref.energy_up_kwh * (1.0 - alpha_energy),
    )


def tightening_sweep(net: Network, scenarios, tan_phi: np.ndarray,
                     penalties: Penalties, alpha_power_grid, alpha_energy_grid,
                     workers: int = 1) -> list[TighteningCell]:
    """Marginal value of power vs energy flexibility bounds.

    The unconstrained solve anchors the grid; each cell re-solves every
    scenario under bounds scaled to (1 - alpha) of the anchor. Iteration-
    capped solves count as infeasible and are reported as unreliable.
    """
    for a in alpha_power_grid:
        if not 0.0 <= a <= POWER_TIGHTEN_CAP + 1e-12:
            raise ValueError(f"power tightening {a} outside [0, {POWER_TIGHTEN_CAP}]")
    for a in alpha_energy_grid:
        if not 0.0 <= a <= ENERGY_TIGHTEN_CAP + 1e-12:
            raise ValueError(f"energy tightening {a} outside [0, {ENERGY_TIGHTEN_CAP}]")
    n, _, T = scenarios.net_kw.shape
    dt_hours = float(scenarios.meta.get("dt_hours", 1.0))
    node_ids = tuple(nd.id for nd in net.nodes)
    unbounded = batch_solve(net, scenarios, tan_phi, FlexBounds.unbounded(n, T),
                            penalties, validate=False, workers=workers)
    ref = tightening_reference(unbounded, dt_hours, node_ids)
    base_objs = np.array([d.objective for d in unbounded.dispatches])

    cells = []
    for ap in sorted(set(float(a) for a in alpha_power_grid)):
        for ae in sorted(set(float(a) for a in alpha_energy_grid)):
            bounds = tightened_bounds(ref, ap, ae, T)
            batch = batch_solve(net, scenarios, tan_phi, bounds, penalties,
                                validate=False, workers=workers)
            objs = np.array([
                d.objective if d.feasible else math.nan for d in batch.dispatches
            ])
            unreliable = sum(1 for d in batch.dispatches if d.status == "iteration_limit")
            feas = np.isfinite(objs)
            # paired against the same scenarios' unconstrained cost, so the
            # increase reflects rerouting premium rather than which expensive
            # scenarios dropped out as infeasible
            if feas.any() and base_objs[feas].mean() > 0:
                increase = 100.0 * (float(objs[feas].mean()) / float(base_objs[feas].mean()) - 1.0)
            else:
                increase = math.nan
            e_up = float(np.mean([
                abs(d.energy_up_kwh.sum()) for d in batch.dispatches if d.feasible
            ])) if feas.any() else math.nan
            e_down = float(np.mean([
                d.energy_down_kwh.sum() for d in batch.dispatches if d.feasible
            ])) if feas.any() else math.nan
            cells.append(TighteningCell(
                alpha_power=ap, alpha_energy=ae,
                objective_increase_pct=increase,
                feasible_pct=100.0 * batch.feasible_fraction,
                unreliable_pct=100.0 * unreliable / len(batch.dispatches),
                ramp_up_energy_kwh=e_up, ramp_down_energy_kwh=e_down,
                objectives=tuple(objs.tolist()),
            ))
    return cells


__all__ = [
    "CCSweepRow",
    "ENERGY_TIGHTEN_CAP",
    "POWER_TIGHTEN_CAP",
    "TighteningCell",
    "cc_sweep",
    "clip_to_needs",
    "pareto_knee",
    "tightened_bounds",
    "tightening_reference",
    "tightening_sweep",
]
