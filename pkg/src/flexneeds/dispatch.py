"""Per-scenario flexibility dispatch optimization.

Minimizes penalized ramp-down/ramp-up flexibility energy subject to voltage
bands, thermal limits, generator limits and per-node power/energy flexibility
bounds. Network physics use the linearized branch-flow model for radial
feeders, which makes every constraint affine in the nodal flexibility:

* active branch flow   p_b = p0_b - sum_{k below b} dP_k
* squared voltage      v_i = vslack^2 - sum_{b on path} 2 (r_b p_b + x_b q_b)

Reactive flows carry no flexibility, so the octagonal outer approximation of
the apparent-power circle reduces to an interval on each active flow. The
resulting LP is solved with the in-repo dense simplex; time steps decouple
unless energy bounds bind, in which case violated rows are generated lazily
into one coupled program. AC feasibility of the dispatch is checked with the
full Newton-Raphson power flow and, when needed, the LP is re-solved under
tightened effective limits.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import simplex
from .network import Network, downstream_masks, shared_path_impedance
from .powerflow import solve_pf

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_ITERATION_LIMIT = "iteration_limit"

#: default tightening step for AC validation rounds (pu voltage / fraction)
DEFAULT_MARGIN_STEP = 0.01
AC_ROUNDS = 5
# same violation tolerance the congestion scan uses
_VIOL_EPS = 1e-9
_FEAS_TOL = 1e-7


@dataclass(frozen=True)
class FlexBounds:
    """Per-node flexibility ranges (kW / kWh).

    Ramp-down (load-curtailment direction) is nonnegative, ramp-up is
    nonpositive; energy bounds couple the day via the step length.
    """

    ramp_down_max_kw: np.ndarray
    ramp_up_min_kw: np.ndarray
    energy_down_max_kwh: np.ndarray
    energy_up_min_kwh: np.ndarray

    def __post_init__(self):
        if np.any(self.ramp_down_max_kw < 0) or np.any(self.energy_down_max_kwh < 0):
            raise ValueError("ramp-down bounds must be nonnegative")
        if np.any(self.ramp_up_min_kw > 0) or np.any(self.energy_up_min_kwh > 0):
            raise ValueError("ramp-up bounds must be nonpositive")

    @classmethod
    def unbounded(cls, n_nodes: int, n_steps: int) -> "FlexBounds":
        return cls(
            ramp_down_max_kw=np.full((n_nodes, n_steps), np.inf),
            ramp_up_min_kw=np.full((n_nodes, n_steps), -np.inf),
            energy_down_max_kwh=np.full(n_nodes, np.inf),
            energy_up_min_kwh=np.full(n_nodes, -np.inf),
        )


@dataclass(frozen=True)
class Penalties:
    """Flat prices (currency/kWh) for using either flexibility direction."""

    ramp_down: float = 1.0
    ramp_up: float = 1.0

    def __post_init__(self):
        if self.ramp_down <= 0 or self.ramp_up <= 0:
            raise ValueError("penalties must be positive so directions never overlap")


@dataclass(frozen=True)
class FlexDispatch:
    """Optimal flexibility activation for one scenario.

    ``ramp_down_kw`` >= 0 and ``ramp_up_kw`` <= 0 per (node, t); energies are
    their dt-weighted totals. ``ac_clean`` reports the power-flow check.
    """

    ramp_down_kw: np.ndarray
    ramp_up_kw: np.ndarray
    energy_down_kwh: np.ndarray
    energy_up_kwh: np.ndarray
    objective: float
    status: str
    lp_gap: float = 0.0
    ac_clean: bool = False
    validation_rounds: int = 0
    residual_violations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_OPTIMAL

    @property
    def total_kw(self) -> np.ndarray:
        return self.ramp_down_kw + self.ramp_up_kw


def _infeasible_dispatch(n: int, T: int, status: str) -> FlexDispatch:
    z = np.zeros((n, T))
    return FlexDispatch(ramp_down_kw=z, ramp_up_kw=z.copy(),
                        energy_down_kwh=np.zeros(n), energy_up_kwh=np.zeros(n),
                        objective=np.nan, status=status)


@dataclass
class DispatchProblem:
    """One scenario's dispatch LP plus the affine network structure."""

    net: Network
    p_net_kw: np.ndarray  # (n, T) nodal net demand, kW (load - generation)
    q_kvar: np.ndarray    # (n, T) nodal reactive demand, kVAr
    bounds: FlexBounds
    penalties: Penalties
    dt_hours: float
    v_margin_pu: float = 0.0
    s_margin: float = 0.0

    masks: np.ndarray = field(init=False, repr=False)
    r_shared: np.ndarray = field(init=False, repr=False)
    p0_flow_pu: np.ndarray = field(init=False, repr=False)
    v2_base: np.ndarray = field(init=False, repr=False)
    flow_lo_pu: np.ndarray = field(init=False, repr=False)
    flow_up_pu: np.ndarray = field(init=False, repr=False)
    vmin2: np.ndarray = field(init=False, repr=False)
    vmax2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        net = self.net
        n, T = self.p_net_kw.shape
        if n != net.n_nodes or self.q_kvar.shape != (n, T):
            raise ValueError("scenario arrays must be (n_nodes, T)")
        if self.bounds.ramp_down_max_kw.shape != (n, T):
            raise ValueError("flexibility bounds must be (n_nodes, T)")
        base = net.base_s_kva
        self.masks = downstream_masks(net).astype(float)
        self.r_shared, _ = shared_path_impedance(net)
        p_pu = self.p_net_kw / base
        q_pu = self.q_kvar / base
        self.p0_flow_pu = self.masks @ p_pu
        q_flow = self.masks @ q_pu
        r = net.branch_r_pu()[:, None]
        x = net.branch_x_pu()[:, None]
        drop = self.masks.T @ (2.0 * (r * self.p0_flow_pu + x * q_flow))
        self.v2_base = net.slack_v_pu**2 - drop
        self.flow_lo_pu, self.flow_up_pu = _octagon_interval(
            q_flow, net.branch_smax_pu() * (1.0 - self.s_margin)
        )
        self.vmin2 = (net.vmin_pu() + self.v_margin_pu) ** 2
        self.vmax2 = (net.vmax_pu() - self.v_margin_pu) ** 2

    @property
    def n_steps(self) -> int:
        return self.p_net_kw.shape[1]

    @property
    def n_flex_vars(self) -> int:
        return 2 * self.net.n_nodes * self.n_steps

    @property
    def n_network_vars(self) -> int:
        # one squared-voltage state per node and one active flow per branch
        return (self.net.n_nodes + len(self.net.branches)) * self.n_steps

    @property
    def variable_count(self) -> int:
        return self.n_flex_vars + self.n_network_vars

    def voltages_squared(self, delta_pu: np.ndarray) -> np.ndarray:
        return self.v2_base + 2.0 * self.r_shared @ delta_pu

    def flows_pu(self, delta_pu: np.ndarray) -> np.ndarray:
        return self.p0_flow_pu - self.masks @ delta_pu


def _octagon_interval(q_flow: np.ndarray, smax: np.ndarray):
    """Active-flow interval from the eight tangent half-planes of |s|<=smax.

    With reactive flow fixed, each half-plane cos(a) p + sin(a) q <= smax
    bounds p directly; infeasible reactive loading yields an empty interval.
    """
    lo = np.full_like(q_flow, -np.inf)
    up = np.full_like(q_flow, np.inf)
    s = smax[:, None]
    for m in range(8):
        ang = m * np.pi / 4.0
        c, d = np.cos(ang), np.sin(ang)
        if abs(c) < 1e-12:
            bad = d * q_flow > s
            lo[bad], up[bad] = np.inf, -np.inf
        elif c > 0:
            up = np.minimum(up, (s - d * q_flow) / c)
        else:
            lo = np.maximum(lo, (s - d * q_flow) / c)
    return lo, up


def build_dispatch_problem(net: Network, p_net_kw, q_kvar, bounds: FlexBounds,
                           penalties: Penalties, dt_hours: float,
                           v_margin_pu: float = 0.0, s_margin: float = 0.0) -> DispatchProblem:
    return DispatchProblem(net=net, p_net_kw=np.asarray(p_net_kw, dtype=float),
                           q_kvar=np.asarray(q_kvar, dtype=float), bounds=bounds,
                           penalties=penalties, dt_hours=dt_hours,
                           v_margin_pu=v_margin_pu, s_margin=s_margin)


class _Columns:
    """Active LP columns: (node, t) pairs that may carry flexibility."""

    def __init__(self, prob: DispatchProblem, nodes: np.ndarray, ts: np.ndarray):
        self.nodes = nodes
        self.ts = ts
        self.pairs = [(i, t) for t in ts for i in nodes]
        self.index = {pair: k for k, pair in enumerate(self.pairs)}
        self.n_pairs = len(self.pairs)

    @property
    def n_cols(self) -> int:
        return 2 * self.n_pairs  # down block then up block


def _active_sets(prob: DispatchProblem):
    """Presolve: nodes that may act and time steps that need action.

    A time step whose base state violates nothing is satisfied by zero
    flexibility, and zero is optimal there; nodes capped to zero in both
    directions can never act. The slack node has no network effect.
    """
    net = prob.net
    base = net.base_s_kva
    cap_d = prob.bounds.ramp_down_max_kw / base
    cap_u = -prob.bounds.ramp_up_min_kw / base
    can_act = (cap_d.max(axis=1) > 0) | (cap_u.max(axis=1) > 0)
    can_act[net.slack_index] = False
    v2 = prob.v2_base
    viol_t = (
        (v2 < prob.vmin2[:, None] - _VIOL_EPS).any(axis=0)
        | (v2 > prob.vmax2[:, None] + _VIOL_EPS).any(axis=0)
        | (prob.p0_flow_pu > prob.flow_up_pu + _VIOL_EPS).any(axis=0)
        | (prob.p0_flow_pu < prob.flow_lo_pu - _VIOL_EPS).any(axis=0)
    )
    nodes = np.nonzero(can_act)[0]
    ts = np.nonzero(viol_t)[0]
    return nodes, ts


def solve_dispatch(prob: DispatchProblem, max_iter: int = 20000) -> FlexDispatch:
    """Solve the dispatch LP to optimality (or report why not).

    Time steps are solved independently first; if the energy couplings are
    satisfied the concatenation is already optimal. Otherwise the coupled
    program is solved with lazy row generation over the full constraint set.
    """
    net = prob.net
    n, T = prob.p_net_kw.shape
    if np.any(prob.flow_lo_pu > prob.flow_up_pu):
        # reactive loading alone exceeds a thermal limit; no active-power
        # flexibility can restore feasibility
        return _infeasible_dispatch(n, T, STATUS_INFEASIBLE)
    nodes, ts = _active_sets(prob)
    if len(ts) == 0:
        return _finalize(prob, np.zeros((n, T)), np.zeros((n, T)), 0.0)
    if len(nodes) == 0:
        return _infeasible_dispatch(n, T, STATUS_INFEASIBLE)

    cols = _Columns(prob, nodes, ts)
    d_pu = np.zeros((n, T))
    u_pu = np.zeros((n, T))
    gap = 0.0
    for t in ts:
        res = _solve_single_t(prob, nodes, int(t), max_iter)
        if res.status != simplex.OPTIMAL:
            if res.status == simplex.ITERATION_LIMIT:
                return _infeasible_dispatch(n, T, STATUS_ITERATION_LIMIT)
            return _infeasible_dispatch(n, T, STATUS_INFEASIBLE)
        nd = len(nodes)
        d_pu[nodes, t] = res.x[:nd]
        u_pu[nodes, t] = res.x[nd:]
        gap = max(gap, res.gap)

    if not _energy_ok(prob, d_pu, u_pu):
        status, d_pu, u_pu, gap = _solve_coupled(prob, cols, max_iter)
        if status != simplex.OPTIMAL:
            if status == simplex.ITERATION_LIMIT:
                return _infeasible_dispatch(n, T, STATUS_ITERATION_LIMIT)
            return _infeasible_dispatch(n, T, STATUS_INFEASIBLE)

    delta = d_pu - u_pu
    assert _all_rows_ok(prob, delta), "solver returned an infeasible dispatch"
    disp = _finalize(prob, d_pu, u_pu, gap)
    return disp


def _finalize(prob: DispatchProblem, d_pu, u_pu, gap) -> FlexDispatch:
    base = prob.net.base_s_kva
    down_kw = d_pu * base
    up_kw = -u_pu * base
    e_down = down_kw.sum(axis=1) * prob.dt_hours
    e_up = up_kw.sum(axis=1) * prob.dt_hours
    objective = float(
        prob.penalties.ramp_down * e_down.sum() - prob.penalties.ramp_up * e_up.sum()
    )
    return FlexDispatch(ramp_down_kw=down_kw, ramp_up_kw=up_kw,
                        energy_down_kwh=e_down, energy_up_kwh=e_up,
                        objective=objective, status=STATUS_OPTIMAL, lp_gap=gap)


def _cost_vector(prob: DispatchProblem, n_pairs: int) -> np.ndarray:
    base = prob.net.base_s_kva
    c = np.empty(2 * n_pairs)
    c[:n_pairs] = prob.penalties.ramp_down * prob.dt_hours * base
    c[n_pairs:] = prob.penalties.ramp_up * prob.dt_hours * base
    return c


def _solve_single_t(prob: DispatchProblem, nodes: np.ndarray, t: int, max_iter: int):
    """LP for one decoupled time step over the active nodes."""
    net = prob.net
    nd = len(nodes)
    base = net.base_s_kva
    sens_v = 2.0 * prob.r_shared[:, nodes]       # (n, nd) voltage sensitivity
    sens_f = prob.masks[:, nodes]                # (nb, nd) flow sensitivity
    non_slack = np.array([i for i in range(net.n_nodes) if i != net.slack_index])

    rows = []
    rhs = []
    v0 = prob.v2_base[non_slack, t]
    # voltage lower: -sens (d - u) <= v0 - vmin2
    block = np.hstack([-sens_v[non_slack], sens_v[non_slack]])
    rows.append(block)
    rhs.append(v0 - prob.vmin2[non_slack])
    rows.append(-block)
    rhs.append(prob.vmax2[non_slack] - v0)
    # flow upper: p0 - sens (d - u) <= up ; lower symmetric
    fblock = np.hstack([-sens_f, sens_f])
    rows.append(fblock)
    rhs.append(prob.flow_up_pu[:, t] - prob.p0_flow_pu[:, t])
    rows.append(-fblock)
    rhs.append(prob.p0_flow_pu[:, t] - prob.flow_lo_pu[:, t])
    # finite power caps
    cap_d = prob.bounds.ramp_down_max_kw[nodes, t] / base
    cap_u = -prob.bounds.ramp_up_min_kw[nodes, t] / base
    for k in range(nd):
        if np.isfinite(cap_d[k]):
            row = np.zeros(2 * nd)
            row[k] = 1.0
            rows.append(row[None, :])
            rhs.append(np.array([cap_d[k]]))
        if np.isfinite(cap_u[k]):
            row = np.zeros(2 * nd)
            row[nd + k] = 1.0
            rows.append(row[None, :])
            rhs.append(np.array([cap_u[k]]))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    c = _cost_vector(prob, nd)
    return simplex.solve_lp(c, A, b, max_iter=max_iter)


def _energy_ok(prob: DispatchProblem, d_pu, u_pu) -> bool:
    base = prob.net.base_s_kva
    e_down = d_pu.sum(axis=1) * prob.dt_hours * base
    e_up = u_pu.sum(axis=1) * prob.dt_hours * base
    cap_d = prob.bounds.energy_down_max_kwh
    cap_u = -prob.bounds.energy_up_min_kwh
    tol = _FEAS_TOL * (1.0 + np.abs(cap_d[np.isfinite(cap_d)]).max(initial=1.0))
    return bool(np.all(e_down <= cap_d + tol) and np.all(e_up <= cap_u + tol))


def _all_rows_ok(prob: DispatchProblem, delta_pu: np.ndarray, tol: float = 1e-6) -> bool:
    v2 = prob.voltages_squared(delta_pu)
    flows = prob.flows_pu(delta_pu)
    non_slack = np.arange(prob.net.n_nodes) != prob.net.slack_index
    ok = (
        np.all(v2[non_slack] >= prob.vmin2[non_slack, None] - tol)
        and np.all(v2[non_slack] <= prob.vmax2[non_slack, None] + tol)
        and np.all(flows <= prob.flow_up_pu + tol)
        and np.all(flows >= prob.flow_lo_pu - tol)
    )
    base = prob.net.base_s_kva
    d_kw = np.maximum(delta_pu, 0.0) * base
    u_kw = np.maximum(-delta_pu, 0.0) * base
    ok = ok and np.all(d_kw <= prob.bounds.ramp_down_max_kw + tol * base)
    ok = ok and np.all(u_kw <= -prob.bounds.ramp_up_min_kw + tol * base)
    e_down = d_kw.sum(axis=1) * prob.dt_hours
    e_up = u_kw.sum(axis=1) * prob.dt_hours
    ok = ok and np.all(e_down <= prob.bounds.energy_down_max_kwh + tol * base)
    ok = ok and np.all(e_up <= -prob.bounds.energy_up_min_kwh + tol * base)
    return bool(ok)


def _row_pool(prob: DispatchProblem, cols: _Columns):
    """All inequality rows of the coupled LP, built lazily by key.

    Keys: ("vlo"|"vup", node, t), ("flo"|"fup", branch, t),
    ("capd"|"capu", node, t), ("ed"|"eu", node).
    """
    net = prob.net
    base = net.base_s_kva
    nd = cols.n_pairs

    def coeff(key):
        kind = key[0]
        row = np.zeros(2 * nd)
        if kind in ("vlo", "vup"):
            _, i, t = key
            sens = 2.0 * prob.r_shared[i, cols.nodes]
            for j, node in enumerate(cols.nodes):
                k = cols.index[(node, t)]
                s = sens[j]
                if kind == "vlo":
                    row[k] = -s
                    row[nd + k] = s
                else:
                    row[k] = s
                    row[nd + k] = -s
            rhs = (prob.v2_base[i, t] - prob.vmin2[i]) if kind == "vlo" else (prob.vmax2[i] - prob.v2_base[i, t])
        elif kind in ("flo", "fup"):
            _, bidx, t = key
            sens = prob.masks[bidx, cols.nodes]
            for j, node in enumerate(cols.nodes):
                k = cols.index[(node, t)]
                s = sens[j]
                if kind == "fup":
                    row[k] = -s
                    row[nd + k] = s
                else:
                    row[k] = s
                    row[nd + k] = -s
            rhs = (prob.flow_up_pu[bidx, t] - prob.p0_flow_pu[bidx, t]) if kind == "fup" else (
                prob.p0_flow_pu[bidx, t] - prob.flow_lo_pu[bidx, t])
        elif kind in ("capd", "capu"):
            _, i, t = key
            k = cols.index[(i, t)]
            row[k if kind == "capd" else nd + k] = 1.0
            rhs = (prob.bounds.ramp_down_max_kw[i, t] if kind == "capd"
                   else -prob.bounds.ramp_up_min_kw[i, t]) / base
        else:
            _, i = key
            scale = prob.dt_hours * base
            for t in cols.ts:
                k = cols.index[(i, t)]
                row[k if kind == "ed" else nd + k] = scale
            rhs = prob.bounds.energy_down_max_kwh[i] if kind == "ed" else -prob.bounds.energy_up_min_kwh[i]
        return row, float(rhs)

    return coeff


def _violated_keys(prob: DispatchProblem, cols: _Columns, delta_pu, d_pu, u_pu, tol=1e-9):
    keys = []
    net = prob.net
    base = net.base_s_kva
    v2 = prob.voltages_squared(delta_pu)
    flows = prob.flows_pu(delta_pu)
    for t in cols.ts:
        for i in range(net.n_nodes):
            if i == net.slack_index:
                continue
            if v2[i, t] < prob.vmin2[i] - tol:
                keys.append(("vlo", i, int(t)))
            if v2[i, t] > prob.vmax2[i] + tol:
                keys.append(("vup", i, int(t)))
        for bidx in range(len(net.branches)):
            if flows[bidx, t] > prob.flow_up_pu[bidx, t] + tol:
                keys.append(("fup", bidx, int(t)))
            if flows[bidx, t] < prob.flow_lo_pu[bidx, t] - tol:
                keys.append(("flo", bidx, int(t)))
    cap_d = prob.bounds.ramp_down_max_kw / base
    cap_u = -prob.bounds.ramp_up_min_kw / base
    for (i, t) in cols.pairs:
        if d_pu[i, t] > cap_d[i, t] + tol:
            keys.append(("capd", i, int(t)))
        if u_pu[i, t] > cap_u[i, t] + tol:
            keys.append(("capu", i, int(t)))
    e_down = d_pu.sum(axis=1) * prob.dt_hours * base
    e_up = u_pu.sum(axis=1) * prob.dt_hours * base
    for i in cols.nodes:
        if e_down[i] > prob.bounds.energy_down_max_kwh[i] + tol:
            keys.append(("ed", int(i)))
        if e_up[i] > -prob.bounds.energy_up_min_kwh[i] + tol:
            keys.append(("eu", int(i)))
    return keys


def _solve_coupled(prob: DispatchProblem, cols: _Columns, max_iter: int):
    """Row-generated solve of the time-coupled LP.

    Starts from the base-case violations plus all finite energy rows; any
    constraint the candidate optimum violates joins the working set until
    the full program is satisfied (then the candidate is optimal) or the
    working set itself is infeasible.
    """
    net = prob.net
    n, T = prob.p_net_kw.shape
    coeff = _row_pool(prob, cols)
    zero = np.zeros((n, T))
    working = list(dict.fromkeys(_violated_keys(prob, cols, zero, zero, zero)))
    for i in cols.nodes:
        if np.isfinite(prob.bounds.energy_down_max_kwh[i]):
            working.append(("ed", int(i)))
        if np.isfinite(prob.bounds.energy_up_min_kwh[i]):
            working.append(("eu", int(i)))
    c = _cost_vector(prob, cols.n_pairs)
    seen = set(working)
    for _ in range(200):
        A = np.empty((len(working), 2 * cols.n_pairs))
        b = np.empty(len(working))
        for r, key in enumerate(working):
            A[r], b[r] = coeff(key)
        res = simplex.solve_lp(c, A, b, max_iter=max_iter)
        if res.status != simplex.OPTIMAL:
            return res.status, None, None, np.nan
        nd = cols.n_pairs
        d_pu = np.zeros((n, T))
        u_pu = np.zeros((n, T))
        for k, (i, t) in enumerate(cols.pairs):
            d_pu[i, t] = res.x[k]
            u_pu[i, t] = res.x[nd + k]
        new = [k for k in _violated_keys(prob, cols, d_pu - u_pu, d_pu, u_pu) if k not in seen]
        if not new:
            return simplex.OPTIMAL, d_pu, u_pu, res.gap
        working.extend(new)
        seen.update(new)
    return STATUS_ITERATION_LIMIT, None, None, np.nan


def ac_validate(net: Network, p_net_kw, q_kvar, dispatch: FlexDispatch,
                bounds: FlexBounds, penalties: Penalties, dt_hours: float,
                margin_step: float = DEFAULT_MARGIN_STEP,
                max_rounds: int = AC_ROUNDS) -> FlexDispatch:
    """Check a dispatch against the full AC model, tightening if needed.

    Runs the Newton-Raphson power flow with the dispatch applied. While any
    voltage or thermal violation remains, the LP limits are tightened by one
    more ``margin_step`` and the scenario re-solved, up to ``max_rounds``.
    Never raises: the last attempt is returned with its residual count.
    """
    if not dispatch.feasible:
        return dispatch
    p_net_kw = np.asarray(p_net_kw, dtype=float)
    q_kvar = np.asarray(q_kvar, dtype=float)
    current = dispatch
    for round_no in range(max_rounds + 1):
        residual = _ac_violations(net, p_net_kw, q_kvar, current)
        if residual == 0:
            return replace(current, ac_clean=True, validation_rounds=round_no,
                           residual_violations=0)
        if round_no == max_rounds:
            break
        prob = build_dispatch_problem(
            net, p_net_kw, q_kvar, bounds, penalties, dt_hours,
            v_margin_pu=margin_step * (round_no + 1),
            s_margin=margin_step * (round_no + 1),
        )
        attempt = solve_dispatch(prob)
        if not attempt.feasible:
            break
        current = attempt
    residual = _ac_violations(net, p_net_kw, q_kvar, current)
    return replace(current, ac_clean=False, validation_rounds=max_rounds,
                   residual_violations=residual)


def _ac_violations(net: Network, p_net_kw, q_kvar, dispatch: FlexDispatch) -> int:
    base = net.base_s_kva
    p_inj = (-p_net_kw + dispatch.total_kw) / base
    q_inj = -q_kvar / base
    sol = solve_pf(net, p_inj.T, q_inj.T)
    vmin = net.vmin_pu()[None, :]
    vmax = net.vmax_pu()[None, :]
    smax = net.branch_smax_pu()[None, :]
    count = int((~sol.converged).sum())
    v = sol.v_pu[sol.converged]
    f = sol.flow_max_pu[sol.converged]
    count += int((v < vmin - _VIOL_EPS).sum())
    count += int((v > vmax + _VIOL_EPS).sum())
    count += int((f > smax + _VIOL_EPS).sum())
    return count


@dataclass(frozen=True)
class BatchResult:
    dispatches: list[FlexDispatch]
    feasible_fraction: float
    ac_clean_fraction: float

    def stack_down_kw(self) -> np.ndarray:
        """(nodes, J, T) ramp-down activation; zeros where infeasible."""
        return np.stack([d.ramp_down_kw for d in self.dispatches], axis=1)

    def stack_up_kw(self) -> np.ndarray:
        return np.stack([d.ramp_up_kw for d in self.dispatches], axis=1)


def _solve_one_scenario(args) -> FlexDispatch:
    net, p_net_kw, q_kvar, bounds, penalties, dt_hours, validate = args
    prob = build_dispatch_problem(net, p_net_kw, q_kvar, bounds, penalties, dt_hours)
    disp = solve_dispatch(prob)
    if validate:
        disp = ac_validate(net, p_net_kw, q_kvar, disp, bounds, penalties, dt_hours)
    return disp


def batch_solve(net: Network, scenarios, tan_phi: np.ndarray, bounds: FlexBounds,
                penalties: Penalties, validate: bool = True,
                workers: int = 1) -> BatchResult:
    """Independent dispatch solves for every scenario, merged by index.

    One scenario failing (infeasible under tight bounds) never aborts the
    batch; statuses aggregate into the feasibility fraction.
    """
    dt_hours = float(scenarios.meta.get("dt_hours", 1.0))
    jobs = []
    for j in range(scenarios.count):
        p_net = scenarios.net_kw[:, j, :]
        q = scenarios.load_kw[:, j, :] * tan_phi[:, None]
        jobs.append((net, p_net, q, bounds, penalties, dt_hours, validate))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            dispatches = list(pool.map(_solve_one_scenario, jobs, chunksize=8))
    else:
        dispatches = [_solve_one_scenario(job) for job in jobs]
    feas = sum(1 for d in dispatches if d.feasible) / len(dispatches)
    clean = sum(1 for d in dispatches if d.ac_clean) / len(dispatches)
    return BatchResult(dispatches=dispatches, feasible_fraction=feas, ac_clean_fraction=clean)


__all__ = [
    "AC_ROUNDS",
    "BatchResult",
    "DEFAULT_MARGIN_STEP",
    "DispatchProblem",
    "FlexBounds",
    "FlexDispatch",
    "Penalties",
    "STATUS_INFEASIBLE",
    "STATUS_ITERATION_LIMIT",
    "STATUS_OPTIMAL",
    "ac_validate",
    "batch_solve",
    "build_dispatch_problem",
    "solve_dispatch",
]
