"""Full AC power flow (Newton-Raphson) and congestion statistics.

Loads are constant-PQ; every non-slack node is a PQ node, so the Jacobian
is the plain polar-coordinate form. Solves are batched across (scenario,
time) pairs: the per-problem matrices are small, so stacking them and using
a batched linear solve dominates looping in Python.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network

PF_TOL = 1e-8
PF_MAX_ITER = 50


@dataclass(frozen=True)
class PFSolution:
    """Converged state for a batch of injection vectors.

    Arrays are (batch, nodes) for voltage/angle and (batch, branches) for
    flows; ``flow_from``/``flow_to`` are complex powers in pu oriented out
    of each branch end.
    """

    v_pu: np.ndarray
    theta_rad: np.ndarray
    flow_from: np.ndarray
    flow_to: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray

    @property
    def flow_max_pu(self) -> np.ndarray:
        """Thermal loading per branch: the larger apparent flow of both ends."""
        return np.maximum(np.abs(self.flow_from), np.abs(self.flow_to))


def admittance_matrix(net: Network) -> np.ndarray:
    n = net.n_nodes
    y = np.zeros((n, n), dtype=complex)
    r = net.branch_r_pu()
    x = net.branch_x_pu()
    for k, br in enumerate(net.branches):
        i, j = net.node_index(br.from_node), net.node_index(br.to_node)
        yb = 1.0 / complex(r[k], x[k])
        y[i, j] -= yb
        y[j, i] -= yb
        y[i, i] += yb
        y[j, j] += yb
    return y


def solve_pf(net: Network, p_inj_pu, q_inj_pu) -> PFSolution:
    """Newton-Raphson from a flat start for one or many injection vectors.

    ``p_inj_pu``/``q_inj_pu`` are net injections (generation positive) per
    non-slack entry indexed like ``net.nodes``; the slack entry is ignored.
    Accepts shape (nodes,) or (batch, nodes).
    """
    p = np.atleast_2d(np.asarray(p_inj_pu, dtype=float))
    q = np.atleast_2d(np.asarray(q_inj_pu, dtype=float))
    if p.shape != q.shape or p.shape[1] != net.n_nodes:
        raise ValueError("injection arrays must both be (batch, n_nodes)")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("injections must be finite")
    return _nr_batch(net, p, q)


def _nr_batch(net: Network, p: np.ndarray, q: np.ndarray) -> PFSolution:
    n = net.n_nodes
    batch = p.shape[0]
    slack = net.slack_index
    pq = np.array([i for i in range(n) if i != slack])
    y = admittance_matrix(net)

    vm = np.full((batch, n), net.slack_v_pu)
    va = np.zeros((batch, n))
    s_spec = p + 1j * q
    converged = np.zeros(batch, dtype=bool)
    iterations = np.zeros(batch, dtype=int)
    active = np.ones(batch, dtype=bool)

    for it in range(PF_MAX_ITER):
        v = vm * np.exp(1j * va)
        i_bus = v @ y.T
        s_calc = v * np.conj(i_bus)
        mism = s_spec - s_calc
        err = np.maximum(np.abs(mism.real[:, pq]).max(axis=1), np.abs(mism.imag[:, pq]).max(axis=1))
        newly = active & (err <= PF_TOL)
        converged |= newly
        active &= ~newly
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        iterations[idx] += 1
        va_new, vm_new, ok = _nr_step(y, v[idx], vm[idx], mism[idx], pq)
        vm[idx], va[idx] = vm_new, va_new
        bad = idx[~ok]
        active[bad] = False

    v = vm * np.exp(1j * va)
    flow_from, flow_to = _branch_flows(net, y, v)
    return PFSolution(v_pu=vm, theta_rad=va, flow_from=flow_from, flow_to=flow_to,
                      converged=converged, iterations=iterations)


def _nr_step(y, v, vm, mism, pq):
    """One batched Newton step on the PQ subsystem; ok flags finite updates."""
    b, n = v.shape
    i_bus = v @ y.T
    vnorm = v / vm
    eye = np.eye(n)[None]
    # dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    ds_dva = 1j * v[:, :, None] * np.conj(i_bus[:, :, None] * eye - y[None] * v[:, None, :])
    # dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
    ds_dvm = v[:, :, None] * np.conj(y[None] * vnorm[:, None, :]) + (
        np.conj(i_bus) * vnorm
    )[:, :, None] * eye
    jac = np.empty((b, 2 * len(pq), 2 * len(pq)))
    jac[:, : len(pq), : len(pq)] = ds_dva.real[:, pq][:, :, pq]
    jac[:, : len(pq), len(pq):] = ds_dvm.real[:, pq][:, :, pq]
    jac[:, len(pq):, : len(pq)] = ds_dva.imag[:, pq][:, :, pq]
    jac[:, len(pq):, len(pq):] = ds_dvm.imag[:, pq][:, :, pq]
    rhs = np.concatenate([mism.real[:, pq], mism.imag[:, pq]], axis=1)
    try:
        dx = np.linalg.solve(jac, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        dx = np.full_like(rhs, np.nan)
        for k in range(b):
            try:
                dx[k] = np.linalg.solve(jac[k], rhs[k])
            except np.linalg.LinAlgError:
                pass
    ok = np.all(np.isfinite(dx), axis=1)
    dva = np.zeros((b, n))
    dvm = np.zeros((b, n))
    safe = np.where(ok[:, None], dx, 0.0)
    dva[:, pq] = safe[:, : len(pq)]
    dvm[:, pq] = safe[:, len(pq):]
    va_new = np.angle(v) + dva
    vm_new = np.maximum(vm + dvm, 1e-6)
    return va_new, vm_new, ok


def _branch_flows(net: Network, y: np.ndarray, v: np.ndarray):
    nb = len(net.branches)
    b = v.shape[0]
    flow_from = np.empty((b, nb), dtype=complex)
    flow_to = np.empty((b, nb), dtype=complex)
    for k, br in enumerate(net.branches):
        i, j = net.node_index(br.from_node), net.node_index(br.to_node)
        yb = -y[i, j]
        flow_from[:, k] = np.conj(yb) * (np.abs(v[:, i]) ** 2 - v[:, i] * np.conj(v[:, j]))
        flow_to[:, k] = np.conj(yb) * (np.abs(v[:, j]) ** 2 - v[:, j] * np.conj(v[:, i]))
    return flow_from, flow_to


@dataclass(frozen=True)
class CongestionStats:
    """Violation fractions over (scenarios x nodes-or-branches x time)."""

    under_voltage: float
    over_voltage: float
    thermal: float
    congested_hours: float
    unresolved: float
    n_samples: int

    def as_row(self) -> dict[str, float]:
        return {
            "under_voltage_pct": 100.0 * self.under_voltage,
            "over_voltage_pct": 100.0 * self.over_voltage,
            "thermal_pct": 100.0 * self.thermal,
            "congested_hours_pct": 100.0 * self.congested_hours,
            "unresolved_pct": 100.0 * self.unresolved,
        }


def scenario_injections(net: Network, scenarios, tan_phi: np.ndarray, dispatch_kw: np.ndarray | None = None):
    """Per (scenario, t) nodal P/Q injections in pu (generation positive).

    ``dispatch_kw`` (nodes, J, T) holds the applied flexibility (ramp-down
    positive, ramp-up negative); it offsets active demand only.
    """
    net_kw = scenarios.net_kw  # (nodes, J, T)
    load_kw = scenarios.load_kw
    p_kw = -net_kw
    if dispatch_kw is not None:
        if dispatch_kw.shape != net_kw.shape:
            raise ValueError("dispatch does not match scenario dimensions")
        p_kw = p_kw + dispatch_kw
    q_kvar = -load_kw * tan_phi[:, None, None]
    return p_kw / net.base_s_kva, q_kvar / net.base_s_kva


def congestion_scan(net: Network, scenarios, tan_phi: np.ndarray,
                    dispatch_kw: np.ndarray | None = None,
                    chunk: int = 512) -> CongestionStats:
    """Solve PF per (scenario, t) and count voltage/thermal violations.

    Non-converged solves land in the ``unresolved`` fraction rather than in
    the congestion counts.
    """
    p_pu, q_pu = scenario_injections(net, scenarios, tan_phi, dispatch_kw)
    n, J, T = p_pu.shape
    p_flat = p_pu.transpose(1, 2, 0).reshape(J * T, n)
    q_flat = q_pu.transpose(1, 2, 0).reshape(J * T, n)
    vmin = net.vmin_pu()
    vmax = net.vmax_pu()
    smax = net.branch_smax_pu()
    uv = ov = th = hours = unresolved = 0
    for start in range(0, J * T, chunk):
        sol = solve_pf(net, p_flat[start:start + chunk], q_flat[start:start + chunk])
        okay = sol.converged
        v = sol.v_pu[okay]
        f = sol.flow_max_pu[okay]
        uv_mask = v < vmin[None, :] - 1e-9
        ov_mask = v > vmax[None, :] + 1e-9
        th_mask = f > smax[None, :] + 1e-9
        uv += int(uv_mask.sum())
        ov += int(ov_mask.sum())
        th += int(th_mask.sum())
        hours += int((uv_mask.any(axis=1) | ov_mask.any(axis=1) | th_mask.any(axis=1)).sum())
        unresolved += int((~okay).sum())
    node_samples = J * T * n
    branch_samples = J * T * len(net.branches)
    return CongestionStats(
        under_voltage=uv / node_samples,
        over_voltage=ov / node_samples,
        thermal=th / branch_samples,
        congested_hours=hours / (J * T),
        unresolved=unresolved / (J * T),
        n_samples=J * T,
    )


__all__ = [
    "CongestionStats",
    "PFSolution",
    "PF_MAX_ITER",
    "PF_TOL",
    "admittance_matrix",
    "congestion_scan",
    "scenario_injections",
    "solve_pf",
]
