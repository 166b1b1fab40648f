"""Radial feeder data model, file ingestion and derived electrical quantities.

The network document is JSON (see README for the schema); load profiles are
CSV with one column per load plus one normalized-PV column. All internal
computation is per-unit on the document's base; files carry ohms and kW.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

NodeId = int | str

DEFAULT_THETA_BOUND = 0.5236  # rad, +/-30 deg when the document omits bounds


class NetworkError(ValueError):
    """Raised for malformed or non-radial network documents."""


@dataclass(frozen=True)
class Node:
    id: NodeId
    vmin: float
    vmax: float


@dataclass(frozen=True)
class Branch:
    from_node: NodeId
    to_node: NodeId
    r_ohm: float
    x_ohm: float
    smax_kva: float
    theta_min: float = -DEFAULT_THETA_BOUND
    theta_max: float = DEFAULT_THETA_BOUND


@dataclass(frozen=True)
class Load:
    node: NodeId
    profile: str
    # reactive demand follows the active profile at a fixed power factor
    pf: float = 0.95


@dataclass(frozen=True)
class Generator:
    node: NodeId
    pmin_kw: float
    pmax_kw: float


@dataclass(frozen=True)
class Network:
    """Validated radial feeder. Immutable; safe to share across workers."""

    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]
    slack_node: NodeId
    slack_v_pu: float
    base_s_kva: float
    base_v_volt: float

    _index: dict[NodeId, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n.id: i for i, n in enumerate(self.nodes)})
        _validate(self)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def z_base_ohm(self) -> float:
        return self.base_v_volt**2 / (self.base_s_kva * 1e3)

    def node_index(self, node_id: NodeId) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise NetworkError(f"unknown node id {node_id!r}") from None

    @property
    def slack_index(self) -> int:
        return self.node_index(self.slack_node)

    def branch_r_pu(self) -> np.ndarray:
        return np.array([b.r_ohm for b in self.branches]) / self.z_base_ohm

    def branch_x_pu(self) -> np.ndarray:
        return np.array([b.x_ohm for b in self.branches]) / self.z_base_ohm

    def branch_smax_pu(self) -> np.ndarray:
        return np.array([b.smax_kva for b in self.branches]) / self.base_s_kva

    def vmin_pu(self) -> np.ndarray:
        return np.array([n.vmin for n in self.nodes])

    def vmax_pu(self) -> np.ndarray:
        return np.array([n.vmax for n in self.nodes])

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-node list of (neighbor index, branch index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        for bi, br in enumerate(self.branches):
            i, j = self.node_index(br.from_node), self.node_index(br.to_node)
            adj[i].append((j, bi))
            adj[j].append((i, bi))
        return adj

    def pv_caps_kw(self) -> np.ndarray:
        """Installed generation capacity per node (kW peak)."""
        caps = np.zeros(self.n_nodes)
        for g in self.generators:
            caps[self.node_index(g.node)] += g.pmax_kw
        return caps


def _validate(net: Network):
    ids = [n.id for n in net.nodes]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise NetworkError(f"duplicate node id {dup!r}")
    n, m = len(net.nodes), len(net.branches)
    if n < 2:
        raise NetworkError("a feeder needs at least two nodes")
    if m != n - 1:
        raise NetworkError(f"non-radial topology: {m} branches for {n} nodes (need {n - 1})")
    for br in net.branches:
        for end in (br.from_node, br.to_node):
            if end not in net._index:
                raise NetworkError(f"branch {br.from_node!r}-{br.to_node!r} references unknown node {end!r}")
        if br.from_node == br.to_node:
            raise NetworkError(f"self-loop at node {br.from_node!r}")
        if not (br.r_ohm >= 0.0 and math.isfinite(br.r_ohm)):
            raise NetworkError(f"branch {br.from_node!r}-{br.to_node!r} has invalid resistance {br.r_ohm}")
        if not math.isfinite(br.x_ohm):
            raise NetworkError(f"branch {br.from_node!r}-{br.to_node!r} has non-finite reactance")
        if not br.smax_kva > 0.0:
            raise NetworkError(f"branch {br.from_node!r}-{br.to_node!r} needs smax_kva > 0")
    if net.slack_node not in net._index:
        raise NetworkError(f"slack references unknown node {net.slack_node!r}")
    for ld in net.loads:
        if ld.node not in net._index:
            raise NetworkError(f"load on unknown node {ld.node!r}")
        if not 0.0 < ld.pf <= 1.0:
            raise NetworkError(f"load at node {ld.node!r} has power factor {ld.pf} outside (0, 1]")
    for g in net.generators:
        if g.node not in net._index:
            raise NetworkError(f"generator on unknown node {g.node!r}")
        if g.pmin_kw > g.pmax_kw:
            raise NetworkError(f"generator at node {g.node!r} has pmin > pmax")
    if net.base_s_kva <= 0 or net.base_v_volt <= 0:
        raise NetworkError("base power and voltage must be positive")
    for nd in net.nodes:
        if not 0.0 < nd.vmin < nd.vmax:
            raise NetworkError(f"node {nd.id!r} has invalid voltage band [{nd.vmin}, {nd.vmax}]")
    # with m == n-1, connectivity is equivalent to the absence of cycles
    seen = {net.slack_index}
    stack = [net.slack_index]
    adj = net.adjacency()
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != n:
        missing = next(nd.id for i, nd in enumerate(net.nodes) if i not in seen)
        raise NetworkError(f"graph is disconnected: node {missing!r} unreachable from slack")


def load_network(text: str) -> Network:
    """Parse and validate a JSON network document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkError(f"network document is not valid JSON: {e}") from e
    try:
        nodes = tuple(Node(n["id"], float(n["vmin"]), float(n["vmax"])) for n in doc["nodes"])
        branches = tuple(
            Branch(
                b["from"],
                b["to"],
                float(b["r_ohm"]),
                float(b["x_ohm"]),
                float(b["smax_kva"]),
                float(b.get("theta_min", -DEFAULT_THETA_BOUND)),
                float(b.get("theta_max", DEFAULT_THETA_BOUND)),
            )
            for b in doc["branches"]
        )
        loads = tuple(Load(l["node"], str(l["profile"]), float(l.get("pf", 0.95))) for l in doc["loads"])
        gens = tuple(
            Generator(g["node"], float(g["pmin_kw"]), float(g["pmax_kw"])) for g in doc["generators"]
        )
        slack = doc["slack"]
        base = doc["base"]
        return Network(
            nodes=nodes,
            branches=branches,
            loads=loads,
            generators=gens,
            slack_node=slack["node"],
            slack_v_pu=float(slack["v_pu"]),
            base_s_kva=float(base["s_kva"]),
            base_v_volt=float(base["v_volt"]),
        )
    except (KeyError, TypeError) as e:
        raise NetworkError(f"network document is missing or mistypes a field: {e}") from e


def load_network_file(path) -> Network:
    with open(path, encoding="utf-8") as f:
        return load_network(f.read())


def serialize_network(net: Network) -> str:
    doc = {
        "nodes": [{"id": n.id, "vmin": n.vmin, "vmax": n.vmax} for n in net.nodes],
        "branches": [
            {
                "from": b.from_node,
                "to": b.to_node,
                "r_ohm": b.r_ohm,
                "x_ohm": b.x_ohm,
                "smax_kva": b.smax_kva,
                "theta_min": b.theta_min,
                "theta_max": b.theta_max,
            }
            for b in net.branches
        ],
        "loads": [{"node": l.node, "profile": l.profile, "pf": l.pf} for l in net.loads],
        "generators": [{"node": g.node, "pmin_kw": g.pmin_kw, "pmax_kw": g.pmax_kw} for g in net.generators],
        "slack": {"node": net.slack_node, "v_pu": net.slack_v_pu},
        "base": {"s_kva": net.base_s_kva, "v_volt": net.base_v_volt},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


@dataclass(frozen=True)
class ProfileSet:
    """Day-ahead nominal profiles. Immutable once loaded.

    ``loads`` maps a profile id to its active-power series in kW; ``pv_norm``
    is the shared normalized PV series (per kW installed, in [0, 1]).
    """

    loads: dict[str, np.ndarray]
    pv_norm: np.ndarray
    dt_hours: float
    fe_load: float
    fe_pv: float

    def __post_init__(self):
        T = len(self.pv_norm)
        for name, series in self.loads.items():
            if len(series) != T:
                raise ValueError(f"profile {name!r} has {len(series)} steps, expected {T}")
            if np.any(series < 0):
                raise ValueError(f"profile {name!r} has negative nominal load")
        if np.any((self.pv_norm < 0) | (self.pv_norm > 1)):
            raise ValueError("normalized PV series must lie in [0, 1]")
        if self.dt_hours <= 0:
            raise ValueError("dt_hours must be positive")

    @property
    def n_steps(self) -> int:
        return len(self.pv_norm)


PV_COLUMN = "pv"


def load_profiles(
    path,
    dt_hours: float = 0.25,
    fe_load: float = 0.3,
    fe_pv: float = 0.4,
) -> ProfileSet:
    """Read the profiles CSV (header of ids, one normalized-PV column)."""
    with open(path, newline="", encoding="utf-8") as f:
        return parse_profiles(f.read(), dt_hours, fe_load, fe_pv)


def parse_profiles(text: str, dt_hours: float = 0.25, fe_load: float = 0.3, fe_pv: float = 0.4) -> ProfileSet:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if len(rows) < 2:
        raise ValueError("profiles CSV needs a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if PV_COLUMN not in header:
        raise ValueError(f"profiles CSV is missing the {PV_COLUMN!r} column")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    cols = {name: data[:, k].copy() for k, name in enumerate(header)}
    pv = cols.pop(PV_COLUMN)
    return ProfileSet(loads=cols, pv_norm=pv, dt_hours=dt_hours, fe_load=fe_load, fe_pv=fe_pv)


def nominal_node_profiles(net: Network, profiles: ProfileSet) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate per-load profiles into nodal P and Q series (kW / kVAr).

    Co-located loads are summed per node; reactive demand is derived from
    each load's power factor before aggregation.
    """
    T = profiles.n_steps
    p = np.zeros((net.n_nodes, T))
    q = np.zeros((net.n_nodes, T))
    for ld in net.loads:
        if ld.profile not in profiles.loads:
            raise NetworkError(f"load at node {ld.node!r} references unknown profile {ld.profile!r}")
        series = profiles.loads[ld.profile]
        i = net.node_index(ld.node)
        p[i] += series
        q[i] += series * math.tan(math.acos(ld.pf))
    return p, q


def admittance_weights(net: Network) -> np.ndarray:
    """Symmetric nonnegative branch-admittance weight matrix (per-unit).

    ``w[i, j] = 1 / |z_ij|`` on branches, zero elsewhere and on the diagonal.
    """
    n = net.n_nodes
    w = np.zeros((n, n))
    r = net.branch_r_pu()
    x = net.branch_x_pu()
    for k, br in enumerate(net.branches):
        z = math.hypot(r[k], x[k])
        if z == 0.0:
            raise NetworkError(f"branch {br.from_node!r}-{br.to_node!r} has zero impedance")
        i, j = net.node_index(br.from_node), net.node_index(br.to_node)
        w[i, j] = w[j, i] = 1.0 / z
    return w


def self_sufficiency(profiles: ProfileSet, pv_caps_kw) -> float:
    """Daily PV energy divided by daily load energy."""
    load_energy = sum(float(s.sum()) for s in profiles.loads.values()) * profiles.dt_hours
    if load_energy <= 0:
        raise ValueError("total load energy must be positive")
    pv_energy = float(np.sum(pv_caps_kw)) * float(profiles.pv_norm.sum()) * profiles.dt_hours
    return pv_energy / load_energy


def feeder_orientation(net: Network) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orient branches away from the slack node.

    Returns ``(parent, branch_of, order)``: per-node parent index (-1 at the
    slack), the branch index connecting a node to its parent, and node
    indices in BFS order from the slack.
    """
    n = net.n_nodes
    parent = np.full(n, -1, dtype=int)
    branch_of = np.full(n, -1, dtype=int)
    order = np.empty(n, dtype=int)
    adj = net.adjacency()
    root = net.slack_index
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = [root]
    k = 0
    while queue:
        u = queue.pop(0)
        order[k] = u
        k += 1
        for v, bi in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                branch_of[v] = bi
                queue.append(v)
    return parent, branch_of, order


def downstream_masks(net: Network) -> np.ndarray:
    """Boolean (branches x nodes) matrix: node j lies below branch b."""
    parent, branch_of, order = feeder_orientation(net)
    n = net.n_nodes
    masks = np.zeros((len(net.branches), n), dtype=bool)
    # walk leaves-to-root so child subtrees are complete before the parent
    for u in order[::-1]:
        if parent[u] < 0:
            continue
        masks[branch_of[u], u] = True
        for v in range(n):
            if parent[v] == u:
                masks[branch_of[u]] |= masks[branch_of[v]]
    return masks


def shared_path_impedance(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Mutual path resistance/reactance matrices (per-unit).

    Entry (i, k) sums r (resp. x) over branches common to the slack-to-i and
    slack-to-k paths; this is the voltage-drop sensitivity structure of a
    radial feeder.
    """
    masks = downstream_masks(net)
    r = net.branch_r_pu()
    x = net.branch_x_pu()
    fm = masks.astype(float)
    big_r = fm.T @ (fm * r[:, None])
    big_x = fm.T @ (fm * x[:, None])
    return big_r, big_x


__all__ = [
    "Branch",
    "DEFAULT_THETA_BOUND",
    "Generator",
    "Load",
    "Network",
    "NetworkError",
    "Node",
    "ProfileSet",
    "admittance_weights",
    "downstream_masks",
    "feeder_orientation",
    "load_network",
    "load_network_file",
    "load_profiles",
    "nominal_node_profiles",
    "parse_profiles",
    "self_sufficiency",
    "serialize_network",
    "shared_path_impedance",
]
