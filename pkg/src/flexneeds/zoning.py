"""Electrically coherent zone identification for a radial feeder.

Pipeline: admittance weights -> doubly stochastic normalization (symmetric
Sinkhorn scaling with a self-loop augmentation) -> spectral embedding on the
leading eigenvectors -> seeded k-means -> silhouette scoring, sweeping the
zone count and repairing any disconnected cluster so every zone induces a
connected subgraph.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .network import Network, admittance_weights

SINKHORN_TOL = 1e-10
SINKHORN_MAX_ITER = 10_000
KMEANS_RESTARTS = 10
# zone counts whose mean silhouette ties within this margin resolve to the
# larger count (finer zones serve procurement better)
SCORE_TIE = 0.01


class ZoningError(RuntimeError):
    pass


def to_doubly_stochastic(w: np.ndarray) -> np.ndarray:
    """Scale ``w`` plus a self-loop term so all row/column sums equal one.

    Uses the symmetric fixed-point iteration d <- sqrt(d / (W d)) so every
    iterate D W D stays exactly symmetric. The self-loop weight (max row sum)
    guarantees total support for the scaling.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ValueError("weight matrix must be square")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.allclose(w, w.T, atol=1e-12):
        raise ValueError("weight matrix must be symmetric")
    if n == 1:
        return np.ones((1, 1))
    _require_connected(w)
    gamma = float(w.sum(axis=1).max())
    a = w + gamma * np.eye(n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    for _ in range(SINKHORN_MAX_ITER):
        s = a @ d
        d = np.sqrt(d / s)
        m = a * np.outer(d, d)
        err = np.abs(m.sum(axis=1) - 1.0).max()
        if err <= SINKHORN_TOL:
            return m
    raise ZoningError(f"doubly stochastic scaling did not reach {SINKHORN_TOL} in {SINKHORN_MAX_ITER} iterations")


def _require_connected(w: np.ndarray) -> None:
    n = w.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in np.nonzero(w[u] > 0)[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    if not seen.all():
        raise ZoningError("weight graph is disconnected")


def spectral_embed(m: np.ndarray, k: int) -> np.ndarray:
    """Coordinates from the k leading orthonormal eigenvectors of ``m``.

    Eigenvalues sorted descending; each vector's first nonzero component is
    made positive so the embedding is deterministic.
    """
    n = m.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"embedding dimension {k} outside [1, {n}]")
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    vecs = vecs[:, order[:k]]
    for j in range(k):
        col = vecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-10)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = KMEANS_RESTARTS) -> np.ndarray:
    """Seeded k-means++ with restarts; returns labels in 1..k.

    Empty clusters after an assignment step are reseeded from the farthest
    points; the best run by within-cluster sum of squares wins.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k < 1 or k > n:
        raise ValueError(f"cluster count {k} outside [1, {n}]")
    n_distinct = len(np.unique(points, axis=0))
    if k > n_distinct:
        raise ValueError(f"cluster count {k} exceeds {n_distinct} distinct points")
    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(max(1, restarts)):
        labels, wcss = _kmeans_once(points, k, rng)
        if wcss < best_wcss - 1e-15:
            best_wcss, best_labels = wcss, labels
    return best_labels + 1


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300):
    n = len(points)
    centers = _kmeanspp_init(points, k, rng)
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        # stable tie-break: lowest-index centroid wins
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            members = points[new_labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its center
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[c] = points[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    wcss = float(((points - centers[labels]) ** 2).sum())
    return labels, wcss


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[c] = points[rng.integers(n)]
        else:
            centers[c] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def silhouette(labels: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, dict[int, float], float]:
    """Silhouette per node, per zone and the network mean.

    Per node: s = (b - a) / max(a, b) with a the mean distance to its own
    zone's other members and b the minimum over other zones of the mean
    distance to that zone. Singleton zones score zero by convention.

    Evaluated with plain sequential accumulation (networks are small), so
    the result is reproducible term for term from the definition.
    """
    labels = np.asarray(labels)
    points = np.asarray(points, dtype=float)
    zones = sorted(int(z) for z in np.unique(labels))
    if len(zones) < 2:
        raise ValueError("silhouette needs at least two zones")
    n = len(points)
    pts = [tuple(row) for row in points]
    members = {z: [i for i in range(n) if labels[i] == z] for z in zones}
    s = np.zeros(n)
    for i in range(n):
        own = members[int(labels[i])]
        if len(own) == 1:
            s[i] = 0.0
            continue
        a = sum(math.dist(pts[i], pts[j]) for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(math.dist(pts[i], pts[j]) for j in members[z]) / len(members[z])
            for z in zones
            if z != labels[i]
        )
        denom = max(a, b)
        s[i] = 0.0 if denom == 0.0 else (b - a) / denom
    per_zone = {z: sum(s[i] for i in members[z]) / len(members[z]) for z in zones}
    mean = sum(per_zone.values()) / len(per_zone)
    return s, per_zone, mean


@dataclass(frozen=True)
class ZonePartition:
    """Node-to-zone map plus the quality scores that selected it."""

    labels: dict
    k: int
    score: float
    per_zone_score: dict[int, float]
    node_scores: np.ndarray
    embedding: np.ndarray
    sweep: dict[int, float]

    def label_array(self, net: Network) -> np.ndarray:
        return np.array([self.labels[n.id] for n in net.nodes], dtype=int)

    def to_json(self) -> str:
        doc = {"k": self.k, "score": self.score,
               "labels": {str(k): v for k, v in self.labels.items()}}
        return json.dumps(doc, sort_keys=True, indent=2)

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "mean_silhouette"])
        for k in sorted(self.sweep):
            wr.writerow([k, repr(self.sweep[k])])
        return buf.getvalue()


def _zone_components(members: list[int], adj) -> list[list[int]]:
    member_set = set(members)
    comps, seen = [], set()
    for start in members:
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v, _ in adj[u]:
                if v in member_set and v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(comp)
    return comps


def repair_connectivity(net: Network, labels: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Reassign disconnected zone fragments to the strongest adjacent zone.

    Each zone keeps its largest connected component; every other fragment
    moves to the neighboring zone with the highest total boundary weight.
    Iterates until all zones induce connected subgraphs.
    """
    labels = labels.copy()
    adj = net.adjacency()
    for _ in range(net.n_nodes):
        moved = False
        for z in np.unique(labels):
            members = [int(i) for i in np.nonzero(labels == z)[0]]
            comps = _zone_components(members, adj)
            if len(comps) <= 1:
                continue
            comps.sort(key=len, reverse=True)
            for frag in comps[1:]:
                boundary: dict[int, float] = {}
                for u in frag:
                    for v, bi in adj[u]:
                        zv = int(labels[v])
                        if zv != z or v not in frag:
                            if zv != z:
                                boundary[zv] = boundary.get(zv, 0.0) + w[u, v]
                if not boundary:
                    continue
                target = max(sorted(boundary), key=lambda t: boundary[t])
                labels[frag] = target
                moved = True
        if not moved:
            return labels
    raise ZoningError("connectivity repair did not stabilize")


def zones_connected(net: Network, labels: np.ndarray) -> bool:
    adj = net.adjacency()
    for z in np.unique(labels):
        members = [int(i) for i in np.nonzero(labels == z)[0]]
        if len(_zone_components(members, adj)) != 1:
            return False
    return True


def _relabel_by_min_node(labels: np.ndarray) -> np.ndarray:
    """Stable zone ids: 1..k by ascending smallest member index."""
    order = sorted(np.unique(labels), key=lambda z: int(np.nonzero(labels == z)[0][0]))
    remap = {z: i + 1 for i, z in enumerate(order)}
    return np.array([remap[z] for z in labels], dtype=int)


def partition_k(net: Network, k: int, seed: int, w: np.ndarray | None = None,
                m: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, float, dict[int, float], np.ndarray]:
    """Partition into exactly k connected zones; returns labels and scores."""
    if w is None:
        w = admittance_weights(net)
    if m is None:
        m = to_doubly_stochastic(w)
    coords = spectral_embed(m, k)
    labels = kmeans(coords, k, seed)
    labels = repair_connectivity(net, labels, w)
    labels = _relabel_by_min_node(labels)
    if len(np.unique(labels)) >= 2:
        node_s, per_zone, mean = silhouette(labels, coords)
    else:
        node_s, per_zone, mean = np.zeros(net.n_nodes), {1: 0.0}, 0.0
    return labels, coords, mean, per_zone, node_s


def select_zones(net: Network, k_range, seed: int = 0) -> ZonePartition:
    """Sweep zone counts, score each partition and keep the best.

    Scores within ``SCORE_TIE`` of the maximum resolve to the largest zone
    count. Every candidate is connectivity-repaired before scoring.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty zone-count range")
    if ks[0] < 2 or ks[-1] > net.n_nodes:
        raise ValueError(f"zone counts must lie in [2, {net.n_nodes}]")
    w = admittance_weights(net)
    m = to_doubly_stochastic(w)
    results = {}
    sweep = {}
    for k in ks:
        labels, coords, mean, per_zone, node_s = partition_k(net, k, seed, w=w, m=m)
        results[k] = (labels, coords, mean, per_zone, node_s)
        sweep[k] = mean
    best = max(sweep.values())
    chosen = max(k for k, v in sweep.items() if v >= best - SCORE_TIE)
    labels, coords, mean, per_zone, node_s = results[chosen]
    label_map = {net.nodes[i].id: int(labels[i]) for i in range(net.n_nodes)}
    return ZonePartition(labels=label_map, k=int(len(np.unique(labels))), score=mean,
                         per_zone_score=per_zone, node_scores=node_s,
                         embedding=coords, sweep=sweep)


__all__ = [
    "ZonePartition",
    "ZoningError",
    "kmeans",
    "partition_k",
    "repair_connectivity",
    "select_zones",
    "silhouette",
    "spectral_embed",
    "to_doubly_stochastic",
    "zones_connected",
]
