"""Correlated day-ahead scenario generation.

Point forecasts become the mean of a multivariate Gaussian whose standard
deviation per step is the forecast-error fraction of the mean divided by
1.96 (so the error band covers ~95% of draws). Temporal correlation uses an
exponential kernel; a diagonal jitter keeps the covariance positive definite
for the Cholesky factor. Load and PV are sampled separately: load draws are
per node, the normalized PV draw is shared by every generator on the feeder.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Network, ProfileSet, nominal_node_profiles

#: 95% two-sided normal quantile tying forecast error to standard deviation
ERROR_TO_STD = 1.96


class CholeskyError(ValueError):
    """Covariance is not positive definite; carries the failing pivot."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"Cholesky pivot {pivot} is non-positive ({value:.3e}); matrix is not PD")


@dataclass(frozen=True)
class CovarianceSpec:
    """Mean vector plus covariance Sigma_ij = s_i s_j rho^|i-j| + eps*1{i=j}."""

    mu: np.ndarray
    sigma: np.ndarray
    rho: float
    eps: float

    @property
    def n_steps(self) -> int:
        return len(self.mu)

    def matrix(self) -> np.ndarray:
        idx = np.arange(self.n_steps)
        kernel = self.rho ** np.abs(idx[:, None] - idx[None, :]) if self.rho > 0 else np.eye(self.n_steps)
        cov = np.outer(self.sigma, self.sigma) * kernel
        return cov + self.eps * np.eye(self.n_steps)


def default_jitter(sigma: np.ndarray) -> float:
    """1e-8 of the mean diagonal magnitude, floored for all-zero spreads."""
    return max(1e-8 * float(np.mean(sigma**2)), 1e-12)


def build_covariance(mu, fe: float, rho: float, eps: float | None = None) -> CovarianceSpec:
    mu = np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ValueError("mean vector has non-finite entries")
    if fe < 0:
        raise ValueError("forecast error must be nonnegative")
    if not 0.0 <= rho < 1.0:
        raise ValueError("temporal correlation must lie in [0, 1)")
    sigma = fe * np.abs(mu) / ERROR_TO_STD
    if eps is None:
        eps = default_jitter(sigma)
    if eps <= 0:
        raise ValueError("jitter must be positive")
    return CovarianceSpec(mu=mu, sigma=sigma, rho=float(rho), eps=float(eps))


def cholesky(spec_or_matrix) -> np.ndarray:
    """Lower-triangular L with L L^T equal to the covariance.

    Plain row-oriented decomposition; failure reports which pivot went
    non-positive instead of a bare linear-algebra error.
    """
    if isinstance(spec_or_matrix, CovarianceSpec):
        a = spec_or_matrix.matrix()
    else:
        a = np.asarray(spec_or_matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("covariance must be square")
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise CholeskyError(j, float(d))
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def generate(mu, L: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` scenarios (rows) of ``mu + L z`` with seeded PCG64."""
    mu = np.asarray(mu, dtype=float)
    if count < 1:
        raise ValueError("scenario count must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(size=(count, len(mu)))
    return mu[None, :] + z @ L.T


@dataclass(frozen=True)
class ScenarioSet:
    """Per-node load scenarios plus the shared PV draw and derived net load.

    ``load_kw`` has shape (nodes, J, T); ``pv_norm`` (J, T); ``net_kw`` is
    ``load - cap * pv`` per node. Loads are clamped at zero, PV to [0, 1].
    """

    load_kw: np.ndarray
    pv_norm: np.ndarray
    pv_caps_kw: np.ndarray
    net_kw: np.ndarray
    seed: int
    meta: dict

    @property
    def count(self) -> int:
        return self.pv_norm.shape[0]

    @property
    def n_steps(self) -> int:
        return self.pv_norm.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.load_kw.shape[0]


def compose_net_load(loads: np.ndarray, pv_norm: np.ndarray, pv_caps_kw, seed: int = 0, meta: dict | None = None) -> ScenarioSet:
    """Clamp raw draws and combine them into nodal net-load scenarios."""
    loads = np.asarray(loads, dtype=float)
    pv_norm = np.asarray(pv_norm, dtype=float)
    caps = np.asarray(pv_caps_kw, dtype=float)
    if loads.ndim != 3 or pv_norm.ndim != 2:
        raise ValueError("expected loads (nodes, J, T) and pv (J, T)")
    n, J, T = loads.shape
    if pv_norm.shape != (J, T):
        raise ValueError(f"pv scenarios {pv_norm.shape} do not match loads ({J}, {T})")
    if caps.shape != (n,):
        raise ValueError(f"pv capacity vector has length {caps.shape}, expected ({n},)")
    load_c = np.maximum(loads, 0.0)
    pv_c = np.clip(pv_norm, 0.0, 1.0)
    net = load_c - caps[:, None, None] * pv_c[None, :, :]
    return ScenarioSet(load_kw=load_c, pv_norm=pv_c, pv_caps_kw=caps, net_kw=net,
                       seed=seed, meta=dict(meta or {}))


def node_seed(seed: int, node_id) -> int:
    """Derived stream seed: base seed XOR the node id (hashed when not int)."""
    if isinstance(node_id, (int, np.integer)) and not isinstance(node_id, bool):
        return int(seed) ^ int(node_id)
    return int(seed) ^ zlib.crc32(str(node_id).encode())


PV_STREAM = "pv"


def generate_feeder_scenarios(net: Network, profiles: ProfileSet, count: int, seed: int,
                              rho: float = 0.9, eps: float | None = None) -> ScenarioSet:
    """Full scenario pipeline for a feeder: nodal loads plus shared PV."""
    p_node, _ = nominal_node_profiles(net, profiles)
    n, T = p_node.shape
    loads = np.empty((n, count, T))
    for i in range(n):
        mu = p_node[i]
        if not np.any(mu):
            loads[i] = 0.0
            continue
        spec = build_covariance(mu, profiles.fe_load, rho, eps)
        loads[i] = generate(mu, cholesky(spec), count, node_seed(seed, net.nodes[i].id))
    pv_spec = build_covariance(profiles.pv_norm, profiles.fe_pv, rho, eps)
    pv = generate(profiles.pv_norm, cholesky(pv_spec), count, node_seed(seed, PV_STREAM))
    meta = {
        "seed": seed,
        "J": count,
        "T": T,
        "fe_L": profiles.fe_load,
        "fe_PV": profiles.fe_pv,
        "rho": rho,
        "eps": eps if eps is not None else "auto",
        "dt_hours": profiles.dt_hours,
    }
    return compose_net_load(loads, pv, net.pv_caps_kw(), seed=seed, meta=meta)


def write_scenario_cache(scen: ScenarioSet, net: Network, out_dir) -> None:
    """One CSV per node (J rows x T cols) plus a manifest JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, node in enumerate(net.nodes):
        _write_matrix(out / f"net_load_node_{node.id}.csv", scen.net_kw[i])
    _write_matrix(out / "pv_norm.csv", scen.pv_norm)
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(scen.meta, sort_keys=True, indent=2), encoding="utf-8")
    tmp.replace(out / "manifest.json")


def _write_matrix(path: Path, mat: np.ndarray) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for row in mat:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")
    tmp.replace(path)


__all__ = [
    "ERROR_TO_STD",
    "CholeskyError",
    "CovarianceSpec",
    "ScenarioSet",
    "build_covariance",
    "cholesky",
    "compose_net_load",
    "default_jitter",
    "generate",
    "generate_feeder_scenarios",
    "node_seed",
    "write_scenario_cache",
]
