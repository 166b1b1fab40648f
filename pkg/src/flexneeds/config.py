"""Run configuration: one flat-section TOML document.

Every pipeline parameter lives here so a run is reproducible from the file
plus its referenced inputs. Stage outputs are content-addressed by a hash of
the relevant keys and input files, which makes reruns incremental.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    network_path: Path
    profiles_path: Path
    output_dir: Path
    scenario_count: int = 1000
    seed: int = 1
    fe_load: float = 0.30
    fe_pv: float = 0.40
    rho: float = 0.9
    jitter: float | None = None
    dt_hours: float = 1.0
    cc_levels: tuple[float, ...] = (0.0, 0.01, 0.05, 0.1, 0.2, 0.4)
    k_min: int = 2
    k_max: int = 15
    ramp_down_price: float = 1.0
    ramp_up_price: float = 1.0
    tighten_power: tuple[float, ...] = field(default_factory=lambda: tuple(i / 10 for i in range(7)))
    tighten_energy: tuple[float, ...] = field(default_factory=lambda: tuple(i / 10 for i in range(9)))
    tighten_scenario_count: int = 100
    workers: int = 0  # 0 = one worker per available core

    @property
    def effective_workers(self) -> int:
        import os

        return self.workers if self.workers >= 1 else (os.cpu_count() or 1)

    def validate(self) -> None:
        if not self.network_path.exists():
            raise ConfigError(f"network file not found: {self.network_path}")
        if not self.profiles_path.exists():
            raise ConfigError(f"profiles file not found: {self.profiles_path}")
        if self.scenario_count < 1:
            raise ConfigError("scenario count must be at least 1")
        if self.tighten_scenario_count < 1:
            raise ConfigError("tightening scenario count must be at least 1")
        if not 0 <= self.rho < 1:
            raise ConfigError("correlation must lie in [0, 1)")
        if self.fe_load < 0 or self.fe_pv < 0:
            raise ConfigError("forecast errors must be nonnegative")
        if self.dt_hours <= 0:
            raise ConfigError("dt_hours must be positive")
        if self.k_min < 2 or self.k_min > self.k_max:
            raise ConfigError("zone count range must satisfy 2 <= k_min <= k_max")
        for cc in self.cc_levels:
            if not 0 <= cc <= 1:
                raise ConfigError(f"chance-constraint level {cc} outside [0, 1]")
        for a in self.tighten_power:
            if not 0 <= a <= 0.6:
                raise ConfigError(f"power tightening {a} outside [0, 0.6]")
        for a in self.tighten_energy:
            if not 0 <= a <= 0.8:
                raise ConfigError(f"energy tightening {a} outside [0, 0.8]")
        if self.ramp_down_price <= 0 or self.ramp_up_price <= 0:
            raise ConfigError("penalty prices must be positive")
        if self.workers < 0:
            raise ConfigError("workers must be nonnegative (0 = auto)")

    def scenario_hash(self) -> str:
        return _digest({
            "network": _file_digest(self.network_path),
            "profiles": _file_digest(self.profiles_path),
            "J": self.scenario_count,
            "seed": self.seed,
            "fe_load": self.fe_load,
            "fe_pv": self.fe_pv,
            "rho": self.rho,
            "jitter": self.jitter,
            "dt_hours": self.dt_hours,
        })

    def zoning_hash(self) -> str:
        return _digest({
            "network": _file_digest(self.network_path),
            "k_min": self.k_min,
            "k_max": self.k_max,
            "seed": self.seed,
        })

    def assess_hash(self) -> str:
        return _digest({
            "scenarios": self.scenario_hash(),
            "zoning": self.zoning_hash(),
            "cc_levels": list(self.cc_levels),
            "ramp_down_price": self.ramp_down_price,
            "ramp_up_price": self.ramp_up_price,
        })


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e
    try:
        paths = doc["paths"]
        scen = doc.get("scenario", {})
        zon = doc.get("zoning", {})
        assess = doc.get("assess", {})
        study = doc.get("study", {})
        run = doc.get("run", {})
        root = path.parent
        cfg = RunConfig(
            network_path=root / paths["network"],
            profiles_path=root / paths["profiles"],
            output_dir=root / paths["output"],
            scenario_count=int(scen.get("count", 1000)),
            seed=int(scen.get("seed", 1)),
            fe_load=float(scen.get("load_error", 0.30)),
            fe_pv=float(scen.get("pv_error", 0.40)),
            rho=float(scen.get("correlation", 0.9)),
            jitter=float(scen["jitter"]) if "jitter" in scen else None,
            dt_hours=float(scen.get("dt_hours", 1.0)),
            cc_levels=tuple(float(c) for c in assess.get("cc_levels", (0.0, 0.01, 0.05, 0.1, 0.2, 0.4))),
            k_min=int(zon.get("k_min", 2)),
            k_max=int(zon.get("k_max", 15)),
            ramp_down_price=float(assess.get("ramp_down_price", 1.0)),
            ramp_up_price=float(assess.get("ramp_up_price", 1.0)),
            tighten_power=tuple(float(a) for a in study.get("tighten_power", [i / 10 for i in range(7)])),
            tighten_energy=tuple(float(a) for a in study.get("tighten_energy", [i / 10 for i in range(9)])),
            tighten_scenario_count=int(study.get("tighten_scenarios", 100)),
            workers=int(run.get("workers", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"config is missing or mistypes a key: {e}") from e
    cfg.validate()
    return cfg


__all__ = ["ConfigError", "RunConfig", "load_config"]
