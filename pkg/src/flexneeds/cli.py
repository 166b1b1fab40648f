"""Command-line front end for the day-ahead flexibility pipeline.

Subcommands chain the library stages over a TOML config; every stage
persists its outputs under the config's output directory, keyed by a hash
of the inputs that produced them, so reruns are incremental. Writes are
atomic (temp file + rename).

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 partial
success (some scenarios flagged).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dispatch import BatchResult, FlexBounds, FlexDispatch, Penalties, batch_solve
from .needs import robust_needs, variance_report
from .network import (
    Network,
    ProfileSet,
    load_network_file,
    load_profiles,
    nominal_node_profiles,
    self_sufficiency,
)
from .scenarios import ScenarioSet, compose_net_load, generate_feeder_scenarios
from .studies import cc_sweep, pareto_knee, tightening_sweep
from .zoning import ZonePartition, select_zones

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_json(path: Path, payload) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _fmt_matrix(mat: np.ndarray) -> str:
    return "\n".join(",".join(repr(float(v)) for v in row) for row in mat) + "\n"


def _read_matrix(path: Path) -> np.ndarray:
    rows = [[float(v) for v in line.split(",")] for line in path.read_text().splitlines() if line]
    return np.array(rows)


def load_inputs(cfg: RunConfig) -> tuple[Network, ProfileSet]:
    net = load_network_file(cfg.network_path)
    profiles = load_profiles(cfg.profiles_path, dt_hours=cfg.dt_hours,
                             fe_load=cfg.fe_load, fe_pv=cfg.fe_pv)
    return net, profiles


def node_tan_phi(net: Network, profiles: ProfileSet) -> np.ndarray:
    """Energy-weighted reactive ratio per node from the nominal profiles."""
    p, q = nominal_node_profiles(net, profiles)
    ps = p.sum(axis=1)
    qs = q.sum(axis=1)
    out = np.zeros(net.n_nodes)
    nz = ps > 0
    out[nz] = qs[nz] / ps[nz]
    return out


def stage_scenarios(cfg: RunConfig, net: Network, profiles: ProfileSet) -> ScenarioSet:
    """Generate (or reload) the scenario cache for this config."""
    out = cfg.output_dir / "scenarios"
    manifest_path = out / "manifest.json"
    digest = cfg.scenario_hash()
    if manifest_path.exists():
        meta = json.loads(manifest_path.read_text())
        if meta.get("config_hash") == digest:
            return _load_scenario_cache(net, meta, out)
    scen = generate_feeder_scenarios(net, profiles, cfg.scenario_count, cfg.seed,
                                     rho=cfg.rho, eps=cfg.jitter)
    meta = dict(scen.meta)
    meta["config_hash"] = digest
    for i, node in enumerate(net.nodes):
        _atomic_write(out / f"net_load_node_{node.id}.csv", _fmt_matrix(scen.net_kw[i]))
    _atomic_write(out / "pv_norm.csv", _fmt_matrix(scen.pv_norm))
    _write_json(manifest_path, meta)
    return ScenarioSet(load_kw=scen.load_kw, pv_norm=scen.pv_norm, pv_caps_kw=scen.pv_caps_kw,
                       net_kw=scen.net_kw, seed=scen.seed, meta=meta)


def _load_scenario_cache(net: Network, meta: dict, out: Path) -> ScenarioSet:
    pv = _read_matrix(out / "pv_norm.csv")
    caps = net.pv_caps_kw()
    nets = np.stack([_read_matrix(out / f"net_load_node_{node.id}.csv") for node in net.nodes])
    loads = nets + caps[:, None, None] * pv[None, :, :]
    return ScenarioSet(load_kw=loads, pv_norm=pv, pv_caps_kw=caps, net_kw=nets,
                       seed=int(meta["seed"]), meta=meta)


def subset_scenarios(scen: ScenarioSet, count: int) -> ScenarioSet:
    count = min(count, scen.count)
    meta = dict(scen.meta)
    meta["J"] = count
    return ScenarioSet(load_kw=scen.load_kw[:, :count], pv_norm=scen.pv_norm[:count],
                       pv_caps_kw=scen.pv_caps_kw, net_kw=scen.net_kw[:, :count],
                       seed=scen.seed, meta=meta)


def stage_zone(cfg: RunConfig, net: Network) -> ZonePartition:
    out = cfg.output_dir
    digest = cfg.zoning_hash()
    part_path = out / "partition.json"
    if part_path.exists():
        doc = json.loads(part_path.read_text())
        if doc.get("config_hash") == digest:
            labels = {_coerce_id(net, k): v for k, v in doc["labels"].items()}
            sweep = {int(k): float(v) for k, v in doc["sweep"].items()}
            return ZonePartition(labels=labels, k=int(doc["k"]), score=float(doc["score"]),
                                 per_zone_score={}, node_scores=np.zeros(net.n_nodes),
                                 embedding=np.zeros((net.n_nodes, doc["k"])), sweep=sweep)
    k_max = min(cfg.k_max, net.n_nodes)
    part = select_zones(net, range(cfg.k_min, k_max + 1), seed=cfg.seed)
    doc = {
        "config_hash": digest,
        "k": part.k,
        "score": part.score,
        "labels": {str(k): int(v) for k, v in part.labels.items()},
        "sweep": {str(k): v for k, v in part.sweep.items()},
    }
    _write_json(part_path, doc)
    _atomic_write(out / "silhouette.csv", part.sweep_csv())
    return part


def _coerce_id(net: Network, key: str):
    for node in net.nodes:
        if str(node.id) == key:
            return node.id
    return key


def stage_assess(cfg: RunConfig, net: Network, profiles: ProfileSet,
                 scen: ScenarioSet, part: ZonePartition) -> tuple[BatchResult, dict]:
    """Unbounded batch dispatch, robust needs at each risk level, variance."""
    out = cfg.output_dir
    tan_phi = node_tan_phi(net, profiles)
    n, _, T = scen.net_kw.shape
    batch = batch_solve(net, scen, tan_phi, FlexBounds.unbounded(n, T),
                        Penalties(cfg.ramp_down_price, cfg.ramp_up_price),
                        workers=cfg.effective_workers)
    node_ids = tuple(nd.id for nd in net.nodes)
    zone_of = part.label_array(net)
    disp_dir = out / "dispatches"
    for j, disp in enumerate(batch.dispatches):
        _atomic_write(disp_dir / f"scenario_{j}.csv", _dispatch_csv(net, disp))
    objs = [d.objective for d in batch.dispatches if d.feasible]
    manifest = {
        "config_hash": cfg.assess_hash(),
        "feasible_fraction": batch.feasible_fraction,
        "ac_clean_fraction": batch.ac_clean_fraction,
        "objective_mean": float(np.mean(objs)) if objs else None,
        "objective_max": float(np.max(objs)) if objs else None,
        "flagged": [j for j, d in enumerate(batch.dispatches) if not (d.feasible and d.ac_clean)],
    }
    _write_json(disp_dir / "manifest.json", manifest)

    down = batch.stack_down_kw()
    up = batch.stack_up_kw()
    for cc in cfg.cc_levels:
        nodal = robust_needs(down, up, cfg.dt_hours, cc, node_ids)
        zonal = robust_needs(down, up, cfg.dt_hours, cc, node_ids, zone_of=zone_of)
        tag = f"cc{repr(float(cc))}"
        for label, needs in (("nodal", nodal), ("zonal", zonal)):
            _atomic_write(out / f"needs_power_{label}_{tag}.csv", _csv_text(
                ["entity", "t", "ramp_up_kw", "ramp_down_kw"],
                [
                    (str(e), t, needs.power_up_kw[i, t], needs.power_down_kw[i, t])
                    for i, e in enumerate(needs.entities)
                    for t in range(T)
                ],
            ))
            _atomic_write(out / f"needs_energy_{label}_{tag}.csv", _csv_text(
                ["entity", "ramp_up_kwh", "ramp_down_kwh"],
                [
                    (str(e), needs.energy_up_kwh[i], needs.energy_down_kwh[i])
                    for i, e in enumerate(needs.entities)
                ],
            ))
    report = variance_report(down, up, cfg.dt_hours, zone_of)
    _write_json(out / "variance_report.json", {
        "nodal": {"mean_up_kwh": report.nodal_mean_up_kwh, "mean_down_kwh": report.nodal_mean_down_kwh,
                  "std_up_kwh": report.nodal_std_up_kwh, "std_down_kwh": report.nodal_std_down_kwh},
        "zonal": {"mean_up_kwh": report.zonal_mean_up_kwh, "mean_down_kwh": report.zonal_mean_down_kwh,
                  "std_up_kwh": report.zonal_std_up_kwh, "std_down_kwh": report.zonal_std_down_kwh},
        "std_reduction_up_pct": report.std_reduction_up_pct,
        "std_reduction_down_pct": report.std_reduction_down_pct,
    })
    return batch, manifest


def _dispatch_csv(net: Network, disp: FlexDispatch) -> str:
    T = disp.ramp_down_kw.shape[1]
    rows = [
        (str(node.id), t, disp.ramp_down_kw[i, t], disp.ramp_up_kw[i, t])
        for i, node in enumerate(net.nodes)
        for t in range(T)
    ]
    return _csv_text(["node", "t", "ramp_down_kw", "ramp_up_kw"], rows)


def stage_study_cc(cfg: RunConfig, net: Network, profiles: ProfileSet,
                   scen: ScenarioSet, batch: BatchResult) -> float:
    out = cfg.output_dir
    tan_phi = node_tan_phi(net, profiles)
    rows, baseline = cc_sweep(net, scen, tan_phi, batch, cfg.cc_levels, cfg.dt_hours)
    table = [["baseline", baseline.as_row()["under_voltage_pct"], baseline.as_row()["over_voltage_pct"],
              baseline.as_row()["thermal_pct"], baseline.as_row()["congested_hours_pct"],
              baseline.as_row()["unresolved_pct"], 0.0]]
    for r in rows:
        table.append([repr(r.cc_level), r.under_voltage_pct, r.over_voltage_pct, r.thermal_pct,
                      r.congested_hours_pct, r.unresolved_pct, r.needs_energy_kwh])
    _atomic_write(out / "cc_sweep.csv", _csv_text(
        ["cc_level", "under_voltage_pct", "over_voltage_pct", "thermal_pct",
         "congested_hours_pct", "unresolved_pct", "needs_energy_kwh"], table))
    knee = pareto_knee(rows)
    _atomic_write(out / "pareto.csv", _csv_text(
        ["cc_level", "needs_energy_kwh", "congested_hours_pct"],
        [(repr(r.cc_level), r.needs_energy_kwh, r.congested_hours_pct) for r in rows]))
    _write_json(out / "pareto_choice.json", {"cc_level": knee})
    return knee


def stage_study_tighten(cfg: RunConfig, net: Network, profiles: ProfileSet, scen: ScenarioSet) -> None:
    out = cfg.output_dir
    tan_phi = node_tan_phi(net, profiles)
    sub = subset_scenarios(scen, cfg.tighten_scenario_count)
    cells = tightening_sweep(net, sub, tan_phi, Penalties(cfg.ramp_down_price, cfg.ramp_up_price),
                             cfg.tighten_power, cfg.tighten_energy, workers=cfg.effective_workers)
    grids = {
        "tightening_objective.csv": lambda c: c.objective_increase_pct,
        "tightening_feasibility.csv": lambda c: c.feasible_pct,
        "tightening_rampup.csv": lambda c: c.ramp_up_energy_kwh,
        "tightening_rampdown.csv": lambda c: c.ramp_down_energy_kwh,
    }
    for name, pick in grids.items():
        rows = [
            (repr(c.alpha_power), repr(c.alpha_energy), pick(c))
            for c in cells
        ]
        _atomic_write(out / name, _csv_text(["alpha_power", "alpha_energy", "value"], rows))


def stage_report(cfg: RunConfig, net: Network, profiles: ProfileSet, part: ZonePartition,
                 manifest: dict, knee: float | None) -> None:
    ss = self_sufficiency(profiles, net.pv_caps_kw())
    lines = [
        "# Flexibility needs assessment report",
        "",
        f"- feeder: {cfg.network_path.name} ({net.n_nodes} nodes, {len(net.branches)} branches)",
        f"- self-sufficiency: {100 * ss:.2f} %",
        f"- zones: {part.k} (mean silhouette {part.score:.4f})",
        f"- scenarios: {cfg.scenario_count} (seed {cfg.seed})",
        f"- feasible dispatch fraction: {100 * manifest['feasible_fraction']:.2f} %",
        f"- AC-clean fraction: {100 * manifest['ac_clean_fraction']:.2f} %",
    ]
    if knee is not None:
        lines.append(f"- Pareto risk level: {knee}")
    lines.append("")
    lines.append("Outputs: scenario cache, partition.json, silhouette.csv, dispatches/,")
    lines.append("needs_*.csv, variance_report.json, cc_sweep.csv, pareto.csv,")
    lines.append("tightening_*.csv in this directory.")
    _atomic_write(cfg.output_dir / "summary.md", "\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="flexneeds",
                                     description="Day-ahead robust flexibility needs for radial feeders")
    parser.add_argument("--config", "-c", required=True, help="TOML run configuration")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-scenarios", help="generate and cache load/PV scenarios")
    sub.add_parser("zone", help="partition the feeder into electrical zones")
    sub.add_parser("assess", help="dispatch all scenarios and extract robust needs")
    study = sub.add_parser("study", help="run a case study")
    study.add_argument("which", choices=["cc", "tighten"])
    sub.add_parser("report", help="run the full pipeline and bundle a summary")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        net, profiles = load_inputs(cfg)
        if args.command == "gen-scenarios":
            scen = stage_scenarios(cfg, net, profiles)
            print(f"cached {scen.count} scenarios x {scen.n_steps} steps")
            return EXIT_OK
        if args.command == "zone":
            part = stage_zone(cfg, net)
            print(f"{part.k} zones, mean silhouette {part.score:.4f}")
            return EXIT_OK
        if args.command == "assess":
            scen = stage_scenarios(cfg, net, profiles)
            part = stage_zone(cfg, net)
            batch, manifest = stage_assess(cfg, net, profiles, scen, part)
            print(f"feasible {100 * manifest['feasible_fraction']:.1f} %, "
                  f"AC-clean {100 * manifest['ac_clean_fraction']:.1f} %")
            return EXIT_PARTIAL if manifest["flagged"] else EXIT_OK
        if args.command == "study":
            scen = stage_scenarios(cfg, net, profiles)
            if args.which == "cc":
                part = stage_zone(cfg, net)
                batch, manifest = stage_assess(cfg, net, profiles, scen, part)
                knee = stage_study_cc(cfg, net, profiles, scen, batch)
                print(f"Pareto risk level: {knee}")
                return EXIT_PARTIAL if manifest["flagged"] else EXIT_OK
            stage_study_tighten(cfg, net, profiles, scen)
            print("tightening grids written")
            return EXIT_OK
        # report: full pipeline
        scen = stage_scenarios(cfg, net, profiles)
        part = stage_zone(cfg, net)
        batch, manifest = stage_assess(cfg, net, profiles, scen, part)
        knee = stage_study_cc(cfg, net, profiles, scen, batch)
        stage_study_tighten(cfg, net, profiles, scen)
        stage_report(cfg, net, profiles, part, manifest, knee)
        print(f"report written to {cfg.output_dir / 'summary.md'}")
        return EXIT_PARTIAL if manifest["flagged"] else EXIT_OK
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
