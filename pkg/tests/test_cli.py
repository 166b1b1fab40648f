import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from flexneeds.cli import EXIT_CONFIG, EXIT_OK, main
from flexneeds.config import ConfigError, load_config
from flexneeds.fixtures import feeder_path, profiles_path


def write_config(tmp_path: Path, **overrides) -> Path:
    shutil.copy(feeder_path(), tmp_path / "feeder30.json")
    shutil.copy(profiles_path(), tmp_path / "profiles30.csv")
    scen = {
        "count": 4, "seed": 3, "load_error": 0.3, "pv_error": 0.4,
        "correlation": 0.9, "dt_hours": 1.0,
    }
    scen.update(overrides.pop("scenario", {}))
    doc = {
        "paths": {"network": "feeder30.json", "profiles": "profiles30.csv", "output": "out"},
        "scenario": scen,
        "zoning": {"k_min": 2, "k_max": overrides.pop("k_max", 6)},
        "assess": {"cc_levels": overrides.pop("cc_levels", [0.0, 0.5])},
        "study": {
            "tighten_power": overrides.pop("tighten_power", [0.0]),
            "tighten_energy": overrides.pop("tighten_energy", [0.0]),
            "tighten_scenarios": overrides.pop("tighten_scenarios", 4),
        },
        "run": {"workers": 1},
    }
    lines = []
    for section, body in doc.items():
        lines.append(f"[{section}]")
        for key, val in body.items():
            if isinstance(val, str):
                lines.append(f'{key} = "{val}"')
            elif isinstance(val, bool):
                lines.append(f"{key} = {str(val).lower()}")
            elif isinstance(val, list):
                lines.append(f"{key} = {val}")
            else:
                lines.append(f"{key} = {val}")
        lines.append("")
    cfg = tmp_path / "run.toml"
    cfg.write_text("\n".join(lines), encoding="utf-8")
    return cfg


def test_config_roundtrip(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.scenario_count == 4
    assert cfg.cc_levels == (0.0, 0.5)
    assert cfg.k_min == 2 and cfg.k_max == 6


def test_config_validation_errors(tmp_path):
    path = write_config(tmp_path)
    (tmp_path / "feeder30.json").unlink()
    with pytest.raises(ConfigError, match="network"):
        load_config(path)


def test_cli_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[paths]\nnetwork = \"missing.json\"\nprofiles = \"x.csv\"\noutput = \"o\"\n")
    assert main(["--config", str(bad), "zone"]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "absent.toml"), "zone"]) == EXIT_CONFIG


def test_gen_scenarios_writes_cache_and_hits_it(tmp_path, capsys):
    cfg = write_config(tmp_path, scenario={"count": 1})
    assert main(["--config", str(cfg), "gen-scenarios"]) == EXIT_OK
    cache = tmp_path / "out" / "scenarios"
    node9 = cache / "net_load_node_9.csv"
    assert len(node9.read_text().splitlines()) == 1   # J=1 -> single-row CSVs
    stamp = node9.stat().st_mtime_ns
    manifest_before = (cache / "manifest.json").read_bytes()
    assert main(["--config", str(cfg), "gen-scenarios"]) == EXIT_OK
    assert node9.stat().st_mtime_ns == stamp          # cache hit: no rewrite
    assert (cache / "manifest.json").read_bytes() == manifest_before


def test_zero_forecast_error_reproduces_nominal(tmp_path):
    cfg_path = write_config(tmp_path, scenario={"count": 2, "load_error": 0.0, "pv_error": 0.0})
    assert main(["--config", str(cfg_path), "gen-scenarios"]) == EXIT_OK
    from flexneeds.cli import load_inputs, stage_scenarios
    from flexneeds.network import nominal_node_profiles

    cfg = load_config(cfg_path)
    net, profiles = load_inputs(cfg)
    scen = stage_scenarios(cfg, net, profiles)
    p, _ = nominal_node_profiles(net, profiles)
    caps = net.pv_caps_kw()
    nominal_net = p - caps[:, None] * profiles.pv_norm[None, :]
    for j in range(2):
        assert np.max(np.abs(scen.net_kw[:, j, :] - nominal_net)) < 1e-3


def test_zone_command_and_determinism(tmp_path):
    cfg = write_config(tmp_path, k_max=4)
    assert main(["--config", str(cfg), "zone"]) == EXIT_OK
    part1 = (tmp_path / "out" / "partition.json").read_bytes()
    doc = json.loads(part1)
    assert 2 <= doc["k"] <= 4
    assert (tmp_path / "out" / "silhouette.csv").exists()
    assert main(["--config", str(cfg), "zone"]) == EXIT_OK
    assert (tmp_path / "out" / "partition.json").read_bytes() == part1


def test_assess_writes_needs_and_dispatches(tmp_path):
    cfg = write_config(tmp_path)
    rc = main(["--config", str(cfg), "assess"])
    assert rc == EXIT_OK   # shipped feeder solves and validates cleanly
    out = tmp_path / "out"
    manifest = json.loads((out / "dispatches" / "manifest.json").read_text())
    assert manifest["feasible_fraction"] == 1.0
    assert manifest["flagged"] == []
    assert (out / "dispatches" / "scenario_0.csv").exists()
    assert (out / "needs_power_nodal_cc0.0.csv").exists()
    assert (out / "needs_energy_zonal_cc0.5.csv").exists()
    rep = json.loads((out / "variance_report.json").read_text())
    assert rep["zonal"]["std_down_kwh"] <= rep["nodal"]["std_down_kwh"]


def test_study_cc_single_level(tmp_path):
    cfg = write_config(tmp_path, cc_levels=[0.0, 0.1, 0.5])
    rc = main(["--config", str(cfg), "study", "cc"])
    assert rc == EXIT_OK
    rows = (tmp_path / "out" / "cc_sweep.csv").read_text().splitlines()
    header = rows[0].split(",")
    first = dict(zip(header, rows[1].split(",")))
    assert first["cc_level"] == "baseline"
    eps0 = dict(zip(header, rows[2].split(",")))
    assert float(eps0["under_voltage_pct"]) == 0.0
    assert float(eps0["congested_hours_pct"]) == 0.0
    choice = json.loads((tmp_path / "out" / "pareto_choice.json").read_text())
    assert 0.0 <= choice["cc_level"] <= 0.5


def test_study_tighten_origin_cell(tmp_path):
    cfg = write_config(tmp_path)
    rc = main(["--config", str(cfg), "study", "tighten"])
    assert rc == EXIT_OK
    rows = (tmp_path / "out" / "tightening_objective.csv").read_text().splitlines()
    assert rows[1].startswith("0.0,0.0,")
    assert abs(float(rows[1].split(",")[2])) < 1e-6
    assert (tmp_path / "out" / "tightening_feasibility.csv").exists()
    assert (tmp_path / "out" / "tightening_rampup.csv").exists()
    assert (tmp_path / "out" / "tightening_rampdown.csv").exists()


def test_full_report_reproducible(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    cfg_a = write_config(tmp_path / "a", cc_levels=[0.0, 0.1, 0.5])
    cfg_b = write_config(tmp_path / "b", cc_levels=[0.0, 0.1, 0.5])
    assert main(["--config", str(cfg_a), "report"]) == EXIT_OK
    assert main(["--config", str(cfg_b), "report"]) == EXIT_OK
    out_a, out_b = tmp_path / "a" / "out", tmp_path / "b" / "out"
    names = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
    for name in names:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    assert (out_a / "summary.md").exists()
