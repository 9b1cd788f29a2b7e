import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from collapselab import cli

CONFIGS = Path(cli.__file__).parent / "configs"


def load(name, **overrides):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    params = overrides.pop("parameters", None)
    cfg.update(overrides)
    if params:
        cfg["parameters"] = {**cfg.get("parameters", {}), **params}
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def result_bytes(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("COLLAPSELAB_OUTPUT_ROOT", str(tmp_path / "root"))


def test_verify_bundled_configs(capsys):
    for p in sorted(CONFIGS.glob("*.json")):
        assert cli.main(["verify", str(p)]) == 0, p.name
    assert "config is valid" in capsys.readouterr().out


def test_verify_writes_nothing(tmp_path):
    cfg = load("massshell", output_dir=str(tmp_path / "nothing"))
    assert cli.main(["verify", write(tmp_path, cfg)]) == 0
    assert not (tmp_path / "nothing").exists()


def test_negative_mass_names_field(tmp_path, capsys):
    cfg = load("massshell", parameters={"mass": -1.0})
    assert cli.main(["run", write(tmp_path, cfg)]) == 1
    assert "mass" in capsys.readouterr().err
    assert cli.main(["verify", write(tmp_path, cfg)]) == 1


def test_missing_experiment(tmp_path, capsys):
    cfg = load("massshell")
    del cfg["experiment"]
    assert cli.main(["verify", write(tmp_path, cfg)]) == 1
    assert "experiment" in capsys.readouterr().err


def test_slope_violation_names_site(tmp_path, capsys):
    cfg = load("relnet")
    cfg["parameters"]["scenario"]["surfaces"] = [[0, 0, 0, 0], [0, 2, 0, 0]]
    assert cli.main(["verify", write(tmp_path, cfg)]) == 1
    err = capsys.readouterr().err
    assert "site index 0" in err
    assert "surfaces[1]" in err


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda c: c.update(extra=1), "extra"),
        (lambda c: c["parameters"].update(bogus=1), "bogus"),
        (lambda c: c.update(seed=-3), "seed"),
        (lambda c: c.update(workers=0), "workers"),
        (lambda c: c["parameters"].update(cutoffs=[10, 5]), "cutoffs"),
        (lambda c: c["parameters"].update(spatial_dim=2), "spatial_dim"),
        (lambda c: c["parameters"].update(interval=[1, -1]), "interval"),
    ],
)
def test_validation_messages(tmp_path, capsys, mutate, field):
    cfg = load("massshell")
    mutate(cfg)
    assert cli.main(["verify", write(tmp_path, cfg)]) == 1
    assert field in capsys.readouterr().err


def test_bad_family_and_state(tmp_path, capsys):
    cfg = load("unravel", parameters={"family": "nonsense:1"})
    assert cli.main(["verify", write(tmp_path, cfg)]) == 1
    assert "parameters.family" in capsys.readouterr().err
    cfg = load("unravel", parameters={"initial_state": "ghz:3"})
    assert cli.main(["run", write(tmp_path, cfg)]) == 1
    assert "initial_state" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert cli.main(["verify", str(tmp_path / "missing.json")]) == 1
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["verify", str(p)]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_internal_inconsistency_exit_2(tmp_path, capsys):
    cfg = load("unravel", parameters={"zero_branch_epsilon": 2.0, "n_trajectories": 10})
    assert cli.main(["run", write(tmp_path, cfg)]) == 2
    assert "inconsistency" in capsys.readouterr().err


def test_massshell_run_outputs(tmp_path):
    assert cli.main(["run", str(CONFIGS / "massshell.json")]) == 0
    out = tmp_path / "root" / "out" / "massshell"
    rows = list(csv.DictReader((out / "scan.csv").open()))
    assert all(float(r["relative_error"]) <= 1e-6 for r in rows)
    assert {"omega", "omega_closed_form"} <= set(rows[0])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["parameters"]["mass"] == 1.0
    assert "relative_error" in manifest["files"]["scan.csv"]
    assert "omega" in manifest["files"]["scan.csv"]
    assert (out / "summary.txt").read_text().startswith("experiment: massshell")


def test_nogo_sweep_summary(tmp_path):
    assert cli.main(["run", str(CONFIGS / "nogo-sweep.json")]) == 0
    out = tmp_path / "root" / "out" / "nogo-sweep"
    row = next(csv.DictReader((out / "summary.csv").open()))
    assert row["n_instances"] == "1000"
    assert row["counterexamples"] == "0"
    lines = (out / "instances.jsonl").read_text().splitlines()
    assert len(lines) == 1000
    assert {"instance_seed", "purity", "residuals", "verdict"} <= set(json.loads(lines[0]))


@pytest.mark.parametrize("name", ["unravel", "relnet", "massshell", "vacuum-energy"])
def test_rerun_byte_identical(tmp_path, name):
    cfg = load(name)
    if name == "unravel":
        cfg["parameters"]["n_trajectories"] = 2000
    out = tmp_path / "root" / cfg["output_dir"]
    assert cli.main(["run", write(tmp_path, cfg)]) == 0
    first = result_bytes(out)
    assert cli.main(["run", write(tmp_path, cfg)]) == 0
    assert result_bytes(out) == first


def test_workers_do_not_change_bytes(tmp_path):
    base = load("nogo-sweep", parameters={"n_instances": 40})
    a = dict(base, output_dir="a", workers=1)
    b = dict(base, output_dir="b", workers=3)
    assert cli.main(["run", write(tmp_path, a, "a.json")]) == 0
    assert cli.main(["run", write(tmp_path, b, "b.json")]) == 0
    ra, rb = result_bytes(tmp_path / "root" / "a"), result_bytes(tmp_path / "root" / "b")
    assert ra["instances.jsonl"] == rb["instances.jsonl"]
    assert ra["summary.csv"] == rb["summary.csv"]
    u = load("unravel", parameters={"n_trajectories": 70000})
    assert cli.main(["run", write(tmp_path, dict(u, output_dir="u1", workers=1), "u1.json")]) == 0
    assert cli.main(["run", write(tmp_path, dict(u, output_dir="u2", workers=2), "u2.json")]) == 0
    r1, r2 = result_bytes(tmp_path / "root" / "u1"), result_bytes(tmp_path / "root" / "u2")
    assert r1["ensemble.json"] == r2["ensemble.json"]
    assert r1["trajectories.jsonl"] == r2["trajectories.jsonl"]


def test_relnet_outputs(tmp_path):
    assert cli.main(["run", str(CONFIGS / "relnet.json")]) == 0
    out = tmp_path / "root" / "out" / "relnet"
    rows = list(csv.DictReader((out / "no_signaling.csv").open()))
    assert all(float(r["deviation"]) <= 1e-12 for r in rows if r["status"] == "ok")
    assert json.loads((out / "commutation.json").read_text())["max_spacelike_commutator_norm"] == 0.0
    assert len((out / "trajectories.jsonl").read_text().splitlines()) == 20


def test_console_entry_point(tmp_path):
    cfg = load("massshell", parameters={"mass": 0})
    proc = subprocess.run([sys.executable, "-m", "collapselab", "verify", write(tmp_path, cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "parameters.mass" in proc.stderr
