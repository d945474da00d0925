import csv
import json

import pytest

SHORT = ["--integrator.n_steps", "50", "--ensemble.n_traj", "2"]


def _csv(path):
    with path.open() as f:
        return list(csv.DictReader(f))


def test_simulate_isokinetic_preset(run_cli, tmp_path):
    code, out, err = run_cli(["simulate", "--preset", "isokinetic-harmonic", *SHORT, "--out", str(tmp_path)])
    assert code == 0, err
    payload = json.loads(out)
    assert payload["n_traj"] == 2
    assert payload["n_samples"] == 2 * 6
    assert payload["max_constraint_drift"] < 1e-8
    rows = _csv(tmp_path / "trajectory.csv")
    assert len(rows) == payload["n_samples"]
    assert {"traj", "t", "q0", "p5", "H", "f", "Omega", "P"} <= set(rows[0])
    assert len((tmp_path / "summaries.jsonl").read_text().splitlines()) == 2
    assert (tmp_path / "config.yaml").exists()


def test_simulate_is_reproducible(run_cli, tmp_path):
    for name in ("a", "b"):
        code, _, err = run_cli(
            ["simulate", "--preset", "isokinetic-harmonic", *SHORT, "--seed", "11", "--out", str(tmp_path / name)]
        )
        assert code == 0, err
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_invalid_config_exits_2_without_output(run_cli, tmp_path):
    code, out, _ = run_cli(
        ["simulate", "--preset", "isokinetic-harmonic", "--integrator.dt", "-1", "--out", str(tmp_path)]
    )
    assert code == 2
    envelope = json.loads(out)
    assert envelope["error"] == "ConfigError"
    assert envelope["field"] == "integrator.dt"
    assert not (tmp_path / "trajectory.csv").exists()


def test_bad_config_file_reports_the_line(run_cli, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("model:\n  dim: [1, 2\n")
    code, out, _ = run_cli(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    assert json.loads(out)["line"] is not None


def test_verify_without_checks_is_an_empty_pass(run_cli, tmp_path):
    args = ["verify", "--preset", "mismatched-breit-wigner", "--no-verify.closure", "--no-verify.stationarity"]
    code, out, err = run_cli([*args, "--out", str(tmp_path)])
    assert code == 0, err
    assert json.loads(out) == {"passed": True, "checks": []}
    assert not (tmp_path / "verify.json").exists()


def test_verify_negative_control_fails(run_cli, tmp_path):
    code, out, err = run_cli(["verify", "--preset", "mismatched-breit-wigner", "--out", str(tmp_path)])
    assert code == 4
    report = json.loads(out)
    by_name = {c["name"]: c for c in report["checks"]}
    assert by_name["closure"]["passed"] is True
    assert by_name["stationarity"]["passed"] is False
    assert "stationarity" in err
    assert json.loads((tmp_path / "verify.json").read_text()) == report


@pytest.mark.parametrize(
    "preset",
    [
        "isokinetic-harmonic",
        "canonical-dissipative-quartic",
        "breit-wigner-windowed",
        "fermi-bose-fermi",
        "fermi-bose-bose",
    ],
)
def test_verify_passes_for_every_shipped_preset(run_cli, tmp_path, preset):
    code, out, err = run_cli(["verify", "--preset", preset, "--out", str(tmp_path)])
    assert code == 0, err
    report = json.loads(out)
    assert report["passed"] is True
    assert report["checks"]
    assert all(c["passed"] for c in report["checks"] if c["asserted"])


@pytest.mark.parametrize("preset", ["fermi-bose-fermi", "fermi-bose-bose"])
def test_fermi_bose_verify_reports_the_occupation_sign(run_cli, tmp_path, preset):
    code, out, err = run_cli(["verify", "--preset", preset, "--no-verify.closure", "--out", str(tmp_path)])
    assert code == 0, err
    (check,) = json.loads(out)["checks"]
    assert check["name"] == "antiderivative"
    report = check["details"]["beta"]["fermi_bose"]
    assert report["target_density_mismatch"] < 1e-10
    assert report["exp_plus_form_consistent"] is False
    assert report["exp_plus_form_antiderivative_mismatch"] > 1e-8


def test_thermo_canonical_energy(run_cli, tmp_path):
    code, out, err = run_cli(["thermo", "--preset", "isokinetic-harmonic", "--out", str(tmp_path)])
    assert code == 0, err
    rows = _csv(tmp_path / "thermo.csv")
    assert len(rows) == 7
    for row in rows:
        assert float(row["U"]) == pytest.approx(6 * float(row["kT"]), rel=1e-8)
    assert max(json.loads(out)["residuals"]["relative"][1:-1]) < 2e-2


def test_thermo_single_point_has_no_residuals(run_cli, tmp_path):
    code, out, err = run_cli(
        ["thermo", "--preset", "isokinetic-harmonic", "--thermo.sweep.n_points", "1", "--out", str(tmp_path)]
    )
    assert code == 0, err
    payload = json.loads(out)
    assert len(payload["points"]) == 1
    assert payload["residuals"] is None


def test_sweep_writes_one_row_per_point(run_cli, tmp_path):
    args = ["sweep", "--preset", "isokinetic-harmonic", *SHORT, "--thermo.sweep.n_points", "2"]
    code, out, err = run_cli([*args, "--out", str(tmp_path)])
    assert code == 0, err
    points = json.loads(out)["points"]
    assert [p["kT"] for p in points] == [0.5, 2.0]
    assert [p["U"] for p in points] == pytest.approx([3.0, 12.0])
    assert len(_csv(tmp_path / "sweep.csv")) == 2


def test_schema_files(run_cli, tmp_path):
    code, _, err = run_cli(["schema", "--out", str(tmp_path / "fewtherm")])
    assert code == 0, err
    schema = json.loads((tmp_path / "fewtherm.schema.json").read_text())
    assert "beta" in schema["properties"]
    assert (tmp_path / "fewtherm.json").exists()
    assert (tmp_path / "fewtherm.yml").exists()


def test_help_lists_commands(run_cli):
    code, out, _ = run_cli(["--help"])
    assert code == 0
    for name in ("simulate", "verify", "thermo", "sweep", "schema"):
        assert name in out
