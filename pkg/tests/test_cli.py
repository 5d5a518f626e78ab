"""End-to-end tests of the doorstate command line.

Each test runs ``main`` on a coarse two-room scenario and checks the exit
status, the "✓"/"✗" summary line and the files written to --out-dir.
"""
import json
from pathlib import Path

import pytest

from doorstate.cli import GRADCHECK_FAILURE, main
from doorstate.thermal import read_sensor_csv

CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture
def scenario_file(temp_output_dir) -> Path:
    """Coarse, short two-room scenario with a two-iteration estimator."""
    path = temp_output_dir / "small.json"
    path.write_text(
        json.dumps(
            {
                "name": "small",
                "plan": str(CONFIGS / "plans" / "two_room.json"),
                "material": {"reynolds": 20.0},
                "horizon": 50.0,
                "dt": 10.0,
                "mesh_h": 0.35,
                "theta_true": [1.0, 0.0],
                "estimator": {"max_iter": 2},
            }
        )
    )
    return path


def run(argv, capsys):
    """Run the CLI; return (exit code, stdout, stderr)."""
    try:
        main(argv)
        code = 0
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.mark.integration
def test_mesh_from_plan(temp_output_dir, capsys):
    out = temp_output_dir / "mesh"
    code, stdout, _ = run(
        ["mesh", "--plan", str(CONFIGS / "plans" / "two_room.json"), "--mesh-h", "0.35", "--out-dir", str(out), "--vtk"],
        capsys,
    )
    assert code == 0
    assert stdout.startswith("✓ Mesh:")
    summary = json.loads((out / "mesh.json").read_text())
    assert summary["doors"] == 2
    assert summary["triangles"] > 0
    assert set(summary["thermostat_sigma"]) == {"1", "2"}
    assert (out / "mesh.vtk").exists()


@pytest.mark.integration
def test_twin_then_estimate_from_file(scenario_file, temp_output_dir, capsys):
    """Test estimating from a recorded CSV reports errors against the truth."""
    code, stdout, _ = run(["twin", "--config", str(scenario_file), "--out-dir", str(temp_output_dir)], capsys)
    assert code == 0
    data = temp_output_dir / "twin.csv"
    assert read_sensor_csv(data).sensor_ids == (1, 2)

    code, stdout, _ = run(
        ["estimate", "--config", str(scenario_file), "--data", str(data), "--out-dir", str(temp_output_dir)],
        capsys,
    )
    assert code == 0
    assert stdout.startswith("✓ ")
    result = json.loads((temp_output_dir / "estimate.json").read_text())
    assert result["method"] == "G"
    assert result["iterations"] <= 2
    assert len(result["theta_hat"]) == 2
    assert "e_theta" in result
    assert result["solve_counts"]["per_iteration"] == [1] * result["iterations"]


@pytest.mark.integration
def test_data_from_other_scenario_rejected(scenario_file, temp_output_dir, capsys):
    code, _, _ = run(["twin", "--config", str(scenario_file), "--out-dir", str(temp_output_dir)], capsys)
    assert code == 0
    other = json.loads(scenario_file.read_text())
    other["theta_true"] = [0.0, 1.0]
    other_file = temp_output_dir / "other.json"
    other_file.write_text(json.dumps(other))

    code, _, stderr = run(
        ["estimate", "--config", str(other_file), "--data", str(temp_output_dir / "twin.csv"), "--out-dir", str(temp_output_dir)],
        capsys,
    )
    assert code == 1
    assert stderr.startswith("✗ Sensor data manifest")


@pytest.mark.integration
def test_baseline(scenario_file, temp_output_dir, capsys):
    code, _, _ = run(["baseline", "--config", str(scenario_file), "--out-dir", str(temp_output_dir)], capsys)
    assert code == 0
    result = json.loads((temp_output_dir / "baseline.json").read_text())
    assert result["method"] == "B"
    assert result["solve_counts"]["per_iteration"] == [4] * result["iterations"]


@pytest.mark.integration
def test_forward(scenario_file, temp_output_dir, capsys):
    code, stdout, _ = run(["forward", "--config", str(scenario_file), "--out-dir", str(temp_output_dir)], capsys)
    assert code == 0
    summary = json.loads((temp_output_dir / "forward.json").read_text())
    assert summary["theta"] == [1.0, 0.0]
    assert summary["divergence_norm"] < 1e-6
    assert (temp_output_dir / "sensors.csv").exists()


@pytest.mark.integration
def test_gradcheck_exit_codes(scenario_file, temp_output_dir, capsys):
    """Test gradcheck exits 0 or with its dedicated failure code, and writes its table."""
    code, stdout, stderr = run(
        ["gradcheck", "--config", str(scenario_file), "--directions", "2", "--out-dir", str(temp_output_dir)],
        capsys,
    )
    assert code in (0, GRADCHECK_FAILURE)
    if code == 0:
        assert stdout.strip().startswith("✓ Gradcheck passed")
    else:
        assert stderr.startswith("✗ Gradcheck tolerance failure")
    assert list(temp_output_dir.glob("gradcheck*.csv"))


def test_missing_config_file(temp_output_dir, capsys):
    code, _, stderr = run(["twin", "--config", str(temp_output_dir / "absent.json")], capsys)
    assert code == 1
    assert stderr.startswith("✗ Scenario file not found")


def test_invalid_plan(temp_output_dir, capsys):
    """Test a plan violating its invariants is reported on one line."""
    plan = json.loads((CONFIGS / "plans" / "two_room.json").read_text())
    plan["doors"][0]["rect"]["x1"] = 4.5
    path = temp_output_dir / "bad.json"
    path.write_text(json.dumps(plan))
    code, _, stderr = run(["mesh", "--plan", str(path), "--out-dir", str(temp_output_dir)], capsys)
    assert code == 1
    assert stderr.startswith("✗ ")
    assert "door-inside-domain" in stderr


def test_command_needs_config(capsys):
    code, _, _ = run(["estimate"], capsys)
    assert code == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["--paper-scale", "mesh"],
        ["mesh", "--paper-scale"],
        ["mesh", "--full-scale"],
    ],
)
def test_full_scale_flag_before_or_after_command(argv, temp_output_dir, capsys):
    """Test the full-scale mesh flag is accepted on either side of the subcommand."""
    plan = str(CONFIGS / "plans" / "two_room.json")
    code, _, _ = run(argv + ["--plan", plan, "--out-dir", str(temp_output_dir)], capsys)
    assert code == 0
    summary = json.loads((temp_output_dir / "mesh.json").read_text())
    assert summary["target_h"] == pytest.approx(0.2)


def test_main_level_flags_survive_subcommand(temp_output_dir, capsys):
    out = temp_output_dir / "top"
    plan = str(CONFIGS / "plans" / "two_room.json")
    code, _, _ = run(["--out-dir", str(out), "--plan", plan, "--mesh-h", "0.35", "mesh"], capsys)
    assert code == 0
    assert json.loads((out / "mesh.json").read_text())["target_h"] == pytest.approx(0.35)


def test_plan_overrides_scenario_plan(scenario_file, temp_output_dir, capsys):
    channel = CONFIGS / "plans" / "channel.json"
    code, _, _ = run(
        ["mesh", "--config", str(scenario_file), "--plan", str(channel), "--mesh-h", "0.25", "--out-dir", str(temp_output_dir)],
        capsys,
    )
    assert code == 0
    summary = json.loads((temp_output_dir / "mesh.json").read_text())
    assert summary["plan"] == str(channel.resolve())
    assert summary["doors"] == 0
