import csv
import json

import numpy as np
import pytest

from zklab.cli import build_parser, experiment_spec, main, read_config, simulation_config
from zklab.errors import InvalidInputError
from zklab.norms import Trajectory
from zklab.snapshot import load_snapshot

SMALL_RUN = "T = 0.2\nsnapshots = 4\namplitude = 0.5  # small enough for dt by accuracy\n"
SMALL_GRID = ["--grid", "64x64", "--box", "16"]


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# smoke run\n" + SMALL_RUN)
    return p


# --- config files -------------------------------------------------------------------


def test_read_config_strips_comments(config):
    assert read_config(config) == {"T": "0.2", "snapshots": "4", "amplitude": "0.5"}
    assert read_config(None) == {}


@pytest.mark.parametrize("text", ["[run]\nT = 1\n", "T = 1\nT = 2\n", "just words\n"])
def test_read_config_rejects_malformed(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(InvalidInputError):
        read_config(p)


def test_simulation_config_types_and_overrides():
    cfg = simulation_config({"T": "0.5", "dealias": "no", "dt": "none", "scheme": "picard"}, (64, 32), 9.0)
    assert (cfg.T, cfg.dealias, cfg.dt, cfg.scheme) == (0.5, False, None, "picard")
    assert (cfg.nx, cfg.ny, cfg.half_length_x, cfg.half_length_y) == (64, 32, 9.0, 9.0)


@pytest.mark.parametrize("raw", [{"colour": "red"}, {"nx": "abc"}, {"dealias": "maybe"}, {"T": "-1"}])
def test_simulation_config_rejects_bad_values(raw):
    with pytest.raises(InvalidInputError):
        simulation_config(raw)


def test_experiment_spec_grid_override():
    spec = experiment_spec("unitarity", {"n_fields": "3"}, 5, (128, 128), 16.0)
    assert spec.parameters == {"n_fields": 3, "nx": 128, "ny": 128, "half_length": 16.0}
    with pytest.raises(InvalidInputError):
        experiment_spec("decay", {}, 0, (64, 64), None)


def test_parser_rejects_bad_grid_and_seed():
    parser = build_parser()
    for argv in (["simulate", "--grid", "64by64"], ["simulate", "--seed", "-3"], ["verify", "nonsense"]):
        with pytest.raises(SystemExit) as info:
            parser.parse_args(argv)
        assert info.value.code == 2


# --- commands -------------------------------------------------------------------------


def test_simulate_writes_trajectory_and_trace(tmp_path, config, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(config), "--out", str(out), "--json", *SMALL_GRID]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["snapshots"] == 5 and payload["T"] == pytest.approx(0.2)
    assert payload["l2_final"] == pytest.approx(payload["l2_initial"], rel=1e-8)
    traj = load_snapshot(out / "simulate.zkf")
    assert isinstance(traj, Trajectory) and traj.grid.nx == 64
    header = next(csv.reader((out / "simulate_trace.csv").open()))
    assert header == ["t", "l2", "mass", "hs(1)", "weighted(truncated:N=8,s=2)"]


def test_picard_scheme_runs(tmp_path, capsys):
    p = tmp_path / "p.cfg"
    p.write_text("scheme = picard\nform = symmetrized\nT = 0.1\nsnapshots = 4\nsubsteps = 16\namplitude = 0.1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path), *SMALL_GRID]) == 0
    assert "converged=True" in capsys.readouterr().out


def test_propagate_matches_free_group(tmp_path, config, capsys):
    assert main(["propagate", "--config", str(config), "--out", str(tmp_path), "--json", *SMALL_GRID]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(payload["l2_final"] / payload["l2_initial"] - 1) < 1e-12


def test_norms_of_saved_trajectory(tmp_path, config, capsys):
    main(["simulate", "--config", str(config), "--out", str(tmp_path), *SMALL_GRID])
    capsys.readouterr()
    assert main(["norms", str(tmp_path / "simulate.zkf"), "--s", "1.0", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["s"] == 1.0
    assert all(np.isfinite(v) and v >= 0 for k, v in d.items() if k != "s")


def test_norms_rejects_single_field(tmp_path, config, capsys):
    main(["simulate", "--config", str(config), "--out", str(tmp_path), *SMALL_GRID])
    from zklab.snapshot import save_snapshot

    save_snapshot(load_snapshot(tmp_path / "simulate.zkf").fields[0], tmp_path / "one.zkf")
    assert main(["norms", str(tmp_path / "one.zkf")]) == 2
    assert "single field" in capsys.readouterr().err


def test_verify_and_report(tmp_path, capsys):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("K = 4\nn_points = 500\n")
    assert main(["verify", "partition_unity", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path)]) == 0
    assert "partition_unity: PASS" in capsys.readouterr().out
    saved = json.loads((tmp_path / "partition_unity.json").read_text())
    assert saved["environment"]["seed"] == 9 and saved["parameters"]["K"] == 4
    assert main(["report", str(tmp_path / "partition_unity.json"), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["all_passed"] is True


def test_verify_exit_code_on_failure(tmp_path, capsys):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("K = 3\nn_points = 200\ntolerance = 0\n")
    assert main(["verify", "partition_unity", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_errors_exit_with_two(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 99}')
    assert main(["report", str(bad)]) == 2
    assert "schema version" in capsys.readouterr().err
