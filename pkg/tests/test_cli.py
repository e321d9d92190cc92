"""
Command-line surface: exit codes, overrides and artifacts
"""

import json

import pytest
from typer.testing import CliRunner

from app.cli import COMMANDS, cli
from app.config import EXIT_CONFIG_ERROR, EXIT_PASS

runner = CliRunner()


def test_help_lists_commands():
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in COMMANDS:
        assert command in result.output


def test_simulate_lpp(tmp_path):
    out = tmp_path / "lpp"
    result = runner.invoke(cli, [
        "simulate-lpp", "--seed", "3", "--out", str(out),
        "--model.p", "3", "--model.N=2", "--sampling.n_samples=40",
    ])
    assert result.exit_code == EXIT_PASS
    assert (out / "simulate-lpp_samples.csv").exists()
    report = json.loads((out / "simulate-lpp_report.json").read_text())
    assert report["seeds"] == [3]
    assert report["config"]["model"]["N"] == 2


def test_simulate_wishart_json_format(tmp_path):
    out = tmp_path / "wishart"
    result = runner.invoke(cli, [
        "simulate-wishart", "--out", str(out), "--format", "json",
        "--model.p=2", "--sampling.n_samples=10",
    ])
    assert result.exit_code == EXIT_PASS
    assert len(json.loads((out / "simulate-wishart_samples.json").read_text())) == 10


def test_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model": {"p": 2}, "sampling": {"n_samples": 15}}))
    out = tmp_path / "from-file"
    result = runner.invoke(cli, ["simulate-lpp", "--config", str(path), "--out", str(out)])
    assert result.exit_code == EXIT_PASS
    report = json.loads((out / "simulate-lpp_report.json").read_text())
    assert report["metrics"]["n"] == 15


def test_invalid_model_exits_with_config_error(tmp_path):
    result = runner.invoke(cli, ["simulate-lpp", "--out", str(tmp_path), "--model.p=3", "--model.N=5"])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_missing_config_file(tmp_path):
    result = runner.invoke(cli, ["tw-table", "--config", str(tmp_path / "nope.json")])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_dangling_override(tmp_path):
    result = runner.invoke(cli, ["kernel-eval", "--out", str(tmp_path), "--kernel.xs"])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_kernel_eval_csv(tmp_path):
    result = runner.invoke(cli, [
        "kernel-eval", "--out", str(tmp_path),
        "--kernel.kind=airy", "--kernel.xs=[0.0, 0.5]", "--kernel.ys=[0.0]",
    ])
    assert result.exit_code == EXIT_PASS
    header = (tmp_path / "kernel-eval_kernel.csv").read_text().splitlines()[0]
    assert header == "t1,x,t2,y,value,imag_residue"


def test_tw_table(tmp_path):
    result = runner.invoke(cli, ["tw-table", "--out", str(tmp_path), "--thresholds.xi_grid=[-5.0, -1.0, 2.0]"])
    assert result.exit_code == EXIT_PASS


def test_infeasible_contours_exit_code(tmp_path):
    result = runner.invoke(cli, [
        "check-thm4", "--out", str(tmp_path),
        "--model.x=[0.5]", "--model.y=[0.2]", "--kernel.t2=-1.0",
    ])
    assert result.exit_code == EXIT_CONFIG_ERROR


@pytest.mark.parametrize("seed", ["-1", str(2 ** 64)])
def test_seed_range(seed, tmp_path):
    result = runner.invoke(cli, ["simulate-lpp", "--out", str(tmp_path), "--seed", seed])
    assert result.exit_code != EXIT_PASS
