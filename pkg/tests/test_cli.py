import shutil
import subprocess
import sys

import pytest

from lambdafield.cli import build_parser, main, resolve_scenario
from lambdafield.io import read_csv_table
from lambdafield.scenario import ConfigError, bundled_scenario

SHORT_EMPTY = """
[scenario]
name = short
world = empty.world
duration = 1
seed = 2

[lidar]
beams = 61
max_range = 3
rate = 5

[trust]
p_miss = 1.0

[grid]
width = 60
height = 60

[planner]
samples = 20
goal = 7 3
"""


@pytest.fixture
def short_scenario(tmp_path):
    shutil.copy(bundled_scenario("empty").with_name("empty.world"), tmp_path / "empty.world")
    path = tmp_path / "short.ini"
    path.write_text(SHORT_EMPTY)
    return path


def test_parser_subcommands():
    p = build_parser()
    args = p.parse_args(["run", "--scenario", "tree", "--out", "x", "--seed", "7", "--mode", "reachability"])
    assert (args.command, args.scenario, args.seed, args.mode) == ("run", "tree", 7, "reachability")
    with pytest.raises(SystemExit):
        p.parse_args(["run", "--scenario", "tree", "--out", "x", "--seed", "-1"])
    with pytest.raises(SystemExit):
        p.parse_args(["run", "--scenario", "tree", "--out", "x", "--mode", "magic"])


def test_resolve_bundled_name_and_seed_override():
    sc = resolve_scenario("tree", seed=11)
    assert sc.name == "tree" and sc.seed == 11 and sc.lidar.rng_seed == 11
    with pytest.raises(ConfigError):
        resolve_scenario("no_such_scenario")


def test_run_timeout_exits_2(short_scenario, tmp_path, capsys):
    code = main(["run", "--scenario", str(short_scenario), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "timeout" in capsys.readouterr().out
    for name in ("lambda_grid.pgm", "bayes_grid.pgm", "lambda_grid.csv", "bayes_grid.csv",
                 "planner_log.csv", "risk_trace.csv", "trajectory.csv", "summary.csv"):
        assert (tmp_path / "out" / name).is_file()


def test_run_reachability_mode(short_scenario, tmp_path):
    assert main(["run", "--scenario", str(short_scenario), "--out", str(tmp_path / "o"),
                 "--mode", "reachability"]) == 2
    _, header, rows = read_csv_table(tmp_path / "o" / "risk_trace.csv")
    assert header[-1] == "p_coll" and rows


def test_config_error_exits_1_and_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(SHORT_EMPTY.replace("seed = 2\n", ""))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "scenario.seed" in capsys.readouterr().err


def test_missing_scenario_file_exits_1(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_fence_without_fence_section_exits_1(short_scenario, tmp_path, capsys):
    assert main(["fence", "--scenario", str(short_scenario), "--out", str(tmp_path)]) == 1
    assert "fence" in capsys.readouterr().err


def test_converge_writes_curves(tmp_path):
    assert main(["converge", "--out", str(tmp_path), "--n-max", "20"]) == 0
    for name in ("convergence.csv", "recovery.csv", "time_reachability.csv"):
        assert (tmp_path / name).is_file()


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lambdafield.cli", "converge", "--out", str(tmp_path),
                           "--n-max", "5"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
