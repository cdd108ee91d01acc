import json
import subprocess
import sys
from pathlib import Path

import pytest

from ergolab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main, run
from ergolab.pipelines import PIPELINES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cfg(tmp_path, body, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return p


def test_list_plain_and_json(capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7
    assert {ln.split()[0] for ln in lines} == set(PIPELINES)
    assert main(["list", "--json"]) == EXIT_OK
    tags = [d["tag"] for d in json.loads(capsys.readouterr().out)]
    assert sorted(tags) == sorted(PIPELINES)


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "ergolab.cli", "list"], capture_output=True,
                         text=True, check=True)
    assert "poincare-chain" in out.stdout


@pytest.mark.parametrize("body", [
    {"experiment": "poincare-chain", "tolerance": 1e-3},
    {"experiment": "poincare-chain", "knobs": {"NN": 10}},
    {"experiment": "no-such-thing"},
    {"experiment": "poincare-chain", "scenario": {"potential": "quadratic", "bogus": 1}},
    {"experiment": "poincare-chain", "threads": 0},
])
def test_config_errors_exit_2(tmp_path, body, capsys):
    assert run(_cfg(tmp_path, body), out=tmp_path / "o") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "o" / "summary.json").exists()


def test_invalid_json_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(p) == EXIT_CONFIG
    assert run(tmp_path / "missing.json") == EXIT_CONFIG


def test_poincare_chain_artifacts(tmp_path):
    out = tmp_path / "pc"
    assert run(CONFIGS / "poincare-chain.json", out=out) == EXIT_OK
    s = json.loads((out / "summary.json").read_text())
    assert s["experiment"] == "poincare-chain" and s["passed"]
    assert s["results"]["c"] == pytest.approx(0.085336, abs=1e-4)
    assert s["results"]["chain_verdict"] == "consistent"
    assert s["statements"]
    raw = (out / "results.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header = raw.split(b"\n")[0].decode().split(",")
    assert header == ["x", "v", "Lv_over_v"]
    plots = sorted(p.name for p in (out / "plotdata").iterdir())
    assert plots == ["Lv_over_v.csv", "v.csv"]
    assert (out / "plotdata" / "v.csv").read_text().splitlines()[0] == "x,v"


def test_failed_expectation_exit_1(tmp_path, capsys):
    body = {"experiment": "poincare-chain", "expect": {"chain_verdict": "inconsistent"}}
    assert run(_cfg(tmp_path, body), out=tmp_path / "o") == EXIT_CHECK
    assert "FAIL  expect:chain_verdict" in capsys.readouterr().out
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["passed"] is False


def test_relative_scenario_table_path(tmp_path):
    # the shipped configs use built-in potentials; a bad table path is a config error
    body = {"experiment": "poincare-chain",
            "scenario": {"potential": "table", "path": "nope.csv"}}
    assert run(_cfg(tmp_path, body), out=tmp_path / "o") == EXIT_CONFIG


def test_seed_override_recorded(tmp_path):
    assert run(CONFIGS / "poincare-chain.json", out=tmp_path / "a", seed=7) == EXIT_OK
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 7


def test_summary_has_no_timings(tmp_path):
    run(CONFIGS / "decay-suite.json", out=tmp_path / "d")
    txt = (tmp_path / "d" / "summary.json").read_text()
    for word in ("time_s", "elapsed", "timestamp", "wall"):
        assert word not in txt
