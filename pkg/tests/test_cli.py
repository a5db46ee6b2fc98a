import filecmp
import os
import subprocess
import sys

import pytest

from rangeloc.cli import main


def _tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_tree_equal(a / d, b / d) for d in cmp.common_dirs)


def test_validate_preset(capsys):
    assert main(["validate", "--scenario", "fig3"]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_missing_scenario(tmp_path, capsys):
    missing = tmp_path / "none.yaml"
    assert main(["run", "--scenario", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_key_reports_line(tmp_path, capsys):
    path = tmp_path / "s.yaml"
    path.write_text("name: s\nn_agent: 3\n")
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "s.yaml:2: n_agent: unknown key" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_invalid_override_is_config_error(tmp_path):
    assert main(["run", "--scenario", "fig3", "--trials", "0", "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_out(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir(mode=0o500)
    assert main(["run", "--scenario", "fig3", "--out", str(locked / "o")]) == 2


def test_out_path_is_a_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("")
    assert main(["run", "--scenario", "fig3", "--trials", "1", "--out", str(f / "o")]) == 2


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "fig3", "--trials", "2", "--seed", "9", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"mae.csv", "trace.csv", "decisions.csv", "scenario.yaml"}
    assert (out / "mae.csv").read_text().startswith("t,mae,m_effective\n")
    assert "seed: 9" in (out / "scenario.yaml").read_text()


def test_jsonl_format(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "fig3", "--trials", "1", "--format", "jsonl", "--out", str(out)]) == 0
    assert (out / "mae.jsonl").read_text().startswith('{"t": 0, "mae": ')


def test_threads_and_reruns_identical(tmp_path):
    args = ["run", "--scenario", "fig3", "--trials", "4"]
    assert main(args + ["--threads", "4", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--threads", "1", "--out", str(tmp_path / "b")]) == 0
    assert _tree_equal(tmp_path / "a", tmp_path / "b")


def test_sweep_grid(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", "fig3", "--trials", "1", "--set", "iterations=2,3",
                 "--set", "weight_mode=unbiased,quadratic", "--out", str(out)]) == 0
    assert len(list(out.iterdir())) == 4
    assert (out / "iterations=3_weight_mode=quadratic" / "mae.csv").read_text().count("\n") == 4


def test_sweep_unknown_key(tmp_path):
    assert main(["sweep", "--scenario", "fig3", "--set", "nope=1,2", "--out", str(tmp_path / "o")]) == 2


def test_compare_consensus_writes_eight_cdfs(tmp_path):
    out = tmp_path / "cc"
    assert main(["compare-consensus", "--scenario", "fig45", "--out", str(out)]) == 0
    assert len(list(out.glob("cdf_*.csv"))) == 8


def test_refine_study(tmp_path, monkeypatch):
    out = tmp_path / "rs"
    scen = tmp_path / "fig2.yaml"
    from rangeloc.config import preset_text
    scen.write_text(preset_text("fig2").replace("iterations: 100", "iterations: 3"))
    assert main(["refine-study", "--scenario", str(scen), "--trials", "1", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"mae_iseeu.csv", "mae_bb.csv", "mae_projected.csv"}


def test_variance_rejects_per_trial_placement(tmp_path):
    assert main(["variance", "--scenario", "fig10-11", "--out", str(tmp_path / "v")]) == 2


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "rangeloc.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "compare-consensus" in res.stdout


def test_variance_small(tmp_path):
    from rangeloc.config import preset_text
    scen = tmp_path / "v.yaml"
    scen.write_text(preset_text("fig8").replace("consensus_rounds: 1000", "consensus_rounds: 40"))
    out = tmp_path / "v"
    assert main(["variance", "--scenario", str(scen), "--trials", "30", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"variance_iseeu.csv", "variance_ci.csv", "plateau.csv"}
