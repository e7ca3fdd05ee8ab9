import json
import subprocess
import sys

import pytest

from frogmodel.cli import main
from frogmodel.engine import PassageRecord


def test_run_writes_record(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--dim", "2", "--family", "bernoulli", "--param", "p=0.5", "--seed", "3",
                 "--horizon", "20", "--output-dir", str(out)])
    assert code == 0
    rec = PassageRecord.from_csv(out / "record.csv")
    assert rec.horizon == 20 and rec.dimension == 2
    report = json.loads((out / "report.json").read_text())
    assert report["manifest"]["spec"]["master_seed"] == 3
    assert "visited" in capsys.readouterr().out


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FROGMODEL_OUTPUT_ROOT", str(tmp_path))
    assert main(["run", "--dim", "1", "--horizon", "5", "--output-dir", "rel"]) == 0
    assert (tmp_path / "rel" / "record.csv").exists()


def test_seed_flag_changes_output(tmp_path):
    paths = []
    for seed in (1, 2):
        out = tmp_path / f"s{seed}"
        main(["run", "--dim", "2", "--family", "bernoulli", "--param", "p=0.5", "--seed", str(seed),
              "--horizon", "30", "--output-dir", str(out)])
        paths.append((out / "record.csv").read_bytes())
    assert paths[0] != paths[1]


@pytest.mark.parametrize("argv", [
    ["diamond", "--dim", "2", "--tail-delta", "2", "--n-schedule", "5", "--replicas", "1"],
    ["run", "--dim", "7", "--horizon", "5"],
    ["mu", "--dim", "2", "--family", "bernoulli", "--param", "p=1.5", "--n-schedule", "5",
     "--replicas", "1", "--horizon", "10"],
    ["exec", "/nonexistent/manifest.json"],
])
def test_invalid_input_exits_2(argv, tmp_path, capsys):
    assert main(argv + (["--output-dir", str(tmp_path)] if argv[0] != "exec" else [])) == 2
    assert "invalid input" in capsys.readouterr().err


def test_corrupted_record_exits_1(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--dim", "1", "--seed", "2", "--horizon", "15", "--output-dir", str(out)]) == 0
    path = out / "record.csv"
    lines = path.read_text().splitlines()
    # push one visit time beyond the speed bound
    idx = next(i for i, ln in enumerate(lines) if ln and ln[0] in "-0123456789" and not ln.startswith("0,"))
    cells = lines[idx].split(",")
    cells[-1] = "0"
    lines[idx] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["check", "--dim", "1", "--horizon", "1", "--records", str(path)]) == 0
    assert main(["check", "--dim", "1", "--horizon", "1", "--records", str(bad)]) == 1
    assert "VIOLATION" in capsys.readouterr().out


def test_resource_limits_exit_3(tmp_path, capsys):
    code = main(["oracle", "--interval=-6,6", "--horizon", "6", "--budget", "100",
                 "--output-dir", str(tmp_path / "o")])
    assert code == 3
    code = main(["run", "--dim", "4", "--horizon", "20000", "--output-dir", str(tmp_path / "r")])
    assert code == 3
    assert "resource limit" in capsys.readouterr().err


def test_oracle_and_exec(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["oracle", "--interval=-3,3", "--horizon", "2", "--output-dir", str(out)]) == 0
    assert "3/8" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["output_dir"] = str(tmp_path / "again")
    mpath = tmp_path / "m.json"
    mpath.write_text(json.dumps(manifest))
    assert main(["exec", str(mpath)]) == 0
    assert (tmp_path / "again" / "report.json").read_bytes() != b""


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "frogmodel", "check", "--dim", "1", "--seed", "1",
                          "--horizon", "60", "--triples", "10", "--pairs", "2",
                          "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "subadditivity" in res.stdout
