import os
import subprocess
import sys

import numpy as np
import pytest

from eimpc.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from eimpc.datagen import read_dataset
from eimpc.neural import load_model

GEN = ["gen-data", "--sys", "1", "--goals", "30,8,8", "--seed", "5", "--recheck", "20"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data, train and both evaluations, run twice into separate directories."""
    old = os.environ.get("SOURCE_DATE_EPOCH")
    os.environ["SOURCE_DATE_EPOCH"] = "1600000000"
    try:
        dirs = []
        for k in range(2):
            root = tmp_path_factory.mktemp(f"run{k}")
            data, net, rep = root / "data", root / "net", root / "rep"
            assert main(GEN + ["--out", str(data)]) == EXIT_OK
            assert main(["train", "--data", str(data), "--epochs", "5", "--batch", "32",
                         "--out", str(net)]) == EXIT_OK
            assert main(["eval-open", "--data", str(data), "--model", str(net / "model.json"),
                         "--criteria", "pf,pfsub,optimal", "--limit", "20", "--out", str(rep)]) == EXIT_OK
            assert main(["eval-closed", "--data", str(data), "--model", str(net / "model.json"),
                         "--criteria", "pfsub,optimal", "--x0-count", "3", "--out", str(rep)]) == EXIT_OK
            dirs.append(root)
        return dirs
    finally:
        if old is None:
            os.environ.pop("SOURCE_DATE_EPOCH", None)
        else:
            os.environ["SOURCE_DATE_EPOCH"] = old


def test_outputs_exist(pipeline):
    root = pipeline[0]
    for rel in ("data/train.mpcd", "data/test.mpcd", "data/problem.txt", "data/manifest.txt",
                "net/model.json", "net/loss.txt", "rep/open_loop.txt", "rep/open_loop.csv",
                "rep/closed_loop.txt", "rep/closed_loop.csv"):
        assert (root / rel).is_file(), rel
    dims, recs = read_dataset(root / "data/train.mpcd")
    assert dims == (2, 30, 20, 66) and len(recs) > 1
    assert load_model(root / "net/model.json").widths == (2, 32, 32, 30)
    assert "generated = 1600000000" in (root / "data/manifest.txt").read_text()


def test_byte_identical_reruns(pipeline):
    a, b = pipeline
    for rel in ("data/train.mpcd", "data/test.mpcd", "data/problem.txt", "data/manifest.txt",
                "net/model.json", "net/loss.txt", "rep/open_loop.txt", "rep/open_loop.csv",
                "rep/closed_loop.txt", "rep/closed_loop.csv"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_csv_layout(pipeline):
    lines = (pipeline[0] / "rep/open_loop.csv").read_text().splitlines()
    assert lines[0] == "method,metric,value"
    assert any(l.startswith("nn/pfsub,mean_iter,") for l in lines)
    assert any(l.startswith("cold/optimal,mean_sigma,") for l in lines)


def test_solve_feasible_and_infeasible(capsys, pipeline):
    assert main(["solve", "--sys", "1", "--x=-4,0"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "status optimal" in out
    J = float(next(l for l in out.splitlines() if l.startswith("J ")).split()[1])
    assert J == pytest.approx(42.05935931570839, abs=1e-8)
    model = pipeline[0] / "net/model.json"
    assert main(["solve", "--sys", "1", "--x", "1,0", "--warm", str(model),
                 "--criterion", "pfsub", "--full"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "lambda " in out
    assert main(["solve", "--sys", "1", "--x", "5,1"]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().out


def test_config_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["solve", "--sys", "1"])
    assert e.value.code == EXIT_CONFIG
    assert main(["solve", "--sys", "1", "--x", "1,2,3"]) == EXIT_CONFIG
    assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["solve", "--sys", "1", "--x", "0,0", "--criterion", "gap:-1"]) == EXIT_CONFIG
    assert main(["solve", "--sys", "1", "--x", "0,0", "--solver-opt", "nonsense=1"]) == EXIT_CONFIG
    (tmp_path / "bad.txt").write_text("garbage\n")
    assert main(["solve", "--problem", str(tmp_path / "bad.txt"), "--x", "0,0"]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_solver_option_override(capsys):
    assert main(["solve", "--sys", "1", "--x=-4,0",
                 "--solver-opt", "temporary_bounds=false"]) == EXIT_OK
    assert "status optimal" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "eimpc", "solve", "--sys", "1", "--x", "0,0"],
                         capture_output=True, text=True, timeout=120)
    assert out.returncode == 0 and "status optimal" in out.stdout
