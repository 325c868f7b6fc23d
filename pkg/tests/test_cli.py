import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rollrecon import mrtx
from rollrecon.cli import main, read_pgm16, write_pgm16


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--modality", "mri", "--size", "16", "--coils", "2", "--rate", "4",
                 "--calib", "4", "--n-train", "4", "--n-val", "2", "--n-test", "2", "--seed", "7",
                 "--out", str(root / "data")]) == 0
    (root / "m.json").write_text(json.dumps({"S": 2, "K": 1, "C": 4, "J": 2, "D": 3}))
    (root / "t.json").write_text(json.dumps({"epochs": 1, "lr": 1e-3, "seed": 3}))
    assert main(["train", "--model-config", str(root / "m.json"), "--train-config",
                 str(root / "t.json"), "--data", str(root / "data"), "--out", str(root / "ckpt"),
                 "--quiet"]) == 0
    return root


def test_simulate_writes_manifest(workdir):
    m = json.loads((workdir / "data" / "manifest.json").read_text())
    assert m["modality"] == "mri" and m["splits"]["test"] == [0, 1]


def test_train_artifacts(workdir):
    for f in ("history.csv", "best/manifest.json", "final/manifest.json", "train_config.json"):
        assert (workdir / "ckpt" / f).is_file()


def test_eval_model_and_baseline(workdir, capsys):
    assert main(["eval", "--ckpt", str(workdir / "ckpt" / "best"), "--data",
                 str(workdir / "data"), "--split", "test", "--out", str(workdir / "r.csv")]) == 0
    rows = list(csv.reader(open(workdir / "r.csv")))
    assert rows[0] == ["sample", "psnr", "ssim"]
    assert [r[0] for r in rows[1:]] == ["test/0", "test/1", "mean", "std"]
    assert main(["eval", "--data", str(workdir / "data"), "--out", str(workdir / "zf.csv")]) == 0
    assert "baseline" in capsys.readouterr().out


def test_eval_is_deterministic(workdir):
    for name in ("r1.csv", "r2.csv"):
        main(["eval", "--ckpt", str(workdir / "ckpt" / "best"), "--data", str(workdir / "data"),
              "--out", str(workdir / name)])
    assert (workdir / "r1.csv").read_bytes() == (workdir / "r2.csv").read_bytes()


def test_infer_and_erf(workdir):
    sample = str(workdir / "data" / "test" / "0")
    assert main(["infer", "--ckpt", str(workdir / "ckpt" / "best"), "--sample", sample,
                 "--out", str(workdir / "rec.mrtx")]) == 0
    assert mrtx.read(workdir / "rec.mrtx").shape == (16, 16, 2)
    assert main(["erf", "--ckpt", str(workdir / "ckpt" / "best"), "--sample", sample,
                 "--out", str(workdir / "erf.pgm")]) == 0
    img = read_pgm16(workdir / "erf.pgm")
    assert img.shape == (16, 16) and img.max() == 65535


def test_bench(workdir):
    assert main(["bench", "--ckpt", str(workdir / "ckpt" / "best"), "--sample",
                 str(workdir / "data" / "test" / "0"), "--n-warmup", "1", "--n-runs", "2",
                 "--out", str(workdir / "bench.csv")]) == 0
    rows = list(csv.reader(open(workdir / "bench.csv")))
    assert rows[0][:3] == ["n_runs", "median_ms", "mean_ms"] and rows[1][0] == "2"


def test_ablate(workdir):
    assert main(["ablate", "--model-config", str(workdir / "m.json"), "--train-config",
                 str(workdir / "t.json"), "--data", str(workdir / "data"), "--out",
                 str(workdir / "abl"), "--variants", "full", "no_ssm", "--quiet"]) == 0
    lines = (workdir / "abl" / "ablation.csv").read_text().splitlines()
    assert len(lines) == 3


def test_exit_codes(workdir, tmp_path):
    assert main(["simulate", "--bogus"]) == 2
    assert main([]) == 2
    assert main(["eval", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "x.csv")]) == 1
    (tmp_path / "bad.json").write_text(json.dumps({"lr": 5.0}))
    assert main(["train", "--train-config", str(tmp_path / "bad.json"), "--data",
                 str(workdir / "data"), "--out", str(tmp_path / "o")]) == 2
    assert main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rollrecon", "simulate", "--nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pgm16(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n65535\n")
    np.testing.assert_array_equal(read_pgm16(tmp_path / "a.pgm"), np.round(img * 65535))
