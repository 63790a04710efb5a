import json
import subprocess
import sys

import numpy as np
import pytest

from badscan.cli import main
from badscan.imagecore import Image, load_ppm, save_ppm


@pytest.fixture
def img_path(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "in.ppm"
    save_ppm(Image(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)), p)
    return p


def test_embed_then_detect(img_path, tmp_path, capsys):
    out = tmp_path / "out.ppm"
    assert main(["embed", "--in", str(img_path), "--out", str(out), "--k", "3"]) == 0
    assert main(["detect", "--in", str(out), "--k", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-2] == "detected"
    float(lines[-1])
    assert main(["detect", "--in", str(img_path)]) == 1
    assert capsys.readouterr().out.splitlines()[0] == "clean"


def test_embed_custom_locations(img_path, tmp_path):
    out = tmp_path / "out.ppm"
    assert main(["embed", "--in", str(img_path), "--out", str(out), "--loc-i", "4,4", "--loc-j", "20,20"]) == 0
    a, b = load_ppm(out).pixels, load_ppm(img_path).pixels
    assert np.array_equal(a[:4], b[:4])
    assert main(["detect", "--in", str(out), "--loc-i", "4,4", "--loc-j", "20,20"]) == 0


def test_config_and_usage_errors(img_path, tmp_path):
    assert main(["embed", "--in", str(img_path), "--out", str(tmp_path / "o.ppm"), "--k", "9"]) == 2
    assert main(["frobnicate"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.epochs = lots\n")
    assert main(["attack", "--config", str(bad), "--out", str(tmp_path / "run")]) == 2


def test_runtime_error(tmp_path):
    assert main(["detect", "--in", str(tmp_path / "missing.ppm")]) == 3
    assert main(["report", str(tmp_path)]) == 3


def test_synth_train_eval_attack_report(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("dataset.per_class = 3\ndataset.test_per_class = 2\ndataset.side = 16\n"
                   "model.embed_dim = 8\ntrain.epochs = 1\n")
    assert main(["synth", "--out", str(tmp_path / "data"), "--per-class", "2", "--side", "16"]) == 0
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "t"),
                 "--manifest", str(tmp_path / "data" / "manifest.csv")]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(tmp_path / "t" / "model.ckpt"),
                 "--manifest", str(tmp_path / "data" / "manifest.csv")]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert set(metrics) == {"cta", "tta", "tar"}
    assert main(["attack", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["report", str(tmp_path / "run"), "--out", str(tmp_path / "report.md")]) == 0
    assert (tmp_path / "report.md").read_text().startswith("# Backdoor evaluation")


def test_bench_cli(tmp_path, capsys):
    assert main(["bench", "--side", "32", "--ks", "1", "2", "--repeats", "100",
                 "--out", str(tmp_path / "b.json")]) == 0
    assert set(json.loads((tmp_path / "b.json").read_text())) == {"1", "2"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "badscan", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "detect" in proc.stdout
