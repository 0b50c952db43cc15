import json

import numpy as np
import pytest

from lgq import losses
from lgq.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_ORACLE, main
from lgq.codebook import load_checkpoint
from lgq.metrics import RECORD_FIELDS

TINY = """\
K = 8
C = 3
epochs = 3
batch_size = 64
n_modes = 4
n_samples = 300
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(TINY)
    return p


def test_train_writes_artifacts(tmp_path, cfg, capsys):
    out = tmp_path / "out"
    p = tmp_path / "d.cfg"
    p.write_text(TINY + "export_drift = true\nexport_latents = true\nval_fraction = 0.2\nsnapshots = true\n")
    assert main(["train", "--config", str(p), "--out", str(out)]) == EXIT_OK
    for name in ("config.txt", "resolved_config.txt", "run_info.json", "records.csv", "records.json",
                 "codebook.lgqc", "summary.json", "drift_codes.csv", "drift_epochs.csv", "latents.csv"):
        assert (out / name).exists(), name
    assert (out / "config.txt").read_text() == p.read_text()
    assert len((out / "records.csv").read_text().splitlines()) == 4
    assert "validation" in json.loads((out / "summary.json").read_text())
    assert "final mse=" in capsys.readouterr().out


def test_missing_k(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("C = 3\n")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "'K'" in capsys.readouterr().err


def test_rerun_byte_identical(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["train", "--config", str(cfg), "--out", str(a)])
    main(["train", "--config", str(cfg), "--out", str(b)])
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    main(["train", "--config", str(cfg), "--out", str(b), "--seed", "5"])
    assert (a / "records.csv").read_bytes() != (b / "records.csv").read_bytes()


def test_verify_ok(tmp_path, capsys):
    out = tmp_path / "v.jsonl"
    assert main(["verify", "--selector", "regularizers", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["name"] == "regularizers"
    assert capsys.readouterr().out.strip() == out.read_text().strip()


def test_verify_fault_injection(monkeypatch):
    real = losses.loss_gradients

    def corrupted(inst, forward="hard"):
        g = real(inst, forward)
        g.z_e = -g.z_e
        return g
    monkeypatch.setattr(losses, "loss_gradients", corrupted)
    assert main(["verify", "gradients"]) == EXIT_ORACLE


def test_sweep_schedule(tmp_path, cfg):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--axis", "schedule",
                 "--values", "fast,default,constant", "--out", str(out)]) == EXIT_OK
    subs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert subs == ["schedule=constant", "schedule=default", "schedule=fast"]
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == ",".join(("label",) + RECORD_FIELDS + ("error",)) and len(lines) == 4
    assert "note" in json.loads((out / "sweep_meta.json").read_text())


def test_sweep_lambda_grid(tmp_path, cfg):
    out = tmp_path / "lam"
    values = "0:0,0.002:0.002,0:0.01,0.01:0,0.01:0.01"
    assert main(["sweep", "--config", str(cfg), "--axis", "lambdas", "--values", values, "--out", str(out)]) == 0
    rows = (out / "comparison.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == values.split(",")


def test_sweep_invalid_axis(cfg, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--config", str(cfg), "--axis", "lr", "--values", "1", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_export_latents(tmp_path):
    p = tmp_path / "k4.cfg"
    p.write_text("K = 4\nC = 2\nepochs = 2\nn_modes = 4\nn_samples = 64\nbatch_size = 32\n")
    run = tmp_path / "run"
    assert main(["train", "--config", str(p), "--out", str(run)]) == 0
    out = tmp_path / "lat.csv"
    assert main(["export-latents", "--checkpoint", str(run / "codebook.lgqc"), "--config", str(p),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    latent_rows = [l for l in lines[1:] if l.startswith("latent")]
    center_rows = [l for l in lines[1:] if l.startswith("center")]
    assert len(latent_rows) == 64
    cb = load_checkpoint(run / "codebook.lgqc")
    for row in center_rows:
        parts = row.split(",")
        assert np.array([float(v) for v in parts[2:]]).tobytes() == cb.centers[int(parts[1])].tobytes()


def test_export_latents_empty(tmp_path):
    p = tmp_path / "k4.cfg"
    p.write_text("K = 4\nC = 2\nepochs = 1\nn_modes = 4\nn_samples = 16\n")
    main(["train", "--config", str(p), "--out", str(tmp_path / "run")])
    p.write_text("K = 4\nC = 2\nepochs = 1\nn_modes = 4\nn_samples = 0\n")
    out = tmp_path / "e.csv"
    assert main(["export-latents", "--checkpoint", str(tmp_path / "run" / "codebook.lgqc"),
                 "--config", str(p), "--out", str(out)]) == 0
    assert out.read_text() == "kind,code,x0,x1\n"


def test_export_missing_checkpoint(tmp_path, cfg):
    assert main(["export-latents", "--checkpoint", str(tmp_path / "nope"), "--config", str(cfg),
                 "--out", str(tmp_path / "x.csv")]) == EXIT_IO
