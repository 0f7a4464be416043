import numpy as np
import pytest

from cmsanet.autodiff import load_checkpoint
from cmsanet.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from cmsanet.synthdata import load
from cmsanet.synthdata.pnm import read_pbm, read_pgm

TINY = ["--set", "H=32", "--set", "W=32", "--set", "c1=4", "--set", "c2=4", "--set", "c3=4",
        "--set", "C_l=4", "--set", "d_k=4", "--set", "D=4", "--set", "iterations=4", "--set", "batch_size=2"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen", "--count", "6", "--out", str(out)] + TINY) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def run(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(data), "--out", str(out)] + TINY) == EXIT_OK
    return out


def test_gen_layout(data):
    assert (data / "index.jsonl").is_file()
    assert len(load(data)) == 6
    assert (data / "config.resolved").is_file()


def test_gen_partitioned(tmp_path, data):
    assert main(["gen", "--count", "3", "--start", "3", "--out", str(tmp_path)] + TINY) == EXIT_OK
    assert load(tmp_path) == load(data)[3:]


def test_train_outputs(run):
    lines = (run / "loss.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss,lr"
    assert len(lines) == 5
    assert "iterations=4" in (run / "config.resolved").read_text().splitlines()
    assert "backbone.stem1.w" in load_checkpoint(run / "ckpt.bin")


def test_train_is_deterministic(tmp_path, data, run):
    assert main(["train", "--data", str(data), "--out", str(tmp_path)] + TINY) == EXIT_OK
    assert (tmp_path / "ckpt.bin").read_bytes() == (run / "ckpt.bin").read_bytes()
    assert (tmp_path / "loss.csv").read_bytes() == (run / "loss.csv").read_bytes()


def test_eval_and_dump(tmp_path, data, run):
    assert main(["eval", "--data", str(data), "--ckpt", str(run / "ckpt.bin"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == "id,iou"
    assert (tmp_path / "summary.txt").is_file()
    P = read_pgm(tmp_path / "masks" / "000001_prob.pgm")
    assert P.shape == (8, 8)
    np.testing.assert_array_equal(read_pbm(tmp_path / "masks" / "000001_mask.pbm"), (P > 127.5).astype(np.uint8))

    dump = tmp_path / "dump"
    assert main(["dump", "--data", str(data), "--ckpt", str(run / "ckpt.bin"),
                 "--sample-id", "4", "--out", str(dump)]) == EXIT_OK
    assert (dump / "masks" / "000004_prob.pgm").read_bytes() == (tmp_path / "masks" / "000004_prob.pgm").read_bytes()
    for i in (1, 2, 3):
        assert (dump / "attn" / f"000004_level{i}.csv").read_text().startswith("row,col,score\n")


def test_dump_unknown_sample(tmp_path, data, run):
    assert main(["dump", "--data", str(data), "--ckpt", str(run / "ckpt.bin"),
                 "--sample-id", "99", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_config_errors(tmp_path, data):
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_CONFIG
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--config", str(tmp_path / "x")]) == EXIT_CONFIG


def test_data_errors(tmp_path, run):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)] + TINY) == EXIT_DATA
    assert main(["eval", "--data", str(tmp_path), "--ckpt", str(run / "ckpt.bin"), "--out", str(tmp_path)]) == EXIT_DATA
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"CMSA0001\x01")
    assert main(["eval", "--data", str(tmp_path), "--ckpt", str(bad), "--out", str(tmp_path),
                 "--config", str(run / "config.resolved")]) == EXIT_DATA


def test_numeric_failure_reports_iteration(tmp_path, data, capsys):
    with np.errstate(all="ignore"):
        code = main(["train", "--data", str(data), "--out", str(tmp_path), "--set", "lr=1e250"] + TINY)
    assert code == EXIT_NUMERIC
    assert "iteration" in capsys.readouterr().err


def test_gradcheck_tiny(capsys):
    assert main(["gradcheck", "--per-group", "1"] + TINY) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_gradcheck_failure_code(monkeypatch):
    import cmsanet.gradsuite as gs

    monkeypatch.setattr(gs, "NETWORK_TOL", 0.0)
    assert main(["gradcheck", "--per-group", "1"] + TINY) == EXIT_CHECK_FAILED
