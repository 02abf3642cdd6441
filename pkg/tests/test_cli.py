import csv
import json

import numpy as np
import pytest

from nocsim.cli import (DEFAULT_CONFIG, LOSS_TRACE_COLUMNS, config_hash, main, parse_snr_grid, resolve_config)
from nocsim.codebook import load_codebook
from nocsim.model import ModelDims, init_model, save_checkpoint


def write_cfg(tmp_path, name="cfg.json", **sections):
    cfg = {"version": 1, "output_dir": str(tmp_path / "run")}
    cfg.update(sections)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def tiny(tmp_path, name="cfg.json", **train):
    t = {"num_users": 2, "epochs": 2, "steps_per_epoch": 2, "batch_size": 4}
    t.update(train)
    return write_cfg(tmp_path, name, train=t, eval={"num_batches": 1, "batch_size": 4},
                     channel={"snr_eval_db": [10.0]})


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def angle_rows(out):
    return read_csv(out.with_name(out.name + ".angles.csv"))


def test_codebook_writes_file_and_angles_in_window(tmp_path):
    out = tmp_path / "book.txt"
    assert main(["codebook", "--length", "128", "--users", "3", "--angle", "50", "--out", str(out)]) == 0
    assert load_codebook(out).codewords.shape == (3, 128)
    angles = [float(r["angle_deg"]) for r in angle_rows(out)]
    # three pairwise dots cannot all equal 82 at length 128, so one pair lands at 80 or 84
    assert all(49.0 <= a <= 51.0 for a in angles), angles


def test_codebook_orthogonal(tmp_path, capsys):
    out = tmp_path / "orth.txt"
    assert main(["codebook", "--length", "64", "--users", "4", "--angle", "90", "--out", str(out)]) == 0
    assert {r["angle_deg"] for r in angle_rows(out)} == {"90.0"}
    assert "90.000 deg" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [["codebook", "--length", "100"], ["codebook", "--users", "0"],
                                  ["codebook", "--angle", "abc"], ["nonsense"]])
def test_codebook_bad_flags_exit_2(argv):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejects malformed flags itself
        code = exc.code
    assert code == 2


def test_codebook_unreachable_exit_3(tmp_path):
    # tolerance 0 at 50 degrees with K=3 cannot be met
    assert main(["codebook", "--length", "128", "--users", "3", "--angle", "50", "--tolerance", "0"]) == 3


def test_default_config_round_trips(capsys):
    assert main(["default-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert resolve_config(cfg) == DEFAULT_CONFIG
    assert cfg["train"]["num_users"] == 2


def test_config_validation():
    with pytest.raises(Exception, match="unknown config key 'train.lr'"):
        resolve_config({"version": 1, "train": {"lr": 0.1}})
    with pytest.raises(Exception, match="version"):
        resolve_config({"train": {}})
    with pytest.raises(Exception, match="N <= K"):
        resolve_config({"version": 1, "train": {"num_users": 5}})
    with pytest.raises(Exception, match="code_length"):
        resolve_config({"version": 1, "model": {"code_length": 64}})


def test_config_hash_ignores_output_dir():
    a = resolve_config({"version": 1, "output_dir": "x"})
    b = resolve_config({"version": 1, "output_dir": "y"})
    c = resolve_config({"version": 1, "train": {"seed": 1}})
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_default_config_trains(tmp_path):
    p = write_cfg(tmp_path)
    assert main(["train", "--config", str(p)]) == 0
    run = tmp_path / "run"
    for name in ("checkpoint.json", "train_report.json", "loss_trace.csv"):
        assert (run / name).exists()
    first = (run / "loss_trace.csv").read_bytes()
    assert main(["train", "--config", str(p)]) == 0
    assert (run / "loss_trace.csv").read_bytes() == first
    rows = read_csv(run / "loss_trace.csv")
    assert tuple(rows[0]) == LOSS_TRACE_COLUMNS and len(rows) == DEFAULT_CONFIG["train"]["epochs"]
    rep = json.loads((run / "train_report.json").read_text())
    assert rep["config_hash"] == rows[0]["config_hash"] and set(rep["seeds"]) == {"codebook", "train", "eval"}


def test_train_too_many_users_exit_2(tmp_path, capsys):
    p = tiny(tmp_path, num_users=4)
    assert main(["train", "--config", str(p)]) == 2
    assert "N <= K" in capsys.readouterr().err


def test_train_unknown_key_and_bad_json_exit_2(tmp_path):
    p = write_cfg(tmp_path, train={"learning_rat": 0.1})
    assert main(["train", "--config", str(p)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["train", "--config", str(bad)]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_4(tmp_path):
    p = tiny(tmp_path, learning_rate=1e300, optimizer="sgd")
    assert main(["train", "--config", str(p)]) == 4
    rep = json.loads((tmp_path / "run" / "train_report.json").read_text())
    assert rep["status"] == "diverged"


def test_eval_and_mismatch_outputs(tmp_path):
    p = tiny(tmp_path)
    assert main(["train", "--config", str(p)]) == 0
    assert main(["eval", "--config", str(p)]) == 0
    assert main(["mismatch", "--config", str(p), "--snr", "10"]) == 0
    run = tmp_path / "run"
    per = read_csv(run / "metrics_per_snr.csv")
    assert [(r["snr_db"], r["user"]) for r in per] == [("10.0", "1"), ("10.0", "2")]
    cos = read_csv(run / "cosine_matrix.csv")
    assert cos[0]["u1"] == "1.0" and cos[0]["u2"] == cos[1]["u1"]
    grid = read_csv(run / "mismatch_grid.csv")
    assert len(grid) == 4 and sum(int(r["matched"]) for r in grid) == 2
    doc = json.loads((run / "metrics.json").read_text())
    assert doc["complex_symbols_per_image"] == ModelDims().complex_symbols
    assert len(doc["cross_projection"]) == 2


def test_untrained_checkpoint_grid_near_flat(tmp_path):
    p = tiny(tmp_path)
    ck = tmp_path / "untrained.json"
    save_checkpoint(init_model(ModelDims(), 3), ck)
    assert main(["mismatch", "--config", str(p), "--checkpoint", str(ck)]) == 0
    g = json.loads((tmp_path / "run" / "mismatch.json").read_text())["psnr_db"]
    assert np.ptp(g) < 3.0


def test_dims_mismatch_exit_5(tmp_path, capsys):
    p = tiny(tmp_path)
    ck = tmp_path / "small.json"
    save_checkpoint(init_model(ModelDims(hidden=16), 0), ck)
    assert main(["eval", "--config", str(p), "--checkpoint", str(ck)]) == 5
    assert main(["mismatch", "--config", str(p), "--checkpoint", str(ck)]) == 5
    assert "do not match" in capsys.readouterr().err


def test_trained_checkpoint_grid_diagonal_dominates(tmp_path, trained_run):
    cfg = {"codebook": {"length": 128, "num_users": 3, "theta_deg": 50.0, "seed": 0},
           "train": {"num_users": 3}, "eval": {"num_batches": 4, "seed": 99}}
    p = write_cfg(tmp_path, **cfg)
    ck = tmp_path / "trained.json"
    save_checkpoint(trained_run.model, ck)
    assert main(["mismatch", "--config", str(p), "--checkpoint", str(ck)]) == 0
    g = np.array(json.loads((tmp_path / "run" / "mismatch.json").read_text())["psnr_db"])
    off = ~np.eye(3, dtype=bool)
    assert np.all(np.diag(g)[:, None] > np.where(off, g, -np.inf))


def test_baseline_cdma_rows(tmp_path):
    out = tmp_path / "ber.csv"
    assert main(["baseline", "cdma", "--users", "3", "--snr", "0:2:10", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 18
    assert sorted({float(r["snr_db"]) for r in rows}) == [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    assert {r["user"] for r in rows} == {"1", "2", "3"}
    assert len({r["config_hash"] for r in rows}) == 1


def test_baseline_noma_and_bpsk(tmp_path, capsys):
    assert main(["baseline", "noma", "--snr", "20", "--bits", "5000"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 2 and all(float(r["ber"]) < 1e-2 for r in rows)
    assert main(["baseline", "bpsk", "--snr", "0", "--bits", "100000"]) == 0
    r = list(csv.DictReader(capsys.readouterr().out.splitlines()))[0]
    assert abs(float(r["ber"]) - float(r["theory_ber"])) < 0.005


def test_parse_snr_grid():
    assert parse_snr_grid("0:2:10") == [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    assert parse_snr_grid("0:5:12") == [0.0, 5.0, 10.0]
    assert parse_snr_grid("3,-1") == [3.0, -1.0]
    with pytest.raises(Exception):
        parse_snr_grid("0:0:4")
