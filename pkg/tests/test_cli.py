import csv
import json
import subprocess
import sys

import pytest

from retrograph import data_path
from retrograph.cli import main, parse_args, read_config, ConfigError

FIG_PRODUCT = "CCOC(=O)c1csc(-c2ccc(F)cc2)c1"
SMALL = ["--epochs", "2", "--batch", "16", "--hidden-dim", "16", "--t-a", "2", "--t-e", "2"]


@pytest.fixture(scope="module")
def toy(tmp_path_factory, toy_records):
    path = tmp_path_factory.mktemp("data") / "toy.txt"
    path.write_text("\n".join(r.text for r in toy_records[:16]) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, toy):
    out = tmp_path_factory.mktemp("model")
    assert main(["--seed", "3", "--threads", "1", "train-center", "--train", toy, "--out", str(out), *SMALL]) == 0
    assert main(["--seed", "3", "--threads", "1", "train-synthon", "--train", toy, "--out", str(out), *SMALL]) == 0
    return out


def test_help_exit_zero(capsys):
    assert main(["--help"]) == 0
    assert "train-center" in capsys.readouterr().out
    assert main(["predict", "--help"]) == 0


def test_unknown_flag_exit_two(capsys):
    assert main(["vocab", "--bogus"]) == 2
    assert "error" in capsys.readouterr().err


def test_training_needs_seed(toy, tmp_path, monkeypatch):
    monkeypatch.delenv("RETROGRAPH_SEED", raising=False)
    assert main(["train-center", "--train", toy, "--out", str(tmp_path), *SMALL]) == 2
    monkeypatch.setenv("RETROGRAPH_SEED", "5")
    assert parse_args(["train-center", "--train", toy, "--out", str(tmp_path)]).seed == 5
    assert parse_args(["--seed", "9", "train-center", "--train", toy, "--out", str(tmp_path)]).seed == 9


def test_missing_input_is_config_error(tmp_path):
    assert main(["vocab", "--in", str(tmp_path / "none.txt"), "--out", str(tmp_path / "v.tsv")]) == 2


def test_runtime_error_exit_one(model_dir, capsys):
    assert main(["predict", "--model", str(model_dir), "--product", "C1CC"]) == 1
    assert "retrograph:" in capsys.readouterr().err


def test_config_file_precedence(tmp_path, toy):
    conf = tmp_path / "run.conf"
    conf.write_text("# training defaults\nepochs = 7\nlr=0.01\nhidden-dim = 32\nuse_brics = false\n")
    args = parse_args(["--config", str(conf), "--seed", "1", "train-center", "--train", toy, "--out", "x",
                       "--epochs", "3"])
    assert (args.epochs, args.lr, args.hidden_dim, args.use_brics) == (3, 0.01, 32, False)
    conf.write_text("unknown_key = 1\n")
    with pytest.raises(ConfigError):
        parse_args(["--config", str(conf), "vocab", "--in", toy, "--out", "v"])
    conf.write_text("epochs = many\n")
    assert main(["--config", str(conf), "--seed", "1", "train-center", "--train", toy, "--out", "x"]) == 2
    with pytest.raises(ConfigError):
        read_config(tmp_path / "absent.conf")


def test_vocab_and_stats(toy, tmp_path):
    v, s = tmp_path / "v.tsv", tmp_path / "s.csv"
    assert main(["vocab", "--in", toy, "--out", str(v), "--stats", str(s)]) == 0
    lines = v.read_text().splitlines()
    assert lines[0] == "encoding\tanchor\tfrequency" and len(lines) > 1
    rows = dict(csv.reader(open(s)))
    assert float(rows["supported"]) == 1.0
    out = tmp_path / "s2.csv"
    assert main(["stats", "--in", toy, "--out", str(out)]) == 0
    assert out.read_text() == s.read_text()


def test_predict_fig_product(model_dir, tmp_path):
    out = tmp_path / "p.tsv"
    assert main(["predict", "--model", str(model_dir), "--product", FIG_PRODUCT, "--k", "5", "--n", "10",
                 "--out", str(out)]) == 0
    rows = list(csv.reader(open(out), delimiter="\t"))
    assert rows[0] == ["product", "rank", "score", "reactants", "center"]
    assert len(rows) == 11
    scores = [float(r[2]) for r in rows[1:]]
    assert scores == sorted(scores, reverse=True)


def test_predict_then_evaluate_with_log(model_dir, toy, tmp_path):
    pred, rep, logf = tmp_path / "p.tsv", tmp_path / "e.csv", tmp_path / "log.jsonl"
    assert main(["--log", str(logf), "predict", "--model", str(model_dir), "--products", toy, "--k", "3", "--n", "3",
                 "--max-steps", "8", "--out", str(pred)]) == 0
    assert main(["--log", str(logf), "evaluate", "--pred", str(pred), "--gold", toy, "--out", str(rep)]) == 0
    rows = list(csv.reader(open(rep)))
    assert rows[0] == ["subset", "n", "top1", "top3", "top5", "top10"]
    vals = [float(x) for x in rows[1][2:]]
    assert vals == sorted(vals)
    records = [json.loads(line) for line in logf.read_text().splitlines()]
    assert [r["command"] for r in records] == ["predict", "evaluate"]


def test_training_log_has_epochs(toy, tmp_path):
    logf = tmp_path / "train.jsonl"
    assert main(["--seed", "1", "--log", str(logf), "train-center", "--train", toy, "--out", str(tmp_path / "m"),
                 *SMALL]) == 0
    records = [json.loads(line) for line in logf.read_text().splitlines()]
    assert [r["epoch"] for r in records if "epoch" in r] == [1, 2]
    assert (tmp_path / "m" / "center" / "manifest.json").exists()


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "retrograph.cli", "stats", "--in", str(data_path("toy_64.txt"))],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("kind,value")
