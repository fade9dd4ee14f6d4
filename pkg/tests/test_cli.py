import json

import pytest

from varnn import cells, checkpoint
from varnn.cli import main
from varnn.corpus import format_conll, read_conll
from varnn.synthetic import tiny_corpus

SMALL = ["--embed-dim", "8", "--hidden-dim", "8"]


@pytest.fixture
def tiny_files(tmp_path):
    path = tmp_path / "tiny.conll"
    path.write_text(format_conll(tiny_corpus()))
    return path


@pytest.fixture(scope="module")
def overfit_ckpt(tmp_path_factory):
    d = tmp_path_factory.mktemp("overfit")
    data = d / "tiny.conll"
    data.write_text(format_conll(tiny_corpus()))
    code = main(["train", "--train", str(data), "--val", str(data), "--out", str(d / "out"),
                 "--cell", "lstm", "--epochs", "300", "--patience", "300", "--seed", "0",
                 "--embed-dim", "16", "--hidden-dim", "16"])
    assert code == 0
    return d / "out" / "run0.ckpt", data


def test_synth_writes_three_splits(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--n-train", "20", "--n-val", "5",
                 "--n-test", "5", "--seed", "3"]) == 0
    sizes = [len(read_conll(tmp_path / f"{n}.conll")) for n in ("train", "val", "test")]
    assert sizes == [20, 5, 5]


def test_train_writes_checkpoint_history_and_summary(tiny_files, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["train", "--train", str(tiny_files), "--split", "0.75", "--out", str(out),
                 "--epochs", "2", "--runs", "2", "--seed", "7", "--regime", "variational", *SMALL])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split("\t")[:2] for l in lines[:2]] == [["run", "7"], ["run", "8"]]
    assert lines[-1].startswith("summary\tval\truns=2\tbest_f=")
    for seed in (7, 8):
        ckpt = checkpoint.load(out / f"run{seed}.ckpt")
        assert ckpt.seed == seed and ckpt.config.dropout_regime == "variational"
        assert ckpt.config.label_count == 4
        history = (out / f"run{seed}.history.tsv").read_text().splitlines()
        assert history[0].startswith("epoch\t") and len(history) >= 2


def test_eval_of_overfit_checkpoint(overfit_ckpt, capsys):
    ckpt, data = overfit_ckpt
    assert main(["eval", "--checkpoint", str(ckpt), "--test", str(data)]) == 0
    assert capsys.readouterr().out.strip() == "1.0000\t1.0000\t1.0000\t1.0000"


def test_tag_from_file_and_skips_empty_lines(overfit_ckpt, tmp_path, capsys, caplog):
    ckpt, _ = overfit_ckpt
    src = tmp_path / "in.txt"
    src.write_text("show me flights from boston to denver\n\nflights to new york\n")
    assert main(["tag", "--checkpoint", str(ckpt), "--input", str(src)]) == 0
    out = capsys.readouterr()
    tagged = [s.split("\n") for s in out.out.strip().split("\n\n")]
    assert len(tagged) == 2
    assert tagged[0][4].split() == ["boston", "B-dept"]
    assert [l.split()[1] for l in tagged[1]] == ["O", "O", "B-arr", "I-arr"]
    assert "line 2: empty" in caplog.text


def test_eval_unknown_label_exits_4(overfit_ckpt, tmp_path, capsys):
    ckpt, _ = overfit_ckpt
    bad = tmp_path / "bad.conll"
    bad.write_text("from O\nboston B-city\n")
    assert main(["eval", "--checkpoint", str(ckpt), "--test", str(bad)]) == 4
    assert "B-city" in capsys.readouterr().err


def test_io_errors_exit_2(tmp_path, tiny_files):
    assert main(["train", "--train", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"), "--test", str(tiny_files)]) == 2
    malformed = tmp_path / "m.conll"
    malformed.write_text("just-one-field\n")
    assert main(["train", "--train", str(malformed), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as e:
        main(["train", "--cell", "rnn"])
    assert e.value.code == 2


def test_corrupt_checkpoint_exits_4(tmp_path, tiny_files):
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"garbage")
    assert main(["eval", "--checkpoint", str(junk), "--test", str(tiny_files)]) == 4


def test_label_count_below_data_exits_4(tiny_files, tmp_path):
    assert main(["train", "--train", str(tiny_files), "--out", str(tmp_path), "--epochs", "1",
                 "--label-count", "2", *SMALL]) == 4


def test_non_finite_loss_exits_3(tiny_files, tmp_path, monkeypatch):
    from varnn import training
    monkeypatch.setattr(training, "sequence_loss", lambda logits, y: float("inf"))
    assert main(["train", "--train", str(tiny_files), "--out", str(tmp_path), "--epochs", "1",
                 *SMALL]) == 3


def test_config_file_supplies_defaults(tiny_files, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "embed_dim": 4, "hidden_dim": 3, "cell": "gru"}))
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "train", "--train", str(tiny_files), "--out", str(out)]) == 0
    ckpt = checkpoint.load(out / "run0.ckpt")
    assert (ckpt.config.cell_kind, ckpt.config.embed_dim, ckpt.config.hidden_dim) == ("gru", 4, 3)
    assert ckpt.train_config["epochs"] == 1


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--cell", "gru", "--direction", "bi"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "cell\tdirection\tregime\tmax_rel_err\tworst_tensor"
    assert len(lines) == 4


def test_gradcheck_catches_forget_gate_sign_flip(monkeypatch, capsys):
    real = cells.backward_terms

    def flipped(tape, w, grad_h, grad_c):
        terms, dx, dh, dc = real(tape, w, grad_h, grad_c)
        terms = [(wx, wh, b, -da if wh == "W_hf" else da, h) for wx, wh, b, da, h in terms]
        return terms, dx, dh, dc

    monkeypatch.setattr(cells, "backward_terms", flipped)
    assert main(["gradcheck", "--cell", "lstm", "--direction", "uni", "--regime", "none"]) == 5
    err = capsys.readouterr().err
    assert "W_hf" in err and "lstm/uni/none" in err
