"""End-to-end command-line flows on a small synthetic corpus."""
import json

import numpy as np
import pytest

from spandet.cli import _parse_thresholds, main
from spandet.data import EntitySpan, parse_conll, write_conll
from spandet.decoder import corpus_prf
from spandet.synth import CLASSES, synthetic_corpus

CONFIG = """\
# small model for pipeline tests
classes = CORP,NAME
d_model = 16
heads = 2
n_mha_layers = 1
n_accn_layers = 1
rd = 0.25
d_w = 8
d_p = 4
batch_size = 8
max_epochs = 4
eval_every = 2
lr = 0.01
seed = 0
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = synthetic_corpus(seed=3, n_train=40, n_dev=10)
    write_conll(root / "train.conll", corpus.train, CLASSES)
    write_conll(root / "dev.conll", corpus.dev, CLASSES)
    (root / "model.cfg").write_text(CONFIG)
    code = main(["train", "--config", str(root / "model.cfg"),
                 "--train", str(root / "train.conll"),
                 "--dev", str(root / "dev.conll"),
                 "--out", str(root / "model.ckpt")])
    assert code == 0
    return root


class TestTrain:
    def test_artifacts_written(self, workdir):
        assert (workdir / "model.ckpt").exists()
        history = (workdir / "model_history.csv").read_text().splitlines()
        assert history[0] == "epoch,loss,lr,dev_f1"
        assert len(history) == 1 + 4   # header + max_epochs rows
        assert (workdir / "model_loss.png").read_bytes()[:8] == \
            b"\x89PNG\r\n\x1a\n"

    def test_classes_discovered_when_config_omits_them(self, workdir,
                                                       tmp_path, capsys):
        cfg_text = "\n".join(line for line in CONFIG.splitlines()
                             if not line.startswith("classes")) + "\n"
        cfg_text = cfg_text.replace("max_epochs = 4", "max_epochs = 1")
        path = tmp_path / "auto.cfg"
        path.write_text(cfg_text)
        code = main(["train", "--config", str(path),
                     "--train", str(workdir / "train.conll"),
                     "--dev", str(workdir / "dev.conll"),
                     "--out", str(tmp_path / "auto.ckpt"), "--no-plot"])
        assert code == 0
        assert not (tmp_path / "auto_loss.png").exists()
        from spandet.checkpoint import load_checkpoint
        assert load_checkpoint(tmp_path / "auto.ckpt").config.classes == \
            ("CORP", "NAME")


class TestEval:
    def test_runs_and_is_repeatable(self, workdir, capsys):
        argv = ["eval", "--ckpt", str(workdir / "model.ckpt"),
                "--data", str(workdir / "dev.conll"), "--threshold", "0.5"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        second = capsys.readouterr().out
        assert first == second
        assert "f1" in first and "precision" in first

    def test_default_threshold_from_config(self, workdir, capsys):
        argv = ["eval", "--ckpt", str(workdir / "model.ckpt"),
                "--data", str(workdir / "dev.conll")]
        assert main(argv) == 0
        assert "threshold 0.50" in capsys.readouterr().out


class TestPredict:
    def test_jsonl_rescored_matches_eval(self, workdir, tmp_path, capsys):
        out = tmp_path / "preds.jsonl"
        assert main(["predict", "--ckpt", str(workdir / "model.ckpt"),
                     "--data", str(workdir / "dev.conll"),
                     "--threshold", "0.5", "--out", str(out)]) == 0
        capsys.readouterr()
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        dev = parse_conll(workdir / "dev.conll", classes=CLASSES)
        assert len(rows) == len(dev)
        type_ids = {name: i + 1 for i, name in enumerate(CLASSES)}
        preds = [[EntitySpan(s["start"], s["end"], type_ids[s["type"]])
                  for s in row["spans"]] for row in rows]
        scored = corpus_prf(preds, [s.gold_spans for s in dev])

        assert main(["eval", "--ckpt", str(workdir / "model.ckpt"),
                     "--data", str(workdir / "dev.conll"),
                     "--threshold", "0.5"]) == 0
        printed = capsys.readouterr().out
        f1_printed = float(printed.split("f1")[1].split()[0])
        assert f1_printed == pytest.approx(100 * scored.f1, abs=0.005)


class TestSweep:
    def test_nine_rows_and_figure(self, workdir, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--ckpt", str(workdir / "model.ckpt"),
                     "--data", str(workdir / "dev.conll"),
                     "--thresholds", "0.1:0.9:0.1",
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "threshold,precision,recall,f1"
        assert len(lines) == 10
        assert [ln.split(",")[0] for ln in lines[1:]] == \
            ["0.10", "0.20", "0.30", "0.40", "0.50", "0.60", "0.70",
             "0.80", "0.90"]
        assert (tmp_path / "sweep.png").exists()
        table = capsys.readouterr().out
        assert "threshold" in table

    def test_no_plot_and_comma_list(self, workdir, tmp_path, capsys):
        out = tmp_path / "two.csv"
        assert main(["sweep", "--ckpt", str(workdir / "model.ckpt"),
                     "--data", str(workdir / "dev.conll"),
                     "--thresholds", "0.25,0.75",
                     "--out", str(out), "--no-plot"]) == 0
        capsys.readouterr()
        assert len(out.read_text().splitlines()) == 3
        assert not (tmp_path / "two.png").exists()

    def test_threshold_parsing(self):
        assert _parse_thresholds("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
        assert _parse_thresholds("0.5") == [0.5]
        assert _parse_thresholds("0.2,0.4") == [0.2, 0.4]
        with pytest.raises(ValueError):
            _parse_thresholds("0.1:0.9")
        with pytest.raises(ValueError):
            _parse_thresholds("0.9:0.1:-0.1")


class TestFailureModes:
    def test_unknown_flag_usage_error(self, workdir, capsys):
        code = main(["eval", "--ckpt", str(workdir / "model.ckpt"),
                     "--data", str(workdir / "dev.conll"), "--bogus", "1"])
        capsys.readouterr()
        assert code == 2

    def test_missing_file_diagnostic(self, tmp_path, capsys):
        code = main(["eval", "--ckpt", str(tmp_path / "absent.ckpt"),
                     "--data", str(tmp_path / "absent.conll")])
        captured = capsys.readouterr()
        assert code == 1
        assert captured.err.startswith("error:")
        assert len(captured.err.strip().splitlines()) == 1

    def test_not_a_checkpoint_diagnostic(self, workdir, tmp_path, capsys):
        bogus = tmp_path / "bogus.ckpt"
        bogus.write_bytes(b"definitely not a checkpoint")
        code = main(["eval", "--ckpt", str(bogus),
                     "--data", str(workdir / "dev.conll")])
        captured = capsys.readouterr()
        assert code == 1
        assert "magic" in captured.err
