import csv
import hashlib
import json
import math

import pytest

from adtext import corpus
from adtext.checkpoint import Checkpoint
from adtext.corpus import DatasetSplit
from adtext.encoder import ModelConfig, ModelParams
from adtext.train import TrainConfig, finetune
from adtext.cli import main, parse_config_text
from adtext.errors import ConfigError
from adtext.metrics import ConfusionMatrix, parse_report_csv
from adtext.synthetic import SECTORS, keyword_corpus, write_jsonl
from adtext.tokenizer import SPECIALS, build_vocab

SMALL = ["--hidden-size", "16", "--num-layers", "1", "--num-heads", "2", "--intermediate-size", "32",
         "--max-seq", "16", "--vocab-size", "300", "--batch-size", "16"]


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    write_jsonl(keyword_corpus(per_class=10, seed=1), path)
    return path


@pytest.fixture(scope="module")
def three_class_path(tmp_path_factory):
    sectors = {k: SECTORS[k] for k in list(SECTORS)[:3]}
    path = tmp_path_factory.mktemp("data3") / "three.jsonl"
    write_jsonl(keyword_corpus(per_class=10, seed=2, sectors=sectors), path)
    return path


@pytest.fixture(scope="module")
def finetuned(tmp_path_factory, corpus_path):
    out = tmp_path_factory.mktemp("ft")
    assert main(["finetune", "--data", str(corpus_path), "--out", str(out), "--epochs", "2", *SMALL]) == 0
    return out


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_build_vocab(tmp_path, corpus_path):
    assert main(["build-vocab", "--data", str(corpus_path), "--out", str(tmp_path / "a"), "--vocab-size", "200"]) == 0
    lines = (tmp_path / "a" / "vocab.txt").read_text(encoding="utf-8").splitlines()
    assert lines[:5] == list(SPECIALS)
    assert main(["build-vocab", "--data", str(corpus_path), "--out", str(tmp_path / "b"), "--vocab-size", "200"]) == 0
    assert sha(tmp_path / "a" / "vocab.txt") == sha(tmp_path / "b" / "vocab.txt")


def test_missing_file_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert main(["build-vocab", "--data", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_finetune_artifacts(finetuned):
    for name in ("model.ckpt", "vocab.txt", "trace.csv", "labels.csv", "confusion.csv", "train_confusion.csv",
                 "report.txt", "config.txt"):
        assert (finetuned / name).is_file(), name
    ckpt = Checkpoint.load(finetuned / "model.ckpt")
    assert len(ckpt.labels) == 12
    rows = list(csv.DictReader((finetuned / "trace.csv").open(encoding="utf-8")))
    assert [int(r["iteration"]) for r in rows] == [1, 2]
    cm = ConfusionMatrix.from_csv((finetuned / "confusion.csv").read_text(encoding="utf-8"))
    assert cm.counts.shape == (12, 12)
    assert cm.total == 12 * 3  # 10 per class, 7 train / 3 test
    report = (finetuned / "report.txt").read_text(encoding="utf-8")
    assert "weighted avg" in report and "accuracy" in report


def test_train_fraction_flag(tmp_path, corpus_path):
    out = tmp_path / "f"
    assert main(["finetune", "--data", str(corpus_path), "--out", str(out), "--epochs", "1",
                 "--train-fraction", "0.8", *SMALL]) == 0
    cm = ConfusionMatrix.from_csv((out / "confusion.csv").read_text(encoding="utf-8"))
    train_cm = ConfusionMatrix.from_csv((out / "train_confusion.csv").read_text(encoding="utf-8"))
    assert cm.total == 12 * 2 and train_cm.total == 12 * 8


def test_finetune_same_seed_same_bytes(tmp_path, corpus_path):
    for name in ("a", "b"):
        assert main(["finetune", "--data", str(corpus_path), "--out", str(tmp_path / name), "--epochs", "1",
                     "--seed", "4", *SMALL]) == 0
    assert sha(tmp_path / "a" / "trace.csv") == sha(tmp_path / "b" / "trace.csv")
    assert sha(tmp_path / "a" / "model.ckpt") == sha(tmp_path / "b" / "model.ckpt")


def test_evaluate_overfit_on_training_data(tmp_path, three_class_path, capsys):
    # fit and select on the same examples, so the saved iteration has memorized them
    records = corpus.prepare(corpus.load_corpus(three_class_path))
    labels = corpus.LabelMap.from_names(r.category_name for r in records)
    examples = corpus.to_examples(records, labels)
    vocab = build_vocab([e.text for e in examples], 300)
    cfg = ModelConfig(hidden_size=16, num_layers=1, num_heads=2, max_seq=16, vocab_size=len(vocab),
                      intermediate_size=32, num_classes=len(labels), dropout_rate=0.0)
    model = Checkpoint(cfg, vocab, ModelParams.initialize(cfg, 0), labels.names)
    best, trace = finetune(DatasetSplit(examples, examples, 0, 1.0), model,
                           TrainConfig(epochs=150, batch_size=4, learning_rate=1e-3))
    assert max(r.test_accuracy for r in trace.records) == 1.0
    best.save(tmp_path / "overfit.ckpt")
    assert main(["evaluate", "--checkpoint", str(tmp_path / "overfit.ckpt"), "--data", str(three_class_path),
                 "--format", "csv"]) == 0
    rows = parse_report_csv(capsys.readouterr().out)
    accuracy_row = next(r for r in rows if r[0] == "accuracy")
    assert float(accuracy_row[3]) == 1.0


def test_evaluate_unknown_label(tmp_path, finetuned, capsys):
    data = tmp_path / "other.jsonl"
    data.write_text(json.dumps({"id": "1", "category": "Unknown Sector", "text": "vize"}) + "\n", encoding="utf-8")
    assert main(["evaluate", "--checkpoint", str(finetuned / "model.ckpt"), "--data", str(data)]) == 2
    assert "Unknown Sector" in capsys.readouterr().err


def test_evaluate_empty_file(tmp_path, finetuned):
    data = tmp_path / "empty.jsonl"
    data.write_text("")
    assert main(["evaluate", "--checkpoint", str(finetuned / "model.ckpt"), "--data", str(data)]) == 2


def test_predict_zero_classifier(tmp_path, finetuned, capsys):
    ckpt = Checkpoint.load(finetuned / "model.ckpt")
    ckpt.params["classifier.weight"].data[:] = 0
    ckpt.params["classifier.bias"].data[:] = 0
    ckpt.save(tmp_path / "zero.ckpt")
    texts = ["Hızlı Vize İşlemleri", "kedi maması", "bilinmeyen kelime"]
    assert main(["predict", "--checkpoint", str(tmp_path / "zero.ckpt"), *texts]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(texts)
    for text, line in zip(texts, lines):
        row = json.loads(line)
        assert row["text"] == text
        assert len(row["probabilities"]) == 12
        assert sum(row["probabilities"]) == pytest.approx(1.0, abs=1e-6)
        assert all(p == pytest.approx(1 / 12, abs=1e-7) for p in row["probabilities"])


def test_predict_probabilities_sum_to_one(finetuned, capsys):
    assert main(["predict", "--checkpoint", str(finetuned / "model.ckpt"), "çiçek siparişi", "kargo"]) == 0
    for line in capsys.readouterr().out.splitlines():
        assert math.fsum(json.loads(line)["probabilities"]) == pytest.approx(1.0, abs=1e-6)


def test_stats(tmp_path):
    data = tmp_path / "s.jsonl"
    write_jsonl([{"id": "0", "category": "a", "text": "iki kelime"}, {"id": "1", "category": "b", "text": "tek"},
                 {"id": "2", "category": "a", "text": "üç kelime var"}], data)
    assert main(["stats", "--data", str(data), "--out", str(tmp_path / "o")]) == 0
    counts = list(csv.reader((tmp_path / "o" / "category_counts.csv").open(encoding="utf-8")))
    assert counts[0] == ["category", "count"]
    assert sum(int(r[1]) for r in counts[1:]) == 3
    hist = list(csv.reader((tmp_path / "o" / "word_counts.csv").open(encoding="utf-8")))
    assert hist[1:] == [["1", "1"], ["2", "1"], ["3", "1"]]


def test_stats_matches_line_tally(tmp_path, corpus_path):
    assert main(["stats", "--raw", "--data", str(corpus_path), "--out", str(tmp_path)]) == 0
    tally = {}
    for line in corpus_path.read_text(encoding="utf-8").splitlines():
        cat = json.loads(line)["category"]
        tally[cat] = tally.get(cat, 0) + 1
    rows = list(csv.reader((tmp_path / "category_counts.csv").open(encoding="utf-8")))[1:]
    assert {r[0]: int(r[1]) for r in rows} == tally


def test_report_from_confusion(tmp_path, capsys):
    path = tmp_path / "cm.csv"
    path.write_text("a,b\n3,1\n0,4\n", encoding="utf-8")
    assert main(["report", "--confusion", str(path), "--format", "markdown"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("| id | precision |")
    assert "| accuracy |  |  | 0.88 | 8 |" in out


def test_config_file_and_flag_precedence(tmp_path, corpus_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nvocab_size = 150\nseed = 3\n", encoding="utf-8")
    out = tmp_path / "v"
    assert main(["build-vocab", "--data", str(corpus_path), "--config", str(cfg), "--out", str(out),
                 "--seed", "9"]) == 0
    echoed = parse_config_text((out / "config.txt").read_text(encoding="utf-8"))
    assert echoed["vocab_size"] == 150 and echoed["seed"] == 9
    assert len((out / "vocab.txt").read_text(encoding="utf-8").splitlines()) <= 150


def test_config_errors(tmp_path, corpus_path):
    with pytest.raises(ConfigError):
        parse_config_text("colour = blue\n")
    with pytest.raises(ConfigError):
        parse_config_text("epochs = many\n")
    assert main(["build-vocab", "--data", str(corpus_path), "--out", str(tmp_path), "--train-fraction", "1.5"]) == 2
