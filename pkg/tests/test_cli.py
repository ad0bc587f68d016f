import csv
import json
import os

import pytest

from seminfo.cli import main
from seminfo.client import MockChatServer
from seminfo.corpusio import read_paraphrase_records
from seminfo.experiment import run_experiment
from seminfo.synth import SynthConfig


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(d), "--sentences", "40", "--paraphrases", "6", "--seed", "3"]) == 0
    return d


def test_synth_writes_aligned_files(corpus):
    recs = read_paraphrase_records(corpus / "paraphrases.jsonl")
    assert len(recs) == 40 and all(len(r.paraphrases) == 6 for r in recs)
    assert len((corpus / "gold.txt").read_text().splitlines()) == 40
    assert len((corpus / "scores.jsonl").read_text().splitlines()) == 40


def test_score_verb_is_deterministic(corpus, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["score", "--paraphrases", str(corpus / "paraphrases.jsonl"), "--out", str(a)]) == 0
    assert main(["score", "--paraphrases", str(corpus / "paraphrases.jsonl"), "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == (corpus / "scores.jsonl").read_bytes()


def test_train_parse_eval_correlate(corpus, tmp_path, capsys):
    para, scores, gold = (str(corpus / f) for f in ("paraphrases.jsonl", "scores.jsonl", "gold.txt"))
    cfg = tmp_path / "train.cfg"
    cfg.write_text("num_nonterminals = 4\nbatch_size = 8\nsamples_per_sentence = 4\n")
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--paraphrases", para, "--scores", scores, "--gold", gold,
                 "--out", str(run), "--max-steps", "6", "--checkpoint-every", "2", "--eval-every", "3"]) == 0
    assert sorted(os.listdir(run)) == ["ckpt_000000.json", "ckpt_000002.json", "ckpt_000004.json",
                                       "ckpt_000006.json", "metrics.jsonl"]
    recs = [json.loads(l) for l in (run / "metrics.jsonl").read_text().splitlines()]
    assert len(recs) == 6 and "dev_f1" in recs[2] and 0 <= recs[5]["dev_f1"] <= 1
    ck = json.loads((run / "ckpt_000006.json").read_text())
    assert ck["extra"]["config"]["num_nonterminals"] == 4 and ck["extra"]["config"]["max_steps"] == 6

    pred = tmp_path / "pred.jsonl"
    assert main(["parse", "--paraphrases", para, "--checkpoint", str(run / "ckpt_000006.json"),
                 "--out", str(pred), "--format", "both"]) == 0
    assert len(pred.read_text().splitlines()) == 40
    assert (tmp_path / "pred.txt").read_text().startswith("(X ")
    for extra in (["--scores", scores], ["--baseline", "right"], ["--baseline", "random"],
                  ["--checkpoint", str(run / "ckpt_000006.json"), "--decoder", "viterbi"]):
        assert main(["parse", "--paraphrases", para, "--out", str(tmp_path / "p2.jsonl")] + extra) == 0

    capsys.readouterr()
    report = tmp_path / "eval.json"
    assert main(["eval", "--pred", str(pred), "--gold", gold, "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert 0 <= rep["corpus_f1"] <= 1 and rep["scored"] + rep["skipped"] == 40
    assert set(rep["label_recall"]) <= {"S", "NP", "VP", "PP", "NB"}
    assert "corpus_f1" in json.loads(capsys.readouterr().out)
    # brackets are accepted as predictions too
    assert main(["eval", "--pred", gold, "--gold", gold]) == 0
    assert json.loads(capsys.readouterr().out)["corpus_f1"] == 1.0

    out = tmp_path / "corr"
    assert main(["correlate", "--checkpoints", str(run), "--paraphrases", para, "--scores", scores,
                 "--gold", gold, "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "correlation.csv")))
    assert sum(r[0] == "checkpoint" for r in rows) == 4
    assert (out / "correlation.png").read_bytes()[:4] == b"\x89PNG"

    # resume continues from a mid-run checkpoint
    assert main(["train", "--config", str(cfg), "--paraphrases", para, "--scores", scores, "--out", str(run),
                 "--max-steps", "8", "--resume", str(run / "ckpt_000006.json")]) == 0
    assert len((run / "metrics.jsonl").read_text().splitlines()) == 8


def test_errors_return_nonzero(corpus, tmp_path, capsys):
    para = str(corpus / "paraphrases.jsonl")
    assert main(["score", "--paraphrases", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "x")]) == 1
    assert "missing.jsonl" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("what = 1\n")
    assert main(["train", "--config", str(bad), "--paraphrases", para, "--objective", "ll", "--out", str(tmp_path / "r")]) == 1
    with pytest.raises(SystemExit):
        main(["train", "--paraphrases", para, "--out", str(tmp_path / "r")])  # seminfo without scores


def test_paraphrase_verb_against_mock(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("the dog ran\n\na cat sat\n")
    out = tmp_path / "p.jsonl"
    with MockChatServer(echo=2) as srv:
        assert main(["paraphrase", "--input", str(src), "--out", str(out), "--endpoint", srv.url, "--model", "m",
                     "--templates", "shuffle,cleft", "--lang", "French"]) == 0
    recs = read_paraphrase_records(out)
    assert [len(r.paraphrases) for r in recs] == [4, 4]
    assert all("must be in French" in r["body"] for r in srv.requests)


def test_small_experiment(tmp_path):
    res = run_experiment(tmp_path, seeds=(0, 1), steps=3, synth_cfg=SynthConfig(num_sentences=30, num_paraphrases=4))
    assert len(res.runs) == 4
    summary = json.loads((tmp_path / "results.json").read_text())
    assert set(summary["mean_f1"]) == {"seminfo", "ll"} and set(summary["baselines"]) == {"left", "right", "mtd"}
    assert (tmp_path / "f1.png").exists() and (tmp_path / "correlation.csv").exists()
    single = run_experiment(tmp_path / "one", seeds=(0,), steps=1, synth_cfg=SynthConfig(num_sentences=10, num_paraphrases=2))
    assert single.sentence_rho_seminfo is None
