import csv
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from seminfo.evaluate import (
    SKIP,
    CheckpointEval,
    average_ranks,
    corpus_f1,
    correlation_study,
    f1_ttest,
    fisher_aggregate,
    label_recall,
    sentence_f1,
    sliding_windows,
    spearman,
)
from seminfo.pcfg import Grammar
from seminfo.maxsub import SpanScoreTable
from seminfo.trees import ConstituentTree, GoldTree, left_branching, parse_brackets, right_branching

from test_treecrf import random_phi
from seminfo.treecrf import crf_sample


def gold(n, spans, label="X"):
    return GoldTree(n, frozenset((i, j, label) for i, j in spans))


def test_sentence_f1_examples():
    g = gold(4, [(0, 2), (0, 3), (0, 4)])
    assert sentence_f1(left_branching(4), g) == 1.0
    pred = ConstituentTree.from_spans(4, [(0, 4), (0, 2), (2, 4)])
    assert sentence_f1(pred, gold(4, [(0, 2), (1, 4), (0, 4)])) == pytest.approx(0.5, abs=1e-15)
    assert sentence_f1(left_branching(2), gold(2, [(0, 2)])) is SKIP
    assert sentence_f1(left_branching(4), gold(4, [(0, 4)])) is SKIP
    assert sentence_f1(right_branching(4), gold(4, [(0, 2), (0, 4)])) == 0.0


def test_sentence_f1_with_punctuation():
    g = parse_brackets("(S (NP (D the) (N dog)) (VP (V ran)) (. .))")
    mask = [False, False, False, True]
    # over the 3 words, (0,2) is the only non-trivial gold span
    assert sentence_f1(left_branching(3), g, mask) == 1.0
    assert sentence_f1(left_branching(4), g, mask) == 1.0
    assert sentence_f1(right_branching(3), g, mask) == 0.0
    with pytest.raises(ValueError, match="does not match"):
        sentence_f1(left_branching(5), g, mask)
    with pytest.raises(ValueError):
        sentence_f1(left_branching(4), g, [False])


def test_corpus_f1_examples():
    assert corpus_f1([1.0, 0.5]) == 0.75
    assert corpus_f1([SKIP, 1.0]) == 1.0
    with pytest.raises(ValueError):
        corpus_f1([SKIP, SKIP])


def _oracle_f1(pred_spans, gold_spans, n):
    p = {s for s in pred_spans if 1 < s[1] - s[0] < n}
    g = {s for s in gold_spans if 1 < s[1] - s[0] < n}
    if n <= 2 or not g:
        return None
    tp = len(p & g)
    return 0.0 if tp == 0 else 2 * tp / (len(p) + len(g))


def test_corpus_f1_matches_recomputation():
    rng = np.random.default_rng(0)
    values, ref = [], []
    for _ in range(100):
        n = int(rng.integers(1, 12))
        a, b = crf_sample((n, random_phi(rng, n)), rng, 2)
        values.append(sentence_f1(a, gold(n, b.spans)))
        ref.append(_oracle_f1(a.spans, b.spans, n))
    assert values == [pytest.approx(r) if r is not None else None for r in ref]
    kept = [r for r in ref if r is not None]
    assert corpus_f1(values) == pytest.approx(sum(kept) / len(kept), abs=1e-15)
    perm = rng.permutation(len(values))
    assert corpus_f1([values[k] for k in perm]) == pytest.approx(corpus_f1(values), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 10), st.integers(0, 10_000))
def test_sentence_f1_bounds_and_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    a, b = crf_sample((n, {}), rng, 2)
    f = sentence_f1(a, gold(n, b.spans))
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(sentence_f1(b, gold(n, a.spans)), abs=1e-15)


GOLD3 = [
    "(S (NP (D the) (N dog)) (VP (V saw) (NP (D a) (N cat))))",
    "(S (NP (N it)) (VP (V ran) (PP (P to) (NP (N town)))) (. .))",
    "(S (NP (D a) (A big) (N dog)) (VP (V ran)))",
]


def test_label_recall_hand_fixture(caplog):
    golds = [parse_brackets(s) for s in GOLD3]
    masks = [[False] * 5, [False] * 4 + [True], [False] * 4]
    preds = [ConstituentTree.from_spans(5, [(0, 5), (0, 2), (2, 5), (2, 4)]), right_branching(4), left_branching(4)]
    # NP: hit (0,2) in 1, miss (3,5) in 1, hit (0,3) in 3; VP: (2,5) and (1,4); PP: (2,4)
    with caplog.at_level(logging.WARNING):
        rec, counts = label_recall(preds, golds, ["NP", "VP", "PP", "ADJP"], masks, return_counts=True)
    assert rec["NP"] == pytest.approx(2 / 3) and rec["VP"] == 1.0 and rec["PP"] == 1.0
    assert math.isnan(rec["ADJP"]) and counts == {"NP": 3, "VP": 2, "PP": 1, "ADJP": 0}
    assert "ADJP" in caplog.text
    assert list(label_recall(preds, golds, punct_masks=masks)) == ["NP", "VP", "PP"]
    perfect = [ConstituentTree.from_spans(5, [(0, 5), (0, 2), (2, 5), (3, 5)])]
    assert label_recall(perfect, golds[:1]) == {"NP": 1.0, "VP": 1.0}
    empty = [right_branching(5)]
    assert label_recall(empty, [gold(5, [(0, 2), (0, 3)], "NP")]) == {"NP": 0.0}


def test_spearman_examples():
    assert spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-15)
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0, abs=1e-15)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    assert spearman([1, 1, 1], [1, 2, 3]) is None
    assert list(average_ranks([3, 1, 3, 2])) == [3.5, 1.0, 3.5, 2.0]
    with pytest.raises(ValueError):
        spearman([1], [1])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])


ints = st.lists(st.integers(-3, 3), min_size=2, max_size=12)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_spearman_matches_scipy_and_is_rank_invariant(data):
    xs = data.draw(ints)
    ys = data.draw(st.lists(st.integers(-3, 3), min_size=len(xs), max_size=len(xs)))
    r = spearman(xs, ys)
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        assert r is None
        return
    assert r == pytest.approx(stats.spearmanr(xs, ys).statistic, abs=1e-12)
    assert spearman([math.exp(x) for x in xs], [y ** 3 for y in ys]) == pytest.approx(r, abs=1e-12)


def test_fisher_examples(caplog):
    assert fisher_aggregate([0.3]) == pytest.approx(0.3, abs=1e-15)
    assert fisher_aggregate([0.5, 0.5]) == pytest.approx(0.5, abs=1e-15)
    assert fisher_aggregate([0.0, 0.8]) == pytest.approx(0.5, abs=1e-12)
    assert fisher_aggregate([None, 0.2, float("nan")]) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(ValueError):
        fisher_aggregate([None])
    with caplog.at_level(logging.WARNING):
        assert fisher_aggregate([1.0, 1.0]) == pytest.approx(1 - 1e-7, abs=1e-12)
    assert "clipping" in caplog.text


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=10))
def test_fisher_within_range(rs):
    a = fisher_aggregate(rs)
    assert min(rs) - 1e-12 <= a <= max(rs) + 1e-12


def test_ttest_helper():
    t, p = f1_ttest([0.9, 0.8, 0.85], [0.2, 0.3, 0.25])
    ref = stats.ttest_ind([0.9, 0.8, 0.85], [0.2, 0.3, 0.25])
    assert t == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue)


def hand_checkpoints():
    # four sentences; the last one is skipped for F1
    f1 = [[0.2, 0.4, 1.0, SKIP], [0.5, 0.4, 0.5, SKIP], [0.9, 0.4, 0.0, SKIP]]
    sem = [[1, 5, 3, 0], [3, 5, 1, 1], [2, 5, 2, 2]]
    lz = [[-4, -1, -3, 0], [-3, -1, -5, 0], [-5, -1, -4, 0]]
    return [CheckpointEval("run", s, f, [float(v) for v in se], [float(v) for v in z])
            for s, f, se, z in zip([0, 50, 100], f1, sem, lz)]


def test_correlation_study_hand_fixture(tmp_path):
    rep = correlation_study(hand_checkpoints(), window=100)
    # sentence 0: F1 ranks (1,2,3), SemInfo ranks (1,3,2) -> 0.5; log Z ranks (2,3,1) -> -0.5
    # sentence 1: constant F1 -> undefined; sentence 2: F1 ranks (3,2,1), SemInfo (3,1,2) -> 0.5, log Z (3,1,2) -> 0.5
    assert rep.sentence_seminfo_f1 == pytest.approx(0.5, abs=1e-12)
    assert rep.sentence_ll_f1 == pytest.approx(0.0, abs=1e-12)
    assert (rep.defined_seminfo, rep.defined_ll, rep.num_sentences) == (2, 2, 3)
    # corpus means: F1 .5333 > .4667 > .4333; SemInfo 2.25 < 2.5 < 2.75; log Z -8/4 > -9/4 > -10/4
    (win,) = rep.windows
    assert (win["lo"], win["hi"], win["n"]) == (0, 100, 3)
    assert win["rho_seminfo_f1"] == pytest.approx(-1.0) and win["rho_ll_f1"] == pytest.approx(1.0)
    rep.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0][0] == "kind" and rows[-1][0] == "sentence"
    assert len(rows) == 1 + 3 + 1 + 1
    rep.write_json(tmp_path / "c.json")


def test_correlation_study_identical_checkpoints_are_undefined(tmp_path):
    c = hand_checkpoints()[0]
    rep = correlation_study([c, c, c])
    assert rep.sentence_seminfo_f1 is None and rep.sentence_ll_f1 is None
    assert rep.defined_seminfo == 0
    rep.write_csv(tmp_path / "c.csv")
    assert "undefined" in (tmp_path / "c.csv").read_text()
    with pytest.raises(ValueError, match="at least 3"):
        correlation_study([c, c])


def test_correlation_study_from_grammars(tmp_path):
    from seminfo.pcfg import save_checkpoint

    rng = np.random.default_rng(4)
    words = ["a", "b", "c"]
    sents = [list(rng.choice(words, int(rng.integers(3, 7)))) for _ in range(6)]
    golds = [gold(len(s), left_branching(len(s)).spans) for s in sents]
    scores = [SpanScoreTable(str(k), len(s), {(0, 2): 1.0}) for k, s in enumerate(sents)]
    items = []
    for step in range(3):
        g = Grammar.random(2, words, rng, 2.0)
        p = tmp_path / f"ck{step}.json"
        save_checkpoint(p, g, step * 10, {}, None)
        items.append(str(p))
    rep = correlation_study(items, sents, scores, golds)
    assert [c.step for c in rep.checkpoints] == [0, 10, 20]
    assert all(0 <= c.corpus_f1 <= 1 for c in rep.checkpoints)


def test_sliding_windows():
    assert sliding_windows(1000) == [(0, 500), (250, 750), (500, 1000)]
    assert sliding_windows(10, 4, 3) == [(0, 4), (3, 7), (6, 10)]
    assert sliding_windows(0) == [(0, 0)]
