"""Sentence-F1, label recall, rank correlation and checkpoint correlation studies."""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import pcfg
from .trees import ConstituentTree, GoldTree

log = logging.getLogger(__name__)

SKIP = None  # sentence excluded from averaging
UNDEFINED = None  # correlation of a constant sequence


def _coord_map(punct_mask):
    """Original boundary position -> position among non-punctuation tokens."""
    out = [0]
    for p in punct_mask:
        out.append(out[-1] + (0 if p else 1))
    return out


def project_spans(spans, punct_mask):
    """Map spans over original tokens to punctuation-free coordinates and
    drop trivial results (single words, the whole sentence, empty spans)."""
    cmap = _coord_map(punct_mask)
    m = cmap[-1]
    out = set()
    for s in spans:
        i, j = s[0], s[1]
        a, b = cmap[i], cmap[j]
        if b - a >= 2 and not (a == 0 and b == m):
            out.add((a, b))
    return out


def _pred_spans(pred: ConstituentTree, n_orig, punct_mask):
    m = n_orig - sum(punct_mask)
    if pred.n == n_orig:
        return project_spans(pred.spans, punct_mask)
    if pred.n == m:
        return {s for s in pred.spans if 2 <= s[1] - s[0] < m}
    raise ValueError(f"prediction over {pred.n} tokens does not match gold ({n_orig} tokens, {m} without punctuation)")


def sentence_f1(pred: ConstituentTree, gold: GoldTree, punct_mask=None):
    """Unlabeled span F1 after removing punctuation and trivial spans.

    ``punct_mask`` flags punctuation among the gold tokens (defaults to none).
    The prediction may cover either all gold tokens or only the unmasked
    ones.  Returns SKIP for sentences of two words or fewer and for gold trees
    with no non-trivial span left.
    """
    if punct_mask is None:
        punct_mask = [False] * gold.n
    if len(punct_mask) != gold.n:
        raise ValueError(f"punctuation mask has {len(punct_mask)} entries for {gold.n} gold tokens")
    m = gold.n - sum(punct_mask)
    p = _pred_spans(pred, gold.n, punct_mask)
    if m <= 2:
        return SKIP
    g = project_spans(gold.spans(), punct_mask)
    if not g:
        return SKIP
    hit = len(p & g)
    if hit == 0:
        return 0.0
    prec, rec = hit / len(p), hit / len(g)
    return 2 * prec * rec / (prec + rec)


def corpus_f1(values) -> float:
    """Mean of the non-skipped sentence F1 values."""
    kept = [v for v in values if v is not SKIP and not (isinstance(v, float) and math.isnan(v))]
    if not kept:
        raise ValueError("every sentence was skipped")
    return float(sum(kept) / len(kept))


def label_recall(preds, golds, labels=None, punct_masks=None, return_counts=False):
    """Per-label fraction of gold spans recovered by the predictions.

    Labels without any gold span get NaN (zero denominator).
    """
    hits, totals = {}, {}
    for k, (pred, gold) in enumerate(zip(preds, golds)):
        mask = punct_masks[k] if punct_masks is not None else [False] * gold.n
        ps = _pred_spans(pred, gold.n, mask)
        for i, j, lab in gold.labeled_spans:
            proj = project_spans([(i, j)], mask)
            if not proj:
                continue
            totals[lab] = totals.get(lab, 0) + 1
            if next(iter(proj)) in ps:
                hits[lab] = hits.get(lab, 0) + 1
    if labels is None:
        labels = sorted(totals, key=lambda l: (-totals[l], l))
    out = {}
    for lab in labels:
        tot = totals.get(lab, 0)
        if tot == 0:
            log.warning("label %r has no gold spans; recall undefined", lab)
        out[lab] = hits.get(lab, 0) / tot if tot else math.nan
    if return_counts:
        return out, {lab: totals.get(lab, 0) for lab in labels}
    return out


def average_ranks(xs) -> np.ndarray:
    x = np.asarray(xs, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys):
    """Pearson correlation of average ranks; UNDEFINED if either side is constant."""
    if len(xs) != len(ys):
        raise ValueError("spearman needs sequences of equal length")
    if len(xs) < 2:
        raise ValueError("spearman needs at least two points")
    rx, ry = average_ranks(xs), average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        return UNDEFINED
    return float(rx @ ry) / den


def fisher_aggregate(rhos) -> float:
    """tanh of the mean atanh over the defined coefficients."""
    vals = [r for r in rhos if r is not UNDEFINED and not math.isnan(r)]
    if not vals:
        raise ValueError("no defined correlation coefficients to aggregate")
    lim = 1 - 1e-7
    z = []
    for r in vals:
        if abs(r) >= lim:
            log.warning("clipping correlation %r to +-%r before atanh", r, lim)
            r = math.copysign(lim, r)
        z.append(math.atanh(r))
    return math.tanh(sum(z) / len(z))


def f1_ttest(a, b):
    """Two-tailed independent-samples t-test on two lists of F1 values."""
    from scipy import stats

    res = stats.ttest_ind(np.asarray(a, float), np.asarray(b, float))
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# checkpoint correlation studies


@dataclass
class CheckpointEval:
    name: str
    step: int
    f1: List[Optional[float]]
    seminfo: List[float]
    log_Z: List[float]

    @property
    def corpus_f1(self):
        return corpus_f1(self.f1)

    @property
    def mean_seminfo(self):
        return float(np.mean(self.seminfo))

    @property
    def mean_log_Z(self):
        return float(np.mean(self.log_Z))


def evaluate_grammar(grammar, sentences, scores, golds, punct_masks=None, name="", step=0) -> CheckpointEval:
    """TreeMBR-decode every sentence and collect F1, SemInfo and log Z."""
    from .parse import parse_mbr_batch
    from .train import seminfo_reward

    trees = parse_mbr_batch(grammar, sentences)
    logZ = pcfg.log_likelihood(grammar, sentences)
    f1 = [sentence_f1(t, g, punct_masks[k] if punct_masks is not None else None)
          for k, (t, g) in enumerate(zip(trees, golds))]
    sem = [seminfo_reward(t, sc) for t, sc in zip(trees, scores)]
    return CheckpointEval(name, int(step), f1, sem, [float(z) for z in logZ])


@dataclass
class CorrelationReport:
    sentence_seminfo_f1: Optional[float]
    sentence_ll_f1: Optional[float]
    defined_seminfo: int
    defined_ll: int
    num_sentences: int
    windows: List[dict] = field(default_factory=list)
    checkpoints: List[CheckpointEval] = field(default_factory=list)

    def summary(self):
        d = {k: v for k, v in asdict(self).items() if k != "checkpoints"}
        d["checkpoints"] = [
            {"name": c.name, "step": c.step, "corpus_f1": c.corpus_f1, "mean_seminfo": c.mean_seminfo, "mean_log_Z": c.mean_log_Z}
            for c in self.checkpoints
        ]
        return d

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "name", "step_lo", "step_hi", "corpus_f1", "mean_seminfo", "mean_log_Z", "rho_seminfo_f1", "rho_ll_f1"])
            for c in self.checkpoints:
                w.writerow(["checkpoint", c.name, c.step, c.step, c.corpus_f1, c.mean_seminfo, c.mean_log_Z, "", ""])
            for win in self.windows:
                w.writerow(["window", "", win["lo"], win["hi"], "", "", "", _cell(win["rho_seminfo_f1"]), _cell(win["rho_ll_f1"])])
            w.writerow(["sentence", "", "", "", "", "", "", _cell(self.sentence_seminfo_f1), _cell(self.sentence_ll_f1)])

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def _cell(v):
    return "undefined" if v is None else v


def _aggregate_or_none(rhos):
    try:
        return fisher_aggregate(rhos)
    except ValueError:
        return None


def sliding_windows(max_step, width=None, stride=None):
    """Closed step ranges [lo, hi]; defaults are half- and quarter-run sized."""
    if max_step <= 0:
        return [(0, 0)]
    width = width or max(1, max_step // 2)
    stride = stride or max(1, width // 2)
    out = []
    lo = 0
    while True:
        out.append((lo, lo + width))
        if lo + width >= max_step:
            break
        lo += stride
    return out


def correlation_study(checkpoints, sentences=None, scores=None, golds=None, punct_masks=None,
                      window=None, stride=None) -> CorrelationReport:
    """Sentence- and corpus-level rank correlations across checkpoints.

    ``checkpoints`` holds CheckpointEval records, checkpoint paths, or
    ``(name, step, Grammar)`` triples (the latter two are decoded here).
    """
    evals = []
    for c in checkpoints:
        if isinstance(c, CheckpointEval):
            evals.append(c)
            continue
        if isinstance(c, (str, bytes)) or hasattr(c, "__fspath__"):
            grammar, obj = pcfg.load_checkpoint(c)
            name, step = str(c), obj.get("step", 0)
        else:
            name, step, grammar = c
        evals.append(evaluate_grammar(grammar, sentences, scores, golds, punct_masks, name, step))
    if len(evals) < 3:
        raise ValueError(f"correlation study needs at least 3 checkpoints, got {len(evals)}")
    n = len(evals[0].f1)
    rs, rl = [], []
    for k in range(n):
        f = [e.f1[k] for e in evals]
        if any(v is SKIP for v in f):
            continue
        rs.append(spearman(f, [e.seminfo[k] for e in evals]))
        rl.append(spearman(f, [e.log_Z[k] for e in evals]))
    windows = []
    steps = [e.step for e in evals]
    for lo, hi in sliding_windows(max(steps), window, stride):
        inside = [e for e in evals if lo <= e.step <= hi]
        rec = {"lo": lo, "hi": hi, "n": len(inside), "rho_seminfo_f1": None, "rho_ll_f1": None}
        if len(inside) >= 3:
            f = [e.corpus_f1 for e in inside]
            rec["rho_seminfo_f1"] = spearman(f, [e.mean_seminfo for e in inside])
            rec["rho_ll_f1"] = spearman(f, [e.mean_log_Z for e in inside])
        windows.append(rec)
    return CorrelationReport(
        _aggregate_or_none(rs), _aggregate_or_none(rl),
        sum(r is not None for r in rs), sum(r is not None for r in rl), len(rs), windows, evals,
    )
