"""Tabular CNF PCFG with a log-space inside algorithm.

Every nonterminal may both branch (A -> B C) and emit (A -> w); rule
probabilities are a per-LHS softmax over the concatenation of the LHS's
binary and lexical logits.  Symbol 0 is the start symbol.

Reverse-mode accumulation (span posteriors, expected counts, and the
second-order gradients used in training) goes through torch autograd; the
chart is kept as a list of per-width tensors so the graph stays
differentiable twice.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .trees import ConstituentTree

UNK = "<unk>"
DTYPE = torch.float64
CHECKPOINT_VERSION = 1


class UnparsableError(ValueError):
    pass


@dataclass
class Grammar:
    num_nonterminals: int
    vocab: Dict[str, int]
    binary_logits: np.ndarray
    lexical_logits: np.ndarray
    start: int = 0

    def __post_init__(self):
        if UNK not in self.vocab:
            raise ValueError("vocabulary must reserve the UNK entry")
        m, v = self.num_nonterminals, len(self.vocab)
        self.binary_logits = np.asarray(self.binary_logits, dtype=np.float64).reshape(m, m, m)
        self.lexical_logits = np.asarray(self.lexical_logits, dtype=np.float64).reshape(m, v)

    @classmethod
    def random(cls, num_nonterminals, words, rng, scale=0.1):
        vocab = {UNK: 0}
        for w in words:
            vocab.setdefault(w, len(vocab))
        m, v = num_nonterminals, len(vocab)
        return cls(m, vocab, rng.normal(0.0, scale, (m, m, m)), rng.normal(0.0, scale, (m, v)))

    @property
    def V(self):
        return len(self.vocab)

    def encode(self, sentence) -> List[int]:
        out = []
        for t in sentence:
            if isinstance(t, (int, np.integer)):
                out.append(int(t))
            else:
                out.append(self.vocab.get(t, self.vocab[UNK]))
        return out

    def log_probs(self):
        """(log pi(A -> B C) as [M, M, M], log pi(A -> w) as [M, V])."""
        lb, ll = log_rule_probs(torch.from_numpy(self.binary_logits), torch.from_numpy(self.lexical_logits))
        return lb.numpy(), ll.numpy()

    def flat_params(self):
        return np.concatenate([self.binary_logits.ravel(), self.lexical_logits.ravel()])

    def with_flat_params(self, flat):
        m, v = self.num_nonterminals, self.V
        nb = m ** 3
        return Grammar(m, dict(self.vocab), flat[:nb].reshape(m, m, m).copy(), flat[nb:].reshape(m, v).copy(), self.start)

    def copy(self):
        return self.with_flat_params(self.flat_params())

    def torch_params(self, requires_grad=False):
        b = torch.tensor(self.binary_logits, dtype=DTYPE, requires_grad=requires_grad)
        l = torch.tensor(self.lexical_logits, dtype=DTYPE, requires_grad=requires_grad)
        return b, l


def normalize(grammar: Grammar) -> Grammar:
    """Return an equivalent grammar whose logits are the log rule probabilities."""
    lb, ll = grammar.log_probs()
    return Grammar(grammar.num_nonterminals, dict(grammar.vocab), lb, ll, grammar.start)


def log_rule_probs(binary_logits, lexical_logits):
    m = binary_logits.shape[0]
    joint = torch.cat([binary_logits.reshape(m, -1), lexical_logits], dim=1)
    lp = torch.log_softmax(joint, dim=1)
    return lp[:, : m * m].reshape(m, m, m), lp[:, m * m:]


# ---------------------------------------------------------------------------
# batched inside


def pad_batch(sentences: Sequence[Sequence[int]]):
    lengths = [len(s) for s in sentences]
    if min(lengths) < 1:
        raise ValueError("empty sentence")
    N = max(lengths)
    tok = torch.zeros(len(sentences), N, dtype=torch.long)
    for b, s in enumerate(sentences):
        tok[b, : len(s)] = torch.tensor(s, dtype=torch.long)
    return tok, lengths


def inside_chart(log_bin, log_lex, tokens, lengths, span_bias=None):
    """Inside log-probabilities for a padded batch.

    Returns ``(chart, logZ)`` where ``chart[w]`` has shape ``[B, N-w+1, M]``
    and holds log beta((i, i+w), A).  ``span_bias[w]`` ([B', N-w+1]) is added
    to every nonterminal of the span; ``B'`` may be a multiple of ``B``
    (rows are then repeated sentence-major) to score many constraint sets
    against the same sentences in one pass.
    """
    B0, N = tokens.shape
    M = log_bin.shape[0]
    chart = {1: log_lex[:, tokens].permute(1, 2, 0)}
    if span_bias is not None:
        reps = span_bias[1].shape[0] // B0
        if reps > 1:
            chart[1] = chart[1].repeat_interleave(reps, dim=0)
        chart[1] = chart[1] + span_bias[1].unsqueeze(-1)
    P = log_bin.exp().reshape(M, M * M)
    for w in range(2, N + 1):
        ns = N - w + 1
        L = torch.stack([chart[k][:, 0:ns] for k in range(1, w)], dim=2)
        R = torch.stack([chart[w - k][:, k:k + ns] for k in range(1, w)], dim=2)
        mL = L.max(dim=-1, keepdim=True).values.detach()
        mR = R.max(dim=-1, keepdim=True).values.detach()
        outer = ((L - mL).exp().unsqueeze(-1) * (R - mR).exp().unsqueeze(-2)).flatten(-2)
        inner = (outer @ P.t()).log() + mL + mR
        chart[w] = torch.logsumexp(inner, dim=2)
        if span_bias is not None:
            chart[w] = chart[w] + span_bias[w].unsqueeze(-1)
    Bt = chart[1].shape[0]
    reps = Bt // B0
    idx_len = [lengths[b // reps] for b in range(Bt)]
    logZ = torch.stack([chart[idx_len[b]][b, 0, 0] for b in range(Bt)])
    return chart, logZ


def posteriors_from_chart(chart, logZ, create_graph=False, widths=None):
    """Span posteriors sum_A d logZ / d log beta(s, A), one tensor per width."""
    N = max(chart)
    widths = list(range(1, N + 1)) if widths is None else list(widths)
    grads = torch.autograd.grad(logZ.sum(), [chart[w] for w in widths], create_graph=create_graph, allow_unused=True)
    out = {}
    for w, g in zip(widths, grads):
        if g is None:
            g = torch.zeros(chart[w].shape, dtype=DTYPE)
        out[w] = g.sum(-1)
    return out


# ---------------------------------------------------------------------------
# single-sentence API


@dataclass
class InsideChart:
    n: int
    beta: np.ndarray
    log_Z: float

    def __getitem__(self, key):
        i, j, a = key
        return self.beta[i, j, a]


def _prepare(grammar, sentence):
    ids = grammar.encode(sentence)
    if len(ids) == 0:
        raise ValueError("inside algorithm needs a non-empty sentence")
    return ids


def inside(grammar: Grammar, sentence) -> InsideChart:
    ids = _prepare(grammar, sentence)
    n = len(ids)
    with torch.no_grad():
        b, l = grammar.torch_params()
        lb, ll = log_rule_probs(b, l)
        tok, lengths = pad_batch([ids])
        chart, logZ = inside_chart(lb, ll, tok, lengths)
    M = grammar.num_nonterminals
    beta = np.full((n + 1, n + 1, M), -np.inf)
    for w, t in chart.items():
        arr = t[0].numpy()
        for i in range(n - w + 1):
            beta[i, i + w] = arr[i]
    return InsideChart(n, beta, float(logZ[0]))


def _check_parsable(logZ):
    if not torch.isfinite(logZ).all():
        raise UnparsableError("sentence has zero probability under the grammar")


def span_posteriors(grammar: Grammar, sentence) -> Dict[Tuple[int, int], float]:
    ids = _prepare(grammar, sentence)
    n = len(ids)
    b, l = grammar.torch_params()
    lb, ll = log_rule_probs(b, l)
    tok, lengths = pad_batch([ids])
    chart = None
    with torch.enable_grad():
        chart, logZ = _inside_with_leaves(lb, ll, tok, lengths)
        _check_parsable(logZ)
        post = posteriors_from_chart(chart, logZ)
    out = {}
    for w, t in post.items():
        arr = t[0].numpy()
        for i in range(n - w + 1):
            out[(i, i + w)] = float(arr[i])
    return out


def _inside_with_leaves(lb, ll, tok, lengths):
    # the chart's tensors must be graph nodes even when parameters are constants
    if not lb.requires_grad:
        lb = lb.detach().requires_grad_(True)
    if not ll.requires_grad:
        ll = ll.detach().requires_grad_(True)
    return inside_chart(lb, ll, tok, lengths)


@dataclass
class RuleCounts:
    """Expected rule usage and the matching logit gradients of log Z."""

    binary: np.ndarray
    lexical: np.ndarray
    binary_logit_grad: np.ndarray
    lexical_logit_grad: np.ndarray
    log_Z: float


def expected_rule_counts(grammar: Grammar, sentence) -> RuleCounts:
    ids = _prepare(grammar, sentence)
    b, l = grammar.torch_params(requires_grad=True)
    lb, ll = log_rule_probs(b, l)
    tok, lengths = pad_batch([ids])
    chart, logZ = inside_chart(lb, ll, tok, lengths)
    _check_parsable(logZ)
    grads = torch.autograd.grad(logZ.sum(), [b, l, lb, ll], allow_unused=True)
    # a one-word sentence never touches the binary rules
    gb, gl, cb, cl = (np.zeros(t.shape) if g is None else g.numpy() for g, t in zip(grads, [b, l, lb, ll]))
    return RuleCounts(cb, cl, gb, gl, float(logZ[0].detach()))


def log_likelihood(grammar: Grammar, sentences, batch_size=64) -> np.ndarray:
    """log Z for every sentence, computed in padded batches."""
    b, l = grammar.torch_params()
    out = []
    with torch.no_grad():
        lb, ll = log_rule_probs(b, l)
        for start in range(0, len(sentences), batch_size):
            chunk = [grammar.encode(s) for s in sentences[start:start + batch_size]]
            tok, lengths = pad_batch(chunk)
            _, logZ = inside_chart(lb, ll, tok, lengths)
            out.append(logZ.numpy())
    return np.concatenate(out) if out else np.zeros(0)


def batch_posteriors(grammar: Grammar, sentences, batch_size=64):
    """Posterior tables (dict per width -> array) and log Z for many sentences."""
    b, l = grammar.torch_params()
    lb, ll = log_rule_probs(b, l)
    tables, logZs = [], []
    for start in range(0, len(sentences), batch_size):
        chunk = [grammar.encode(s) for s in sentences[start:start + batch_size]]
        tok, lengths = pad_batch(chunk)
        with torch.enable_grad():
            chart, logZ = _inside_with_leaves(lb, ll, tok, lengths)
            post = posteriors_from_chart(chart, logZ, widths=range(2, tok.shape[1] + 1))
        for k, n in enumerate(lengths):
            tables.append({(i, i + w): float(post[w][k, i]) for w in range(2, n + 1) for i in range(n - w + 1)})
        logZs.extend(logZ.detach().numpy().tolist())
    return tables, np.array(logZs)


# ---------------------------------------------------------------------------
# sampling and Viterbi


def _split_table(log_bin, beta, i, j, a):
    """Log weights over (k, B, C) for expanding A over [i, j)."""
    ks = np.arange(i + 1, j)
    left = beta[i, ks]            # [K, M]
    right = beta[ks, j]           # [K, M]
    return log_bin[a][None, :, :] + left[:, :, None] + right[:, None, :]


def sample_tree_posterior(grammar: Grammar, sentence, rng, k: Optional[int] = None):
    """Exact samples from P(t | x), drawn top-down from the inside chart.

    Returns one tree, or a list of ``k`` trees when ``k`` is given.
    """
    chart = inside(grammar, sentence)
    if not np.isfinite(chart.log_Z):
        raise UnparsableError("sentence has zero probability under the grammar")
    lb, _ = grammar.log_probs()
    trees = _sample_labeled(lb, chart.beta, chart.n, grammar.start, rng, 1 if k is None else k)
    return trees[0] if k is None else trees


def _sample_labeled(log_bin, beta, n, start, rng, k):
    """``k`` i.i.d. unlabeled trees by top-down sampling, vectorized over samples.

    Every sample keeps an array stack of pending (i, j, A) states; one pass
    pops a state from every sample and expands each distinct state once.
    """
    M = log_bin.shape[0]
    if n == 1:
        return [ConstituentTree.from_spans(1, ())] * k
    W = n + 1
    rows = np.arange(k)
    stack = np.zeros((k, n), dtype=np.int64)  # codes (i * W + j) * M + A
    stack[:, 0] = (0 * W + n) * M + start
    sp = np.ones(k, dtype=np.int64)
    spans = np.zeros((k, n - 1), dtype=np.int64)  # codes i * W + j
    cdfs = {}
    for step in range(n - 1):
        u = rng.random(k)
        sp -= 1
        top = stack[rows, sp]
        flat = np.empty(k, dtype=np.int64)
        states, inv = np.unique(top, return_inverse=True)
        for g, code in enumerate(states.tolist()):
            if code not in cdfs:
                span, a = divmod(code, M)
                i, j = divmod(span, W)
                lw = _split_table(log_bin, beta, i, j, a).ravel()
                c = np.cumsum(np.exp(lw - lw.max()))
                cdfs[code] = c / c[-1]
            cdf = cdfs[code]
            members = inv == g
            flat[members] = np.minimum(np.searchsorted(cdf, u[members], side="right"), len(cdf) - 1)
        span, _ = np.divmod(top, M)
        i, j = np.divmod(span, W)
        kk, rem = np.divmod(flat, M * M)
        bsym, csym = np.divmod(rem, M)
        mid = i + 1 + kk
        spans[:, step] = span
        # push right then left so the left child is expanded first
        push = j - mid >= 2
        stack[rows[push], sp[push]] = (mid[push] * W + j[push]) * M + csym[push]
        sp += push
        push = mid - i >= 2
        stack[rows[push], sp[push]] = (i[push] * W + mid[push]) * M + bsym[push]
        sp += push
    spans.sort(axis=1)
    uniq, inv = np.unique(spans, axis=0, return_inverse=True)
    trees = [ConstituentTree.from_spans(n, [divmod(int(c), W) for c in row]) for row in uniq]
    return [trees[t] for t in inv.reshape(-1).tolist()]


def _tie_pick(values, tol=1e-9):
    """Last index within tolerance of the maximum (largest split, left-branching)."""
    best = values.max()
    return int(np.flatnonzero(values >= best - tol * (1.0 + abs(best)))[-1])


def viterbi_tree(grammar: Grammar, sentence) -> ConstituentTree:
    """Best labeled derivation; ties go to the left-branching split."""
    ids = _prepare(grammar, sentence)
    n = len(ids)
    lb, ll = grammar.log_probs()
    M = grammar.num_nonterminals
    v = np.full((n + 1, n + 1, M), -np.inf)
    back = {}
    for i, t in enumerate(ids):
        v[i, i + 1] = ll[:, t]
    for w in range(2, n + 1):
        for i in range(n - w + 1):
            j = i + w
            ks = np.arange(i + 1, j)
            # [A, K, B, C]
            sc = lb[:, None, :, :] + v[i, ks][None, :, :, None] + v[ks, j][None, :, None, :]
            flat = sc.reshape(M, len(ks), M * M)
            per_k = flat.max(axis=2)            # [A, K]
            for a in range(M):
                kk = _tie_pick(per_k[a])
                bc = int(np.argmax(flat[a, kk]))
                v[i, j, a] = flat[a, kk, bc]
                back[(i, j, a)] = (i + 1 + kk, bc // M, bc % M)
    if not np.isfinite(v[0, n, grammar.start]):
        raise UnparsableError("sentence has zero probability under the grammar")
    spans = set()
    todo = [(0, n, grammar.start)]
    while todo:
        i, j, a = todo.pop()
        if j - i < 2:
            continue
        spans.add((i, j))
        k, bsym, csym = back[(i, j, a)]
        todo.append((i, k, bsym))
        todo.append((k, j, csym))
    return ConstituentTree.from_spans(n, spans)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, grammar: Grammar, step=0, optimizer=None, rng_state=None, extra=None):
    obj = {
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "num_nonterminals": grammar.num_nonterminals,
        "start": grammar.start,
        "vocab": sorted(grammar.vocab, key=grammar.vocab.get),
        "binary_logits": grammar.binary_logits.ravel().tolist(),
        "lexical_logits": grammar.lexical_logits.ravel().tolist(),
        "optimizer": optimizer,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('version')!r}")
    vocab = {w: i for i, w in enumerate(obj["vocab"])}
    g = Grammar(obj["num_nonterminals"], vocab, np.array(obj["binary_logits"]), np.array(obj["lexical_logits"]), obj["start"])
    return g, obj
