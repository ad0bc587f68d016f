"""Span-potential TreeCRF over binary bracketings.

P(t | x) is proportional to exp(sum of phi(s) over the spans s of t).  Only
spans of width >= 2 carry potentials; the whole-sentence span is allowed
but is a constant shared by every tree.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import torch

from .pcfg import DTYPE
from .trees import ConstituentTree

Span = Tuple[int, int]


@dataclass
class SpanPotentialTable:
    n: int
    phi: Dict[Span, float] = field(default_factory=dict)

    def get(self, i, j):
        return self.phi.get((i, j), 0.0)

    @classmethod
    def of(cls, table):
        """Accept a SpanPotentialTable, a SpanScoreTable, or ``(n, mapping)``."""
        if isinstance(table, cls):
            return table
        if isinstance(table, tuple):
            n, phi = table
            return cls(int(n), dict(phi))
        return cls(table.n, dict(getattr(table, "scores", getattr(table, "phi", {}))))

    def dense(self):
        """[n+1, n+1] array with zeros for missing and width-1 spans."""
        out = np.zeros((self.n + 1, self.n + 1))
        for (i, j), v in self.phi.items():
            if not 0 <= i < j <= self.n:
                raise ValueError(f"span ({i}, {j}) outside a sentence of length {self.n}")
            if j - i >= 2:
                out[i, j] = v
        return out

    def widths(self, N=None):
        """Per-width tensors ``{w: [1, N-w+1]}`` for the batched routines."""
        N = self.n if N is None else N
        d = self.dense()
        return {w: torch.tensor([[d[i, i + w] if i + w <= self.n else 0.0 for i in range(N - w + 1)]], dtype=DTYPE)
                for w in range(2, N + 1)}


def tree_score(tree: ConstituentTree, phi) -> float:
    phi = SpanPotentialTable.of(phi)
    return float(sum(phi.get(i, j) for i, j in tree.internal))


# ---------------------------------------------------------------------------
# batched, differentiable core


def crf_inside(phi, lengths):
    """Log-space span DP.  ``phi[w]`` is ``[B, N-w+1]``; returns (chart, logZ)."""
    B = len(lengths)
    N = max(lengths)
    chart = {1: torch.zeros(B, N, dtype=DTYPE)}
    for w in range(2, N + 1):
        ns = N - w + 1
        parts = torch.stack([chart[k][:, 0:ns] + chart[w - k][:, k:k + ns] for k in range(1, w)], dim=-1)
        chart[w] = phi[w] + torch.logsumexp(parts, dim=-1)
    logZ = torch.stack([chart[n][b, 0] for b, n in enumerate(lengths)])
    return chart, logZ


def crf_marginals_batch(phi, lengths, create_graph=False):
    N = max(lengths)
    leaves = {w: (p if p.requires_grad else p.detach().requires_grad_(True)) for w, p in phi.items()}
    with torch.enable_grad():
        _, logZ = crf_inside(leaves, lengths)
        grads = torch.autograd.grad(logZ.sum(), [leaves[w] for w in range(2, N + 1)], create_graph=create_graph, allow_unused=True)
    out = {}
    for w, g in zip(range(2, N + 1), grads):
        out[w] = torch.zeros_like(phi[w]) if g is None else g
    return out, logZ


def crf_entropy_batch(phi, lengths, create_graph=False):
    """H = log Z - E[sum phi], the expectation taken through span marginals."""
    mu, logZ = crf_marginals_batch(phi, lengths, create_graph=create_graph)
    expected = sum((mu[w] * phi[w]).sum(-1) for w in mu) if mu else torch.zeros_like(logZ)
    return logZ - expected, mu, logZ


def tree_masks(trees, N):
    """0/1 span-membership tensors ``{w: [T, N-w+1]}`` for a list of trees."""
    out = {w: torch.zeros(len(trees), N - w + 1, dtype=DTYPE) for w in range(2, N + 1)}
    for t, tree in enumerate(trees):
        for i, j in tree.internal:
            out[j - i][t, i] = 1.0
    return out


def _chart_numpy(chart, b, n):
    c = np.full((n + 1, n + 1), -np.inf)
    for w in range(1, n + 1):
        row = chart[w][b].detach().numpy()
        for i in range(n - w + 1):
            c[i, i + w] = row[i]
    return c


def sample_from_chart(c, n, rng, k):
    """Top-down exact sampling of ``k`` trees from a numpy CRF chart,
    vectorized over samples with one array stack per sample."""
    if n == 1:
        return [ConstituentTree.from_spans(1, ())] * k
    W = n + 1
    rows = np.arange(k)
    stack = np.zeros((k, n), dtype=np.int64)  # codes i * W + j
    stack[:, 0] = n
    sp = np.ones(k, dtype=np.int64)
    spans = np.zeros((k, n - 1), dtype=np.int64)
    cdfs = {}
    for step in range(n - 1):
        u = rng.random(k)
        sp -= 1
        top = stack[rows, sp]
        kk = np.empty(k, dtype=np.int64)
        states, inv = np.unique(top, return_inverse=True)
        for g, code in enumerate(states.tolist()):
            if code not in cdfs:
                i, j = divmod(code, W)
                ks = np.arange(i + 1, j)
                lw = c[i, ks] + c[ks, j]
                cdf = np.cumsum(np.exp(lw - lw.max()))
                cdfs[code] = cdf / cdf[-1]
            cdf = cdfs[code]
            members = inv == g
            kk[members] = np.minimum(np.searchsorted(cdf, u[members], side="right"), len(cdf) - 1)
        i, j = np.divmod(top, W)
        mid = i + 1 + kk
        spans[:, step] = top
        push = j - mid >= 2
        stack[rows[push], sp[push]] = mid[push] * W + j[push]
        sp += push
        push = mid - i >= 2
        stack[rows[push], sp[push]] = i[push] * W + mid[push]
        sp += push
    spans.sort(axis=1)
    uniq, inv = np.unique(spans, axis=0, return_inverse=True)
    trees = [ConstituentTree.from_spans(n, [divmod(int(x), W) for x in row]) for row in uniq]
    return [trees[t] for t in inv.reshape(-1).tolist()]


def sample_batch(chart, lengths, rng, k):
    return [sample_from_chart(_chart_numpy(chart, b, n), n, rng, k) for b, n in enumerate(lengths)]


# ---------------------------------------------------------------------------
# single-sentence API


def crf_partition(phi) -> float:
    phi = SpanPotentialTable.of(phi)
    if phi.n < 1:
        raise ValueError("empty sentence")
    with torch.no_grad():
        _, logZ = crf_inside(phi.widths(), [phi.n])
    return float(logZ[0])


def crf_marginals(phi) -> Dict[Span, float]:
    phi = SpanPotentialTable.of(phi)
    n = phi.n
    out = {(i, i + 1): 1.0 for i in range(n)}
    if n == 1:
        return out
    mu, _ = crf_marginals_batch(phi.widths(), [n])
    for w, t in mu.items():
        row = t[0].numpy()
        for i in range(n - w + 1):
            out[(i, i + w)] = float(row[i])
    return out


def crf_entropy(phi) -> float:
    phi = SpanPotentialTable.of(phi)
    if phi.n <= 2:
        return 0.0
    H, _, _ = crf_entropy_batch(phi.widths(), [phi.n])
    return max(0.0, float(H[0].detach()))


def crf_sample(phi, rng, k: int = 1) -> List[ConstituentTree]:
    phi = SpanPotentialTable.of(phi)
    if k < 1:
        raise ValueError("k must be >= 1")
    with torch.no_grad():
        chart, _ = crf_inside(phi.widths(), [phi.n])
    return sample_from_chart(_chart_numpy(chart, 0, phi.n), phi.n, rng, k)


def crf_viterbi(phi, tol=1e-9) -> ConstituentTree:
    """Max-sum CKY; near-ties (relative ``tol``) go to the left-branching split."""
    phi = SpanPotentialTable.of(phi)
    n = phi.n
    d = phi.dense()
    best = np.zeros((n + 1, n + 1))
    split = np.zeros((n + 1, n + 1), dtype=int)
    for w in range(2, n + 1):
        for i in range(n - w + 1):
            j = i + w
            ks = np.arange(i + 1, j)
            vals = best[i, ks] + best[ks, j]
            top = vals.max()
            kk = int(np.flatnonzero(vals >= top - tol * (1.0 + abs(top)))[-1])
            split[i, j] = i + 1 + kk
            best[i, j] = d[i, j] + vals[kk]
    spans = set()
    todo = [(0, n)]
    while todo:
        i, j = todo.pop()
        if j - i < 2:
            continue
        spans.add((i, j))
        k = split[i, j]
        todo += [(i, k), (k, j)]
    return ConstituentTree.from_spans(n, spans)
