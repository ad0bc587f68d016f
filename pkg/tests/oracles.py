"""Brute-force reference implementations used as test oracles.

Nothing here shares code with the package's dynamic programs: PCFG
quantities are sums over explicitly enumerated trees (each tree's labelings
summed by a per-node recursion, or fully enumerated for tiny cases), CRF
quantities sum over enumerated bracketings, and maximal substrings come from
the quadratic definition.
"""

import itertools
import math

import numpy as np

from seminfo.trees import ConstituentTree, enumerate_trees


def logsumexp(xs):
    xs = np.asarray(list(xs), dtype=float)
    if xs.size == 0:
        return -math.inf
    m = xs.max()
    if m == -math.inf:
        return m
    return float(m + math.log(np.exp(xs - m).sum()))


# ---------------------------------------------------------------------------
# PCFG


def rule_log_probs(binary_logits, lexical_logits):
    M = binary_logits.shape[0]
    flat = np.concatenate([binary_logits.reshape(M, -1), lexical_logits], axis=1)
    flat = flat - flat.max(axis=1, keepdims=True)
    logp = flat - np.log(np.exp(flat).sum(axis=1, keepdims=True))
    return logp[:, : M * M].reshape(M, M, M), logp[:, M * M:]


def _children(tree, i, j):
    k = tree.split_of(i, j)
    return (i, k), (k, j)


def tree_label_scores(tree, lb, ll, ids, reduce):
    """Per-node recursion over the labelings of one fixed tree.

    ``reduce`` is logsumexp for sums over labelings, max for the best one.
    Returns a vector over root labels.
    """
    M = lb.shape[0]

    def rec(i, j):
        if j - i == 1:
            return ll[:, ids[i]].copy()
        (a, b), (c, d) = _children(tree, i, j)
        left, right = rec(a, b), rec(c, d)
        out = np.empty(M)
        for A in range(M):
            out[A] = reduce([lb[A, B, C] + left[B] + right[C] for B in range(M) for C in range(M)])
        return out

    return rec(0, tree.n)


def tree_joint_logprobs(lb, ll, ids, start=0):
    """{tree: log P(x, t)} summed over labelings, for every bracketing."""
    return {t: tree_label_scores(t, lb, ll, ids, logsumexp)[start] for t in enumerate_trees(len(ids))}


def tree_best_logprobs(lb, ll, ids, start=0):
    return {t: tree_label_scores(t, lb, ll, ids, max)[start] for t in enumerate_trees(len(ids))}


def labeled_derivations(lb, ll, ids, start=0):
    """Every (tree, labeling) with its log probability, fully explicit.

    A labeling assigns a nonterminal to every node, leaves included; the
    root is pinned to ``start``.
    """
    M = lb.shape[0]
    n = len(ids)
    out = {}
    for t in enumerate_trees(n):
        nodes = sorted(t.spans)
        free = [s for s in nodes if s != (0, n)]
        for labels in itertools.product(range(M), repeat=len(free)):
            lab = dict(zip(free, labels))
            lab[(0, n)] = start
            lp = 0.0
            for (i, j), A in lab.items():
                if j - i == 1:
                    lp += ll[A, ids[i]]
                else:
                    left, right = _children(t, i, j)
                    lp += lb[A, lab[left], lab[right]]
            out[(t, tuple(sorted(lab.items())))] = lp
    return out


def posterior_tree_dist(lb, ll, ids, start=0):
    joint = tree_joint_logprobs(lb, ll, ids, start)
    logZ = logsumexp(joint.values())
    return {t: math.exp(v - logZ) for t, v in joint.items()}, logZ


def span_posteriors(lb, ll, ids, start=0):
    dist, _ = posterior_tree_dist(lb, ll, ids, start)
    out = {}
    for t, p in dist.items():
        for s in t.spans:
            out[s] = out.get(s, 0.0) + p
    return out


def split_key(tree):
    """Preorder split points; the lexicographic max is the left-branching tie-break."""
    spans = set(tree.internal)
    out = []

    def walk(i, j):
        if j - i < 2:
            return
        k = max(k for k in range(i + 1, j) if (k - i < 2 or (i, k) in spans) and (j - k < 2 or (k, j) in spans))
        out.append(k)
        walk(i, k)
        walk(k, j)

    walk(0, tree.n)
    return tuple(out)


def argmax_tree(scores, tol=1e-9):
    top = max(scores.values())
    near = [t for t, v in scores.items() if v >= top - tol * (1.0 + abs(top))]
    return max(near, key=split_key)


def viterbi_tree(lb, ll, ids, start=0):
    return argmax_tree(tree_best_logprobs(lb, ll, ids, start))


# ---------------------------------------------------------------------------
# TreeCRF


def crf_dist(n, phi):
    trees = enumerate_trees(n)
    scores = np.array([sum(phi.get(s, 0.0) for s in t.internal) for t in trees])
    logZ = logsumexp(scores)
    return trees, np.exp(scores - logZ), logZ, scores


def crf_entropy(n, phi):
    _, p, _, _ = crf_dist(n, phi)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def crf_marginals(n, phi):
    trees, p, _, _ = crf_dist(n, phi)
    out = {}
    for t, q in zip(trees, p):
        for s in t.spans:
            out[s] = out.get(s, 0.0) + q
    return out


def tv_distance(samples, trees, probs):
    counts = {}
    for t in samples:
        counts[t.spans] = counts.get(t.spans, 0) + 1
    k = len(samples)
    return 0.5 * sum(abs(counts.get(t.spans, 0) / k - p) for t, p in zip(trees, probs))


# ---------------------------------------------------------------------------
# maximal substrings


def maximal_substrings(a, b):
    a, b = tuple(a), tuple(b)
    common = {a[i:j] for i in range(len(a)) for j in range(i + 1, len(a) + 1)}
    common &= {b[i:j] for i in range(len(b)) for j in range(i + 1, len(b) + 1)}

    def inside(s, t):
        return len(s) < len(t) and any(t[k:k + len(s)] == s for k in range(len(t) - len(s) + 1))

    return {s for s in common if not any(inside(s, t) for t in common)}
