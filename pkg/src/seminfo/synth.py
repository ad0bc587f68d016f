"""Desk-scale synthetic corpus: a hand-written gold CNF grammar, sampled
sentences with gold trees, and paraphrases built by moving gold constituents.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .trees import GoldTree, gold_to_brackets

# LHS -> [(weight, B, C)] and preterminal -> words
BINARY = {
    "S": [(1.0, "NP", "VP")],
    "NP": [(0.45, "D", "N"), (0.3, "D", "NB"), (0.25, "NP", "PP")],
    "NB": [(0.75, "A", "N"), (0.25, "A", "NB")],
    "VP": [(0.55, "V", "NP"), (0.25, "VP", "PP"), (0.2, "V", "PP")],
    "PP": [(1.0, "P", "NP")],
}
LEXICON = {
    "D": "the a every this some that".split(),
    "N": "dog cat bird farmer child teacher river garden house letter song ball".split(),
    "A": "big small old green quiet happy dark tall".split(),
    "V": "saw chased found liked sent watched painted heard".split(),
    "P": "near with under behind above".split(),
}
START = "S"


@dataclass
class SynthConfig:
    num_sentences: int = 500
    min_len: int = 5
    max_len: int = 12
    num_paraphrases: int = 16
    swap_prob: float = 0.35
    front_prob: float = 0.3
    identity_only: bool = False
    final_punct: bool = True
    max_tries: int = 100000


@dataclass
class SynthSentence:
    id: str
    tokens: List[str]
    gold: GoldTree
    paraphrases: List[List[str]] = field(default_factory=list)

    @property
    def raw(self):
        return " ".join(self.tokens)


# a derivation node: (label, children) for phrases, (tag, word) for leaves
Node = Tuple[str, object]


def _min_yield():
    best = {t: 1 for t in LEXICON}
    changed = True
    while changed:
        changed = False
        for lhs, rules in BINARY.items():
            for _, b, c in rules:
                if b in best and c in best:
                    v = best[b] + best[c]
                    if v < best.get(lhs, 1 << 30):
                        best[lhs] = v
                        changed = True
    return best


def _derive(sym, rng, depth=0):
    if sym in LEXICON:
        words = LEXICON[sym]
        return (sym, words[int(rng.integers(len(words)))])
    if depth > 30:
        raise RecursionError
    rules = BINARY[sym]
    w = np.array([r[0] for r in rules])
    _, b, c = rules[int(rng.choice(len(rules), p=w / w.sum()))]
    return (sym, [_derive(b, rng, depth + 1), _derive(c, rng, depth + 1)])


def _leaves(node):
    label, kids = node
    if isinstance(kids, str):
        return [kids]
    return [w for k in kids for w in _leaves(k)]


def _spans(node, start=0, out=None):
    if out is None:
        out = []
    label, kids = node
    if isinstance(kids, str):
        return out, start + 1
    pos = start
    for k in kids:
        _, pos = _spans(k, pos, out)
    out.append((start, pos, label))
    return out, pos


def _tags(node):
    label, kids = node
    if isinstance(kids, str):
        return [label]
    return [t for k in kids for t in _tags(k)]


def _swap(node, rng, p):
    label, kids = node
    if isinstance(kids, str):
        return node
    kids = [_swap(k, rng, p) for k in kids]
    if rng.random() < p:
        kids = kids[::-1]
    return (label, kids)


def _phrases(node, path=()):
    """Paths of every phrasal node below the root."""
    label, kids = node
    out = []
    if isinstance(kids, str):
        return out
    for i, k in enumerate(kids):
        if not isinstance(k[1], str):
            out.append(path + (i,))
        out += _phrases(k, path + (i,))
    return out


def _pluck(node, path):
    label, kids = node
    if len(path) == 1:
        rest = [k for i, k in enumerate(kids) if i != path[0]]
        moved = kids[path[0]]
        return moved, (label, rest)
    moved, sub = _pluck(kids[path[0]], path[1:])
    kids = list(kids)
    kids[path[0]] = sub
    return moved, (label, kids)


def paraphrase(tree: Node, rng, cfg: SynthConfig) -> List[str]:
    """One surface reordering: sibling swaps, then optional fronting."""
    if cfg.identity_only:
        return _leaves(tree)
    t = _swap(tree, rng, cfg.swap_prob)
    if rng.random() < cfg.front_prob:
        paths = _phrases(t)
        if paths:
            path = paths[int(rng.integers(len(paths)))]
            moved, rest = _pluck(t, path)
            return _leaves(moved) + _leaves(rest)
    return _leaves(t)


def synth_corpus(cfg: SynthConfig, rng) -> List[SynthSentence]:
    lo = _min_yield()[START]
    if cfg.max_len < max(lo, cfg.min_len) or cfg.min_len > cfg.max_len:
        raise ValueError(f"length cap [{cfg.min_len}, {cfg.max_len}] is unsatisfiable (shortest sentence has {lo} words)")
    out = []
    tries = 0
    while len(out) < cfg.num_sentences:
        tries += 1
        if tries > cfg.max_tries:
            raise ValueError(f"could not sample {cfg.num_sentences} sentences within length cap after {cfg.max_tries} tries")
        try:
            tree = _derive(START, rng)
        except RecursionError:
            continue
        words = _leaves(tree)
        if not cfg.min_len <= len(words) <= cfg.max_len:
            continue
        spans, _ = _spans(tree)
        tags = _tags(tree)
        paras = [paraphrase(tree, rng, cfg) for _ in range(cfg.num_paraphrases)]
        if cfg.final_punct:
            n = len(words)
            spans = [(i, j if j < n or i > 0 else n + 1, l) for i, j, l in spans]
            words = words + ["."]
            tags = tags + ["."]
            paras = [p + ["."] for p in paras]
        gold = GoldTree(len(words), frozenset(spans), tuple(words), tuple(tags))
        out.append(SynthSentence(f"s{len(out):04d}", words, gold, paras))
    return out


def gold_brackets(sentences: List[SynthSentence]) -> List[str]:
    return [gold_to_brackets(s.gold) for s in sentences]
