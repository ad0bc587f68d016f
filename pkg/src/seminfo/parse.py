"""Decoders: maximum-SemInfo trees, TreeMBR over grammar posteriors, baselines."""

from typing import List, Optional, Sequence

import numpy as np

from . import pcfg
from .pcfg import Grammar, UnparsableError
from .treecrf import SpanPotentialTable, crf_sample, crf_viterbi
from .trees import ConstituentTree, left_branching, right_branching

BASELINES = ("left", "right", "random")


def parse_mtd(scores) -> ConstituentTree:
    """Maximum Tree Decoding: the bracketing with the largest summed span score."""
    table = SpanPotentialTable.of(scores)
    if table.n < 1:
        raise ValueError("empty sentence")
    return crf_viterbi(table)


def parse_mbr(grammar: Grammar, sentence) -> ConstituentTree:
    post = pcfg.span_posteriors(grammar, sentence)
    n = len(sentence)
    return crf_viterbi(SpanPotentialTable(n, {s: p for s, p in post.items() if s[1] - s[0] >= 2}))


def parse_mbr_batch(grammar: Grammar, sentences, batch_size=64) -> List[ConstituentTree]:
    """TreeMBR trees for many sentences, posteriors computed in padded batches."""
    tables, logZ = pcfg.batch_posteriors(grammar, sentences, batch_size)
    bad = np.flatnonzero(~np.isfinite(logZ))
    if bad.size:
        raise UnparsableError(f"sentence {int(bad[0])} has zero probability under the grammar")
    return [crf_viterbi(SpanPotentialTable(len(s), t)) for s, t in zip(sentences, tables)]


def parse_viterbi(grammar: Grammar, sentence) -> ConstituentTree:
    return pcfg.viterbi_tree(grammar, sentence)


def parse_baseline(n: int, kind: str, rng: Optional[np.random.Generator] = None) -> ConstituentTree:
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "left":
        return left_branching(n)
    if kind == "right":
        return right_branching(n)
    if kind == "random":
        if rng is None:
            raise ValueError("random baseline needs an rng")
        # the phi = 0 CRF is uniform over bracketings
        return crf_sample(SpanPotentialTable(n, {}), rng, 1)[0]
    raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
