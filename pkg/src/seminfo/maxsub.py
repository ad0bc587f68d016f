"""Maximal common substrings and per-span SemInfo scores.

A token string is a tuple of normalized tokens.  For a source sentence ``x``
and a paraphrase set, a span's score is a maximal-substring tf-idf:

    tf(F(s)) * max(0, ln(|D| / (df(s) + 1)))

where ``F(s)`` counts paraphrases in which ``s`` is a maximal common
substring with ``x`` and ``df(s)`` counts corpus sentences ``x'`` with
``s`` in ``MS(x, x')``.
"""

import json
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .textnorm import NormalizedSentence

TokenString = Tuple[str, ...]
Span = Tuple[int, int]


@dataclass
class ParaphraseSet:
    id: str
    source: NormalizedSentence
    paraphrases: List[NormalizedSentence] = field(default_factory=list)

    def __post_init__(self):
        if len(self.source) == 0:
            raise ValueError(f"paraphrase set {self.id!r}: empty source after normalization")

    @property
    def N(self):
        return len(self.paraphrases)


@dataclass
class DfIndex:
    df: Dict[str, Dict[TokenString, int]]
    corpus_size: int

    def get(self, sid, s):
        try:
            table = self.df[sid]
        except KeyError:
            raise KeyError(f"df index has no entry for sentence id {sid!r}; index/corpus mismatch") from None
        return table.get(tuple(s), 0)


@dataclass(frozen=True)
class ScoreOptions:
    log_tf: bool = True


@dataclass
class SpanScoreTable:
    id: str
    n: int
    scores: Dict[Span, float] = field(default_factory=dict)

    def get(self, i, j):
        return self.scores.get((i, j), 0.0)

    def scaled(self, c):
        return SpanScoreTable(self.id, self.n, {k: c * v for k, v in self.scores.items()})

    def to_json(self):
        spans = [[i, j, v] for (i, j), v in sorted(self.scores.items())]
        return {"id": self.id, "n": self.n, "spans": spans}

    @classmethod
    def from_json(cls, obj):
        return cls(str(obj["id"]), int(obj["n"]), {(int(i), int(j)): float(v) for i, j, v in obj["spans"]})


def substrings(a: Sequence[str]) -> set:
    a = tuple(a)
    return {a[i:j] for i in range(len(a)) for j in range(i + 1, len(a) + 1)}


def common_substrings(a: Sequence[str], b: Sequence[str]) -> set:
    return substrings(a) & substrings(b)


def maximal_substrings(a: Sequence[str], b: Sequence[str]) -> set:
    """Common substrings of ``a`` and ``b`` not contained in a longer common one.

    Runs a common-suffix-length DP over the match matrix; every occurrence
    pair that cannot be extended to the right yields a candidate which is
    already left-maximal.  Candidates are then reduced to an anti-chain.
    """
    a, b = tuple(a), tuple(b)
    n, m = len(a), len(b)
    where = defaultdict(list)
    for j, t in enumerate(b):
        where[t].append(j)

    cands = set()
    prev = {}
    for i in range(n):
        cur = {}
        for j in where.get(a[i], ()):
            cur[j] = prev.get(j - 1, 0) + 1
        for j, length in cur.items():
            if i + 1 < n and j + 1 < m and a[i + 1] == b[j + 1]:
                continue
            cands.add(a[i + 1 - length:i + 1])
        prev = cur
    return _antichain(cands)


def _antichain(cands):
    covered = set()
    out = set()
    for s in sorted(cands, key=len, reverse=True):
        if s in covered:
            continue
        out.add(s)
        covered |= substrings(s)
    return out


def maximal_frequency(ps: ParaphraseSet) -> Counter:
    src = ps.source.normalized_tokens
    counts = Counter()
    for p in ps.paraphrases:
        if len(p):
            counts.update(maximal_substrings(src, p.normalized_tokens))
    return counts


def _df_rows(args):
    rows, corpus = args
    out = []
    for r in rows:
        x = corpus[r]
        c = Counter()
        xs = set(x)
        for y in corpus:
            if xs.isdisjoint(y):
                continue
            c.update(maximal_substrings(x, y))
        out.append(dict(c))
    return out


def build_df_index(corpus: Sequence[NormalizedSentence], ids: Optional[Sequence[str]] = None, jobs: int = 1) -> DfIndex:
    """Raw document frequencies ``df(s, x)`` for every source ``x`` in the corpus."""
    if not corpus:
        raise ValueError("empty corpus")
    toks = [tuple(getattr(x, "normalized_tokens", x)) for x in corpus]
    if ids is None:
        ids = [str(i) for i in range(len(toks))]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sentence ids in corpus")

    if jobs <= 1:
        tables = [Counter() for _ in toks]
        sets = [set(x) for x in toks]
        for p, x in enumerate(toks):
            for q in range(p, len(toks)):
                if sets[p].isdisjoint(sets[q]):
                    continue
                ms = maximal_substrings(x, toks[q])
                tables[p].update(ms)
                if q != p:
                    tables[q].update(ms)
        tables = [dict(t) for t in tables]
    else:
        chunks = [list(range(k, len(toks), jobs)) for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_df_rows, [(c, toks) for c in chunks]))
        tables = [None] * len(toks)
        for chunk, part in zip(chunks, parts):
            for r, t in zip(chunk, part):
                tables[r] = t
    return DfIndex(dict(zip(ids, tables)), len(toks))


def tf_weight(freq, log_tf=True):
    if freq <= 0:
        return 0.0
    return 1.0 + math.log(freq) if log_tf else float(freq)


def idf_weight(raw_df, corpus_size):
    return max(0.0, math.log(corpus_size / (raw_df + 1)))


def span_seminfo_table(ps: ParaphraseSet, df: DfIndex, norm: ScoreOptions = ScoreOptions()) -> SpanScoreTable:
    src = ps.source.normalized_tokens
    n = len(src)
    if ps.id not in df.df:
        raise KeyError(f"df index has no entry for sentence id {ps.id!r}; index/corpus mismatch")
    freq = maximal_frequency(ps)
    scores = {}
    for width in range(2, n):
        for i in range(0, n - width + 1):
            s = src[i:i + width]
            f = freq.get(s, 0)
            if not f:
                continue
            v = tf_weight(f, norm.log_tf) * idf_weight(df.get(ps.id, s), df.corpus_size)
            if v > 0:
                scores[(i, i + width)] = v
    return SpanScoreTable(ps.id, n, scores)


def score_corpus(sets: Sequence[ParaphraseSet], norm: ScoreOptions = ScoreOptions(), jobs: int = 1):
    df = build_df_index([p.source for p in sets], [p.id for p in sets], jobs=jobs)
    return [span_seminfo_table(p, df, norm) for p in sets], df


def write_scores(path, tables: Iterable[SpanScoreTable]):
    with open(path, "w", encoding="utf-8") as fh:
        for t in tables:
            fh.write(json.dumps(t.to_json()) + "\n")


def read_scores(path) -> List[SpanScoreTable]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SpanScoreTable.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed score record ({e})") from None
    return out
