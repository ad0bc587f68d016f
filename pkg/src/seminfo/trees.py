"""Unlabeled binary bracketings and gold (labeled, possibly n-ary) trees."""

import json
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

Span = Tuple[int, int]


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class ConstituentTree:
    """A full binary bracketing over ``n`` tokens, stored as its span set."""

    n: int
    spans: FrozenSet[Span]

    @classmethod
    def from_spans(cls, n: int, spans: Iterable[Span]) -> "ConstituentTree":
        """Build from any span collection; trivial spans are added."""
        full = {(int(i), int(j)) for i, j in spans}
        full.add((0, n))
        full.update((i, i + 1) for i in range(n))
        return cls(n, frozenset(full))

    @property
    def internal(self) -> List[Span]:
        """Spans of width >= 2, sorted."""
        return sorted(s for s in self.spans if s[1] - s[0] >= 2)

    def nontrivial(self) -> set:
        return {s for s in self.spans if 2 <= s[1] - s[0] < self.n}

    def validate(self):
        n = self.n
        if n < 1:
            raise TreeError("tree over an empty sentence")
        if len(self.spans) != 2 * n - 1:
            raise TreeError(f"expected {2 * n - 1} spans, got {len(self.spans)}")
        if (0, n) not in self.spans:
            raise TreeError("missing root span")
        for i in range(n):
            if (i, i + 1) not in self.spans:
                raise TreeError(f"missing leaf span {(i, i + 1)}")
        for i, j in self.spans:
            if not 0 <= i < j <= n:
                raise TreeError(f"span {(i, j)} out of bounds")
        # every internal span must split into exactly one pair of child spans
        for i, j in self.internal:
            splits = [k for k in range(i + 1, j) if (i, k) in self.spans and (k, j) in self.spans]
            if len(splits) != 1:
                raise TreeError(f"span {(i, j)} does not have a unique binary split")
        return self

    def split_of(self, i, j):
        for k in range(i + 1, j):
            if (i, k) in self.spans and (k, j) in self.spans:
                return k
        raise TreeError(f"no split for {(i, j)}")

    def to_brackets(self, tokens: Optional[Sequence[str]] = None, label: str = "X") -> str:
        """PTB-style bracketing with every internal node labeled ``label``."""
        if tokens is None:
            tokens = [str(i) for i in range(self.n)]

        def rec(i, j):
            if j - i == 1:
                return f"({label} {_escape(tokens[i])})"
            k = self.split_of(i, j)
            return f"({label} {rec(i, k)} {rec(k, j)})"

        return rec(0, self.n)

    def to_json(self, sid=None):
        return {"id": sid, "n": self.n, "spans": [list(s) for s in self.internal]}

    @classmethod
    def from_json(cls, obj):
        return cls.from_spans(int(obj["n"]), [tuple(s) for s in obj["spans"]])

    def __repr__(self):
        return f"ConstituentTree(n={self.n}, internal={self.internal})"


def _escape(tok):
    return {"(": "-LRB-", ")": "-RRB-"}.get(tok, tok)


def left_branching(n: int) -> ConstituentTree:
    return ConstituentTree.from_spans(n, [(0, j) for j in range(2, n + 1)])


def right_branching(n: int) -> ConstituentTree:
    return ConstituentTree.from_spans(n, [(i, n) for i in range(0, n - 1)])


def all_binary_trees(i: int, j: int):
    """Yield every binary bracketing of [i, j) as a frozenset of spans (width >= 2)."""
    if j - i == 1:
        yield frozenset()
        return
    for k in range(i + 1, j):
        for left in all_binary_trees(i, k):
            for right in all_binary_trees(k, j):
                yield left | right | {(i, j)}


def enumerate_trees(n: int) -> List[ConstituentTree]:
    return [ConstituentTree.from_spans(n, s) for s in all_binary_trees(0, n)]


@dataclass(frozen=True)
class GoldTree:
    n: int
    labeled_spans: FrozenSet[Tuple[int, int, str]]
    tokens: Tuple[str, ...] = ()
    tags: Tuple[str, ...] = ()

    def spans(self):
        return {(i, j) for i, j, _ in self.labeled_spans}


class BracketError(ValueError):
    pass


def parse_brackets(text: str) -> GoldTree:
    """Read one PTB-style tree ``(LABEL child ...)`` with ``(TAG token)`` leaves.

    Labeled spans are collected for every non-preterminal node.  A tree made
    of a single ``(TAG token)`` yields one unary span labeled ``TAG``.
    """
    toks = _lex(text)
    pos = 0

    def expect(t):
        nonlocal pos
        if pos >= len(toks) or toks[pos][0] != t:
            where = toks[pos][1] if pos < len(toks) else len(text)
            raise BracketError(f"expected {t!r} at position {where}")
        pos += 1

    words, tags, spans = [], [], []

    def node():
        nonlocal pos
        here = toks[pos][1] if pos < len(toks) else len(text)
        expect("(")
        if pos < len(toks) and toks[pos][0] == "(":
            # unlabeled wrapper, e.g. "( (S ...) )"
            label = ""
        elif pos < len(toks) and toks[pos][0] not in ("(", ")"):
            label = toks[pos][0]
            pos += 1
        else:
            where = toks[pos][1] if pos < len(toks) else len(text)
            raise BracketError(f"empty node at position {where}")
        start = len(words)
        if pos < len(toks) and toks[pos][0] not in ("(", ")"):
            words.append(toks[pos][0])
            tags.append(label)
            pos += 1
            expect(")")
            return True
        nchild = 0
        while pos < len(toks) and toks[pos][0] == "(":
            node()
            nchild += 1
        expect(")")
        if nchild == 0:
            raise BracketError(f"node without children at position {here}")
        if label:
            spans.append((start, len(words), label.split("-")[0] or label))
        return False

    if not toks:
        raise BracketError("empty tree")
    leaf = node()
    if pos != len(toks):
        raise BracketError(f"trailing material at position {toks[pos][1]}")
    if leaf:
        spans.append((0, 1, tags[0]))
    return GoldTree(len(words), frozenset(spans), tuple(words), tuple(tags))


def _lex(text):
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            out.append((c, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append((text[i:j], i))
            i = j
    depth = 0
    for t, p in out:
        depth += {"(": 1, ")": -1}.get(t, 0)
        if depth < 0:
            raise BracketError(f"unbalanced ')' at position {p}")
    if depth != 0:
        raise BracketError(f"unbalanced parentheses: {depth} unclosed at end of input")
    return out


def gold_to_brackets(tree: GoldTree) -> str:
    """Inverse of parse_brackets for trees whose spans nest properly."""
    spans = sorted(tree.labeled_spans, key=lambda s: (s[0], -(s[1] - s[0])))
    tags = tree.tags or ("X",) * tree.n
    words = tree.tokens or tuple(str(i) for i in range(tree.n))

    def rec(i, j, idx):
        # idx: position in spans of the node covering [i, j)
        _, _, label = spans[idx]
        children = []
        k = i
        nxt = idx + 1
        while k < j:
            if nxt < len(spans) and spans[nxt][0] == k and spans[nxt][1] <= j:
                s = spans[nxt]
                sub, nxt = rec(s[0], s[1], nxt)
                children.append(sub)
                k = s[1]
            else:
                children.append(f"({tags[k]} {words[k]})")
                k += 1
        return f"({label} {' '.join(children)})", nxt

    if tree.n == 1 and len(spans) == 1 and spans[0][2] == tags[0]:
        return f"({tags[0]} {words[0]})"
    out, _ = rec(0, tree.n, 0)
    return out


def write_trees_jsonl(path, trees, ids=None):
    with open(path, "w", encoding="utf-8") as fh:
        for k, t in enumerate(trees):
            fh.write(json.dumps(t.to_json(ids[k] if ids else str(k))) + "\n")


def read_trees_jsonl(path):
    ids, trees = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                trees.append(ConstituentTree.from_json(obj))
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed tree record ({e})") from None
            ids.append(obj.get("id"))
    return ids, trees
