"""File formats: paraphrase sets, corpora, gold/predicted trees."""

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .maxsub import ParaphraseSet
from .textnorm import NormalizationOptions, NormalizedSentence, normalize_text
from .trees import BracketError, ConstituentTree, GoldTree, gold_to_brackets, parse_brackets, read_trees_jsonl


class FormatError(ValueError):
    pass


@dataclass
class ParaphraseRecord:
    """One line of a paraphrase file, before normalization."""

    id: str
    source: str
    paraphrases: List[str] = field(default_factory=list)

    def to_json(self):
        return {"id": self.id, "source": self.source, "paraphrases": list(self.paraphrases)}


@dataclass
class CorpusRecord:
    id: str
    raw: str
    normalized: NormalizedSentence


def _check_record(obj, where):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object")
    for key, typ in (("id", str), ("source", str), ("paraphrases", list)):
        if key not in obj:
            raise FormatError(f"{where}: missing field {key!r}")
        if not isinstance(obj[key], typ):
            raise FormatError(f"{where}: field {key!r} has the wrong type")
    if not all(isinstance(p, str) for p in obj["paraphrases"]):
        raise FormatError(f"{where}: paraphrases must be strings")


def read_paraphrase_records(path) -> List[ParaphraseRecord]:
    out, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{where}: malformed JSON ({e.msg})") from None
            _check_record(obj, where)
            if obj["id"] in seen:
                raise FormatError(f"{where}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            out.append(ParaphraseRecord(obj["id"], obj["source"], list(obj["paraphrases"])))
    return out


def write_paraphrase_records(path, records: Sequence[ParaphraseRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def normalize_records(records, options: NormalizationOptions = NormalizationOptions()) -> List[ParaphraseSet]:
    return [
        ParaphraseSet(r.id, normalize_text(r.source, options), [normalize_text(p, options) for p in r.paraphrases])
        for r in records
    ]


def read_paraphrases(path, options: NormalizationOptions = NormalizationOptions()) -> List[ParaphraseSet]:
    return normalize_records(read_paraphrase_records(path), options)


def corpus_records(records, options: NormalizationOptions = NormalizationOptions()) -> List[CorpusRecord]:
    return [CorpusRecord(r.id, r.source, normalize_text(r.source, options)) for r in records]


def read_bracketed(path) -> List[GoldTree]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_brackets(line))
            except BracketError as e:
                raise BracketError(f"{path}:{lineno}: {e}") from None
    return out


def write_bracketed(path, trees: Sequence[GoldTree]):
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(gold_to_brackets(t) + "\n")


def read_any_trees(path) -> List[object]:
    """Trees from a JSON Lines span file or a one-per-line bracket file.

    JSON records become ConstituentTree; bracketed lines become GoldTree.
    """
    with open(path, encoding="utf-8") as fh:
        first = next((l for l in fh if l.strip()), "")
    if first.lstrip().startswith("{"):
        return read_trees_jsonl(path)[1]
    return read_bracketed(path)


def as_span_tree(tree) -> ConstituentTree:
    """View a GoldTree as an unlabeled span set (not necessarily binary)."""
    if isinstance(tree, ConstituentTree):
        return tree
    return ConstituentTree.from_spans(tree.n, tree.spans())
