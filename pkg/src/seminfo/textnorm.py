"""Tokenization and normalization shared by scoring, training and evaluation."""

import logging
import unicodedata
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from .snowball import stem_english

log = logging.getLogger(__name__)

PTB_ESCAPES = frozenset(
    ["-LRB-", "-RRB-", "-LSB-", "-RSB-", "-LCB-", "-RCB-", "-NONE-"]
)
EXTRA_PUNCT = frozenset("-`")

_STEMMERS = {"en": stem_english, "english": stem_english}
_warned = set()


def is_punct_char(ch: str) -> bool:
    return ch in EXTRA_PUNCT or unicodedata.category(ch).startswith("P")


def is_punct_token(surface: str) -> bool:
    if surface in PTB_ESCAPES:
        return True
    return bool(surface) and all(is_punct_char(c) for c in surface)


@dataclass(frozen=True)
class Token:
    surface: str
    is_punctuation: bool = False

    @classmethod
    def of(cls, surface):
        return cls(surface, is_punct_token(surface))


@dataclass(frozen=True)
class NormalizationOptions:
    lang: str = "en"
    strip_punct: bool = True
    lowercase: bool = True
    stem: bool = True


@dataclass(frozen=True)
class NormalizedSentence:
    original_tokens: Tuple[Token, ...] = ()
    normalized_tokens: Tuple[str, ...] = ()
    index_map: Tuple[int, ...] = ()

    def __len__(self):
        return len(self.normalized_tokens)

    @property
    def punct_mask(self) -> List[bool]:
        """True at original positions that were dropped by normalization."""
        kept = set(self.index_map)
        return [i not in kept for i in range(len(self.original_tokens))]


def tokenize(raw: str) -> List[Token]:
    """Whitespace tokenization with punctuation split off word edges.

    Punctuation inside a word (``self-help``, ``bill's``) stays attached;
    leading and trailing punctuation characters become standalone tokens.
    """
    out = []
    for chunk in raw.split():
        if chunk in PTB_ESCAPES or is_punct_token(chunk):
            out.extend(Token.of(c) for c in _split_punct_run(chunk))
            continue
        i, j = 0, len(chunk)
        while i < j and is_punct_char(chunk[i]):
            i += 1
        while j > i and is_punct_char(chunk[j - 1]):
            j -= 1
        out.extend(Token(c, True) for c in chunk[:i])
        out.append(Token(chunk[i:j], False))
        out.extend(Token(c, True) for c in chunk[j:])
    return out


def _split_punct_run(chunk):
    # keep PTB escapes and repeated-character runs ("--", "``", "...") whole
    if chunk in PTB_ESCAPES or len(set(chunk)) == 1:
        return [chunk]
    return list(chunk)


def stem(token: str, language: str = "en") -> str:
    fn = _STEMMERS.get(language.lower())
    if fn is None:
        if language not in _warned:
            log.warning("no stemmer configured for language %r; using identity", language)
            _warned.add(language)
        return token
    # a second pass must not change the result; fall back to the fixed point
    out = fn(token)
    for _ in range(8):
        again = fn(out)
        if again == out:
            break
        out = again
    return out


def normalize_sentence(tokens: Sequence[Token], options: NormalizationOptions = NormalizationOptions()) -> NormalizedSentence:
    normalized, index_map = [], []
    for i, tok in enumerate(tokens):
        if options.strip_punct and tok.is_punctuation:
            continue
        w = tok.surface.lower() if options.lowercase else tok.surface
        if options.stem:
            w = stem(w, options.lang)
        normalized.append(w)
        index_map.append(i)
    return NormalizedSentence(tuple(tokens), tuple(normalized), tuple(index_map))


def normalize_text(raw: str, options: NormalizationOptions = NormalizationOptions()) -> NormalizedSentence:
    return normalize_sentence(tokenize(raw), options)
