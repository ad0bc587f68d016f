"""English Snowball (Porter2) stemmer.

Written from the published step rules; regions R1/R2 are tracked as
integer offsets into the working word rather than as strings.
"""

VOWELS = frozenset("aeiouy")
DOUBLES = ("bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt")
LI_ENDING = frozenset("cdeghkmnrt")

EXCEPTIONS = {
    "skis": "ski",
    "skies": "sky",
    "dying": "die",
    "lying": "lie",
    "tying": "tie",
    "idly": "idl",
    "gently": "gentl",
    "ugly": "ugli",
    "early": "earli",
    "only": "onli",
    "singly": "singl",
    "sky": "sky",
    "news": "news",
    "howe": "howe",
    "atlas": "atlas",
    "cosmos": "cosmos",
    "bias": "bias",
    "andes": "andes",
}

# left untouched once step 1a has run
POST_1A_INVARIANT = frozenset(
    ["inning", "outing", "canning", "herring", "earring", "proceed", "exceed", "succeed"]
)

STEP2 = (
    ("ization", "ize"),
    ("ational", "ate"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("iveness", "ive"),
    ("tional", "tion"),
    ("biliti", "ble"),
    ("lessli", "less"),
    ("entli", "ent"),
    ("ation", "ate"),
    ("alism", "al"),
    ("aliti", "al"),
    ("ousli", "ous"),
    ("iviti", "ive"),
    ("fulli", "ful"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("abli", "able"),
    ("izer", "ize"),
    ("ator", "ate"),
    ("alli", "al"),
    ("bli", "ble"),
    ("ogi", None),
    ("li", None),
)

STEP3 = (
    ("ational", "ate"),
    ("tional", "tion"),
    ("alize", "al"),
    ("icate", "ic"),
    ("iciti", "ic"),
    ("ative", None),
    ("ical", "ic"),
    ("ness", ""),
    ("ful", ""),
)

STEP4 = (
    "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ism",
    "ate", "iti", "ous", "ive", "ize", "ion", "al", "er", "ic",
)


def _is_vowel(word, i):
    return word[i] in VOWELS


def _region_after(word, start):
    """Position after the first non-vowel following a vowel, searching from start."""
    for i in range(start + 1, len(word)):
        if not _is_vowel(word, i) and _is_vowel(word, i - 1):
            return i + 1
    return len(word)


def _regions(word):
    for prefix in ("gener", "commun", "arsen"):
        if word.startswith(prefix):
            r1 = len(prefix)
            break
    else:
        r1 = _region_after(word, 0)
    r2 = _region_after(word, r1)
    return r1, r2


def _short_syllable_end(word):
    """True if word ends in a short syllable."""
    n = len(word)
    if n >= 3:
        return (
            not _is_vowel(word, n - 1)
            and word[n - 1] not in "wxY"
            and _is_vowel(word, n - 2)
            and not _is_vowel(word, n - 3)
        )
    return n == 2 and _is_vowel(word, 0) and not _is_vowel(word, 1)


def _has_vowel(s):
    return any(c in VOWELS for c in s)


def stem_english(word):
    """Stem a single lowercase English word."""
    if len(word) <= 2:
        return word
    if word in EXCEPTIONS:
        return EXCEPTIONS[word]

    word = word.replace("’", "'").replace("‘", "'").replace("‛", "'")
    if word.startswith("'"):
        word = word[1:]
    if word.startswith("y"):
        word = "Y" + word[1:]
    chars = list(word)
    for i in range(1, len(chars)):
        if chars[i] == "y" and chars[i - 1] in VOWELS:
            chars[i] = "Y"
    word = "".join(chars)

    r1, r2 = _regions(word)

    # step 0
    for suf in ("'s'", "'s", "'"):
        if word.endswith(suf):
            word = word[: -len(suf)]
            break

    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith(("ied", "ies")):
        word = word[:-2] if len(word) > 4 else word[:-1]
    elif word.endswith(("us", "ss")):
        pass
    elif word.endswith("s"):
        if _has_vowel(word[:-2]):
            word = word[:-1]

    if word in POST_1A_INVARIANT:
        return word

    # step 1b
    for suf in ("eedly", "ingly", "edly", "eed", "ing", "ed"):
        if not word.endswith(suf):
            continue
        if suf in ("eed", "eedly"):
            if len(word) - len(suf) >= r1:
                word = word[: -len(suf)] + "ee"
        else:
            stem = word[: -len(suf)]
            if _has_vowel(stem):
                word = stem
                if word.endswith(("at", "bl", "iz")):
                    word += "e"
                elif word.endswith(DOUBLES):
                    word = word[:-1]
                elif r1 >= len(word) and _short_syllable_end(word):
                    word += "e"
        break

    # step 1c
    if len(word) > 2 and word[-1] in "yY" and not _is_vowel(word, len(word) - 2):
        word = word[:-1] + "i"

    # step 2
    for suf, rep in STEP2:
        if not word.endswith(suf):
            continue
        if len(word) - len(suf) >= r1:
            if suf == "ogi":
                if word[-4:-3] == "l":
                    word = word[:-1]
            elif suf == "li":
                if len(word) >= 3 and word[-3] in LI_ENDING:
                    word = word[:-2]
            else:
                word = word[: -len(suf)] + rep
        break

    # step 3
    for suf, rep in STEP3:
        if not word.endswith(suf):
            continue
        base = len(word) - len(suf)
        if base >= r1:
            if suf == "ative":
                if base >= r2:
                    word = word[:base]
            else:
                word = word[:base] + rep
        break

    # step 4
    for suf in STEP4:
        if not word.endswith(suf):
            continue
        base = len(word) - len(suf)
        if base >= r2:
            if suf == "ion":
                if base >= 1 and word[base - 1] in "st":
                    word = word[:base]
            else:
                word = word[:base]
        break

    # step 5
    n = len(word)
    if word.endswith("e"):
        if n - 1 >= r2:
            word = word[:-1]
        elif n - 1 >= r1 and not _short_syllable_end(word[:-1]):
            word = word[:-1]
    elif word.endswith("l"):
        if n - 1 >= r2 and n >= 2 and word[-2] == "l":
            word = word[:-1]

    return word.replace("Y", "y")
