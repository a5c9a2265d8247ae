"""Deterministic text normalization shared by indexing and query parsing.

The pipeline is fold -> tokenize -> stem. Both the index builder and the
query engine run the exact same code, so a term normalized at index time
is guaranteed to be findable at query time.

Folding collapses case, diacritics and special letters to plain ASCII so
that transliterated spellings match ("Paweł" and "Pawel" produce the same
folded form). Letters that neither decompose nor appear in the shipped
transliteration table are dropped.
"""

from __future__ import annotations

import functools
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources

__all__ = ["Token", "fold", "tokenize", "stem", "latex_to_unicode"]


# ---------------------------------------------------------------------------
# Transliteration table
# ---------------------------------------------------------------------------

def _load_translit_table() -> dict[int, str]:
    """Read the shipped source<TAB>replacement table (one pair per line)."""
    table: dict[int, str] = {}
    text = resources.files("donut.data").joinpath("translit.tsv").read_text("utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        source, _, replacement = line.partition("\t")
        table[ord(source)] = replacement
    return table


_TRANSLIT = _load_translit_table()


# ---------------------------------------------------------------------------
# Folding
# ---------------------------------------------------------------------------

def _strip_marks(s: str) -> str:
    return "".join(c for c in s if not unicodedata.combining(c))


def fold(text: str) -> str:
    """Normalize to a lowercase ASCII skeleton. Idempotent and total.

    Compatibility-decomposes, strips diacritic marks, case-folds, then maps
    special letters (ł, ø, æ, ...) through the transliteration table.
    Remaining non-ASCII characters are dropped.
    """
    s = _strip_marks(unicodedata.normalize("NFKD", text))
    # casefold can introduce new decomposable characters (e.g. İ -> i + dot)
    s = _strip_marks(unicodedata.normalize("NFKD", s.casefold()))
    s = s.translate(_TRANSLIT)
    return s.encode("ascii", "ignore").decode("ascii")


# ---------------------------------------------------------------------------
# LaTeX escape decoding
# ---------------------------------------------------------------------------

# Accent command -> combining character, composed via NFC after substitution.
_ACCENTS = {
    "'": "\u0301", "`": "\u0300", "^": "\u0302", '"': "\u0308",
    "~": "\u0303", "=": "\u0304", ".": "\u0307", "u": "\u0306",
    "v": "\u030c", "H": "\u030b", "c": "\u0327", "k": "\u0328",
    "r": "\u030a", "b": "\u0331", "d": "\u0323",
}

_LETTER_MACROS = {
    "ss": "ß", "ae": "æ", "AE": "Æ", "oe": "œ", "OE": "Œ",
    "aa": "å", "AA": "Å", "dh": "ð", "DH": "Ð", "th": "þ", "TH": "Þ",
    "dj": "đ", "DJ": "Đ", "ng": "ŋ", "NG": "Ŋ",
    "l": "ł", "L": "Ł", "o": "ø", "O": "Ø", "i": "ı", "j": "ȷ",
}

_SYM_ACCENT_RE = re.compile(r"\\(['`^\"~=.])\{([A-Za-z])\}|\\(['`^\"~=.])([A-Za-z])")
_LTR_ACCENT_RE = re.compile(r"\\([uvHckrbd])\{([A-Za-z])\}|\\([uvHckrbd])\s+([A-Za-z])")
_MACRO_RE = re.compile(
    r"\\(" + "|".join(sorted(_LETTER_MACROS, key=len, reverse=True)) + r")(?![A-Za-z])\s?"
)
_ESCAPED_RE = re.compile(r"\\([&%$#_])")
_COMMAND_RE = re.compile(r"\\[A-Za-z]+\*?")


def _sub_accent(m: re.Match) -> str:
    sym = m.group(1) or m.group(3)
    letter = m.group(2) or m.group(4)
    return unicodedata.normalize("NFC", letter + _ACCENTS[sym])


def latex_to_unicode(text: str) -> str:
    """Decode common LaTeX escapes (\\'e, \\ss, \\c{c}, ...) to Unicode.

    Unknown commands are removed; brace structure is left in place for the
    tokenizer to discard.
    """
    s = _SYM_ACCENT_RE.sub(_sub_accent, text)
    s = _LTR_ACCENT_RE.sub(_sub_accent, s)
    s = _MACRO_RE.sub(lambda m: _LETTER_MACROS[m.group(1)], s)
    s = _ESCAPED_RE.sub(r"\1", s)
    s = s.replace("\\{", " ").replace("\\}", " ").replace("\\,", " ")
    s = _COMMAND_RE.sub(" ", s)
    return s


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    """One normalized token: original surface, folded form, 0-based position."""

    surface: str
    folded: str
    position: int


# Words are runs of letters/digits, optionally chained by single hyphens.
_WORD_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*", re.UNICODE)


def tokenize(text: str) -> list[Token]:
    """Split into folded tokens; hyphenated words emit parts AND the joined form.

    "high-dimensional" yields "high" (pos 0), "dimensional" (pos 1) plus the
    combined "highdimensional" anchored at pos 0, so hyphenated and spaced
    spellings match each other. LaTeX escapes are decoded before folding.
    Tokens whose folded form is empty are dropped.
    """
    decoded = latex_to_unicode(text).replace("{", "").replace("}", "")
    tokens: list[Token] = []
    position = 0
    for match in _WORD_RE.finditer(decoded):
        word = match.group()
        parts = word.split("-")
        emitted_parts = 0
        for offset, part in enumerate(parts):
            folded = fold(part)
            if folded:
                tokens.append(Token(part, folded, position + offset))
                emitted_parts += 1
        if len(parts) > 1 and emitted_parts > 1:
            combined = fold("".join(parts))
            if combined:
                tokens.append(Token(word, combined, position))
        position += len(parts)
    return tokens


# ---------------------------------------------------------------------------
# Stemming (Porter suffix stripping)
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_consonant(word: str, i: int) -> bool:
    c = word[i]
    if c in _VOWELS:
        return False
    if c == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count VC sequences in the [C](VC)^m[V] decomposition of the stem."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        vowel = not _is_consonant(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    # consonant-vowel-consonant where the final consonant is not w, x or y
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _replace_suffix(word: str, suffix: str, replacement: str) -> str:
    return word[: len(word) - len(suffix)] + replacement


# (suffix, replacement) rules applied when measure(stem) > 0
_STEP2_RULES = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("bli", "ble"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
    ("logi", "log"),
)

_STEP3_RULES = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

# suffixes deleted when measure(stem) > 1
_STEP4_SUFFIXES = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def _porter_pass(word: str) -> str:
    if len(word) <= 2:
        return word

    # Step 1a: plurals
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif word.endswith("s") and not word.endswith("ss"):
        word = word[:-1]

    # Step 1b: -eed / -ed / -ing
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        stripped = None
        if word.endswith("ed") and _has_vowel(word[:-2]):
            stripped = word[:-2]
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            stripped = word[:-3]
        if stripped is not None:
            word = stripped
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_consonant(word) and word[-1] not in "lsz":
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # Step 1c: terminal y -> i after a vowel-bearing stem
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"

    # Steps 2 and 3: double-suffix reductions
    for rules in (_STEP2_RULES, _STEP3_RULES):
        for suffix, replacement in rules:
            if word.endswith(suffix):
                if _measure(word[: len(word) - len(suffix)]) > 0:
                    word = _replace_suffix(word, suffix, replacement)
                break

    # Step 4: drop residual suffixes from long stems
    for suffix in _STEP4_SUFFIXES:
        if word.endswith(suffix):
            stem_part = word[: len(word) - len(suffix)]
            if suffix == "ion" and not stem_part.endswith(("s", "t")):
                break
            if _measure(stem_part) > 1:
                word = stem_part
            break

    # Step 5a: terminal e
    if word.endswith("e"):
        base = word[:-1]
        m = _measure(base)
        if m > 1 or (m == 1 and not _ends_cvc(base)):
            word = base

    # Step 5b: -ll -> -l on long stems
    if word.endswith("ll") and _measure(word[:-1]) > 1:
        word = word[:-1]

    return word


@functools.lru_cache(maxsize=65536)
def stem(folded_token: str) -> str:
    """Porter-stem an already folded token; repeated application is stable.

    A single Porter pass is not a fixed point for every word, so the pass
    is iterated until the output stops changing.
    """
    word = folded_token
    for _ in range(8):
        next_word = _porter_pass(word)
        if next_word == word:
            return word
        word = next_word
    return word
