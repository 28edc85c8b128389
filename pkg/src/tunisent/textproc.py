"""Tokenization, script detection and the TUNIZI/Arabic character table."""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

# Unicode Arabic blocks: Arabic, Arabic Supplement, Arabic Extended-A,
# Arabic Presentation Forms-A and -B.
ARABIC_RANGES = (
    (0x0600, 0x06FF),
    (0x0750, 0x077F),
    (0x08A0, 0x08FF),
    (0xFB50, 0xFDFF),
    (0xFE70, 0xFEFF),
)

DEFAULT_TABLE = "tunizi_table.tsv"

_VARIANT_EXTRA = frozenset("'$")


class Script(str, enum.Enum):
    ROMANIZED = "romanized"
    ARABIC = "arabic"
    MIXED = "mixed"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class TranslitEntry:
    arabic: str
    tunizi_variants: frozenset[str]
    arabizi_variants: frozenset[str]

    def __post_init__(self):
        if len(self.arabic) != 1 or not is_arabic_char(self.arabic):
            raise ValueError(f"not a single Arabic codepoint: {self.arabic!r}")
        for variant in self.tunizi_variants | self.arabizi_variants:
            if not variant or not all(_is_variant_char(c) for c in variant):
                raise ValueError(f"invalid variant {variant!r} for {self.arabic}")


def is_arabic_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in ARABIC_RANGES)


def has_arabic(text: str) -> bool:
    """True if any codepoint of ``text`` falls in an Arabic Unicode block."""
    return any(is_arabic_char(c) for c in text)


def is_latin_letter(ch: str) -> bool:
    return ch.isalpha() and unicodedata.name(ch, "").startswith("LATIN")


def _is_variant_char(ch: str) -> bool:
    return (ch.isascii() and ch.isalnum()) or ch in _VARIANT_EXTRA


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def classify_script(text: str) -> Script:
    """Classify ``text`` as Romanized, Arabic, Mixed or Neutral.

    Digits (including Arabic-Indic digits), punctuation, symbols and
    emoji carry no script information and are ignored.
    """
    latin = arabic = False
    for ch in text:
        if is_latin_letter(ch):
            latin = True
        elif is_arabic_char(ch) and unicodedata.category(ch) != "Nd":
            arabic = True
        if latin and arabic:
            return Script.MIXED
    if latin:
        return Script.ROMANIZED
    if arabic:
        return Script.ARABIC
    return Script.NEUTRAL


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, then peel leading/trailing punctuation off each chunk.

    Each peeled punctuation mark becomes its own token. Characters inside a
    chunk (digits, apostrophes, ``$``) stay attached since TUNIZI uses them
    as letters.
    """
    tokens: list[Token] = []
    n = len(text)
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        while lo < hi and _is_punct(text[lo]):
            tokens.append(Token(text[lo], lo, lo + 1))
            lo += 1
        trailing = []
        while hi > lo and _is_punct(text[hi - 1]):
            hi -= 1
            trailing.append(Token(text[hi], hi, hi + 1))
        if lo < hi:
            tokens.append(Token(text[lo:hi], lo, hi))
        tokens.extend(reversed(trailing))
        i = j
    return tokens


def token_surfaces(text: str) -> list[str]:
    return [t.surface for t in tokenize(text)]


def _split_variants(field: str) -> frozenset[str]:
    return frozenset(v.strip() for v in field.split(",") if v.strip())


def parse_translit_table(lines: Iterable[str]) -> list[TranslitEntry]:
    entries = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        arabic, tunizi, arabizi = fields
        entries.append(TranslitEntry(arabic.strip(), _split_variants(tunizi), _split_variants(arabizi)))
    return entries


def load_translit_table(path: str | Path | None = None) -> list[TranslitEntry]:
    """Load the character table; the packaged copy is used when ``path`` is None."""
    if path is None:
        text = resources.files("tunisent.data").joinpath(DEFAULT_TABLE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_translit_table(text.splitlines())


_default_table: list[TranslitEntry] | None = None


def default_table() -> list[TranslitEntry]:
    global _default_table
    if _default_table is None:
        _default_table = load_translit_table()
    return _default_table


def _tunizi_map(table: Iterable[TranslitEntry]) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for entry in table:
        for variant in entry.tunizi_variants:
            key = variant.lower()
            if key in mapping and mapping[key] != entry.arabic:
                raise ValueError(f"TUNIZI variant {variant!r} maps to two Arabic letters")
            mapping[key] = entry.arabic
    return mapping


def translit_candidates(token: str, table: Iterable[TranslitEntry] | None = None) -> set[str]:
    """Replace TUNIZI numerals and multigraphs in ``token`` with Arabic letters.

    Matching is greedy longest-match, left to right, and case-insensitive.
    Characters that start no table variant are copied through unchanged.
    Only the TUNIZI column is used, so ``8`` reads as غ (never ق).
    """
    mapping = _tunizi_map(default_table() if table is None else table)
    longest = max((len(k) for k in mapping), default=0)
    # per-character lowering keeps offsets aligned (str.lower can change length)
    lowered = "".join(c.lower() if len(c.lower()) == 1 else c for c in token)
    out = []
    i = 0
    while i < len(token):
        for size in range(min(longest, len(token) - i), 0, -1):
            arabic = mapping.get(lowered[i : i + size])
            if arabic is not None:
                out.append(arabic)
                i += size
                break
        else:
            out.append(token[i])
            i += 1
    return {"".join(out)}
