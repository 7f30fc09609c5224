"""Lexicon-based part-of-speech tagging with suffix fallback rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "OTHER")
DEFAULT_TAG = "OTHER"

# Applied in order on lexicon misses; first matching suffix wins.
DEFAULT_SUFFIX_RULES = [
    ("heit", "NOUN"),
    ("keit", "NOUN"),
    ("ung", "NOUN"),
    ("lich", "ADJ"),
    ("isch", "ADJ"),
    ("ig", "ADJ"),
    ("en", "VERB"),
]


@dataclass
class PosLexicon:
    """Total tagging function: exact lookup, then suffix rules, then OTHER."""

    entries: dict[str, str] = field(default_factory=dict)
    suffix_rules: list[tuple[str, str]] = field(default_factory=lambda: list(DEFAULT_SUFFIX_RULES))

    def tag(self, token_text: str) -> str:
        hit = self.entries.get(token_text)
        if hit is not None:
            return hit
        for suffix, tag in self.suffix_rules:
            if len(token_text) > len(suffix) and token_text.endswith(suffix):
                return tag
        return DEFAULT_TAG


def pos_tag(lexicon: PosLexicon, token_text: str) -> str:
    return lexicon.tag(token_text)


def _read_tsv_pairs(path: Path, what: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise SchemaError(f"{path}:{lineno}: malformed {what} line {line!r}")
        if parts[1] not in POS_TAGS:
            raise SchemaError(f"{path}:{lineno}: unknown POS tag {parts[1]!r}")
        pairs.append((parts[0], parts[1]))
    return pairs


def load_lexicon(path: str | Path, suffix_path: str | Path | None = None) -> PosLexicon:
    entries = dict(_read_tsv_pairs(Path(path), "lexicon"))
    rules = list(DEFAULT_SUFFIX_RULES)
    if suffix_path is not None:
        rules = _read_tsv_pairs(Path(suffix_path), "suffix rule")
    return PosLexicon(entries=entries, suffix_rules=rules)


def save_lexicon(lexicon: PosLexicon, path: str | Path, suffix_path: str | Path | None = None) -> None:
    lines = [f"{token}\t{tag}" for token, tag in sorted(lexicon.entries.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if suffix_path is not None:
        lines = [f"{suffix}\t{tag}" for suffix, tag in lexicon.suffix_rules]
        Path(suffix_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
