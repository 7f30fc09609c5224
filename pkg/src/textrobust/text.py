"""Deterministic text primitives: tokenization, character edits, and distances.

Tokens carry character offsets into the original string so that perturbed
documents can be rebuilt by splicing edited token texts back into the raw
text. All functions here are pure and safe to call from concurrent workers.
"""

from __future__ import annotations

import random
import re
import unicodedata
from dataclasses import dataclass, field

from .errors import ConfigError, PositionError

# Characters available to insert/substitute edits and to the misspelling
# generator. Letters plus digits keep the search space bounded while still
# covering leetspeak-style noise.
CHAR_INVENTORY = "abcdefghijklmnopqrstuvwxyz0123456789"

EDIT_KINDS = ("swap", "insert", "delete", "substitute")

_WORD_RE = re.compile(r"\S+")


@dataclass
class Token:
    """A token text plus its character span in the source string."""

    text: str
    start: int
    end: int


@dataclass
class Document:
    """A raw string, its token list, and an optional gold class label."""

    raw: str
    tokens: list[Token]
    label: int | None = None

    @property
    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def is_punctuation_token(text: str) -> bool:
    return all(_is_punct(ch) for ch in text)


def _lower_keep_length(s: str) -> str:
    # Per-character lowercase, skipping the rare mappings that change length
    # (e.g. dotted capital I), so offsets stay aligned with the source.
    out = []
    for ch in s:
        low = ch.lower()
        out.append(low if len(low) == 1 else ch)
    return "".join(out)


def tokenize(raw: str) -> list[Token]:
    """Lowercase + whitespace split, peeling boundary punctuation into its own tokens.

    Offsets always reference the original string. Empty input yields an
    empty list.
    """
    tokens: list[Token] = []
    for match in _WORD_RE.finditer(raw):
        start, end = match.start(), match.end()
        chunk = _lower_keep_length(match.group())
        lo, hi = 0, len(chunk)
        leading: list[Token] = []
        while lo < hi and _is_punct(chunk[lo]):
            leading.append(Token(chunk[lo], start + lo, start + lo + 1))
            lo += 1
        trailing: list[Token] = []
        while hi > lo and _is_punct(chunk[hi - 1]):
            trailing.append(Token(chunk[hi - 1], start + hi - 1, start + hi))
            hi -= 1
        tokens.extend(leading)
        if hi > lo:
            tokens.append(Token(chunk[lo:hi], start + lo, start + hi))
        tokens.extend(reversed(trailing))
    return tokens


def document_from_text(raw: str, label: int | None = None) -> Document:
    return Document(raw=raw, tokens=tokenize(raw), label=label)


def document_from_tokens(texts: list[str], label: int | None = None) -> Document:
    """Build a document by joining token texts with single spaces.

    Intended for tentative probe documents; prediction only depends on the
    token texts, not on offsets.
    """
    return document_from_text(" ".join(texts), label=label)


def validate_document(doc: Document) -> None:
    """Assert the document invariants; raises AssertionError on violation."""
    prev_end = -1
    for tok in doc.tokens:
        assert tok.text, "empty token"
        assert 0 <= tok.start < tok.end <= len(doc.raw)
        assert tok.end - tok.start == len(tok.text)
        assert tok.start >= prev_end, "overlapping tokens"
        prev_end = tok.end
    retok = tokenize(doc.raw)
    assert [t.text for t in retok] == doc.token_texts
    assert [(t.start, t.end) for t in retok] == [(t.start, t.end) for t in doc.tokens]


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert/delete/substitute, no transposition)."""
    n, m = len(a), len(b)
    if n > m:
        a, b, n, m = b, a, m, n
    current = list(range(n + 1))
    for i in range(1, m + 1):
        previous, current = current, [i] + [0] * n
        for j in range(1, n + 1):
            add = previous[j] + 1
            delete = current[j - 1] + 1
            change = previous[j - 1] + (a[j - 1] != b[i - 1])
            current[j] = min(add, delete, change)
    return current[n]


def jaccard(a, b) -> float:
    """Intersection-over-union of two token-text collections, as sets.

    Two empty collections are considered identical (1.0).
    """
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass
class CharEditOp:
    """One character-level edit inside a token.

    ``position`` indexes the token text; ``char`` is required for
    insert/substitute and must be absent otherwise. Swap exchanges the
    characters at ``position`` and ``position + 1``.
    """

    kind: str
    position: int
    char: str | None = None

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ConfigError(f"unknown edit kind {self.kind!r}")
        if self.kind in ("insert", "substitute"):
            if not self.char or len(self.char) != 1:
                raise ConfigError(f"{self.kind} requires a single character")
        elif self.char is not None:
            raise ConfigError(f"{self.kind} takes no character")


def apply_char_edit(text: str, op: CharEditOp) -> str:
    """Apply exactly one character edit; out-of-range positions are rejected."""
    n = len(text)
    pos = op.position
    if pos < 0:
        raise PositionError(f"negative position {pos}")
    if op.kind == "insert":
        if pos > n:
            raise PositionError(f"insert position {pos} > length {n}")
        return text[:pos] + op.char + text[pos:]
    if pos >= n:
        raise PositionError(f"{op.kind} position {pos} >= length {n}")
    if op.kind == "swap":
        if pos + 1 >= n:
            raise PositionError(f"swap position {pos} has no right neighbour")
        return text[:pos] + text[pos + 1] + text[pos] + text[pos + 2 :]
    if op.kind == "delete":
        return text[:pos] + text[pos + 1 :]
    return text[:pos] + op.char + text[pos + 1 :]


@dataclass
class MisspellingPair:
    """A (correct, corrupted) token pair labelled with normalized similarity.

    similarity = 1 - levenshtein(correct, corrupted) / max(len(correct), len(corrupted))
    """

    correct: str
    corrupted: str
    similarity: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.similarity is None:
            self.similarity = pair_similarity(self.correct, self.corrupted)


def pair_similarity(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def _random_edit(rng: random.Random, text: str) -> CharEditOp:
    kinds = ["insert", "substitute"]
    if len(text) >= 2:
        kinds.append("swap")
        kinds.append("delete")  # never reduce a token to the empty string
    kind = rng.choice(kinds)
    if kind == "insert":
        return CharEditOp("insert", rng.randrange(len(text) + 1), rng.choice(CHAR_INVENTORY))
    if kind == "substitute":
        pos = rng.randrange(len(text))
        choices = [c for c in CHAR_INVENTORY if c != text[pos]]
        return CharEditOp("substitute", pos, rng.choice(choices))
    if kind == "swap":
        return CharEditOp("swap", rng.randrange(len(text) - 1))
    return CharEditOp("delete", rng.randrange(len(text)))


def generate_misspelling_pairs(vocab, n: int, seed: int) -> list[MisspellingPair]:
    """Corrupt random vocabulary words with 1-2 random character edits.

    Deterministic for a fixed seed; every pair has corrupted != correct.
    """
    words = sorted(vocab)
    if not words:
        raise ConfigError("cannot generate misspelling pairs from an empty vocabulary")
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = random.Random(seed)
    pairs: list[MisspellingPair] = []
    while len(pairs) < n:
        correct = rng.choice(words)
        corrupted = correct
        for _ in range(rng.randint(1, 2)):
            corrupted = apply_char_edit(corrupted, _random_edit(rng, corrupted))
        if corrupted == correct:
            continue  # e.g. swap of equal characters; resample
        pairs.append(MisspellingPair(correct, corrupted))
    return pairs


def splice_texts(doc: Document, new_texts: list[str], label: int | None = None) -> Document:
    """Rebuild a document with token texts replaced at their original spans.

    Token count must match. Unchanged tokens keep their exact bytes, so an
    all-unchanged splice returns a byte-identical raw string. Falls back to a
    space-joined rebuild when splicing would merge adjacent tokens.
    """
    if len(new_texts) != len(doc.tokens):
        raise ConfigError("token count mismatch in splice")
    if label is None:
        label = doc.label
    if new_texts == doc.token_texts:
        return Document(raw=doc.raw, tokens=[Token(t.text, t.start, t.end) for t in doc.tokens], label=label)
    raw = doc.raw
    for tok, text in sorted(zip(doc.tokens, new_texts), key=lambda p: -p[0].start):
        if text != tok.text:
            raw = raw[: tok.start] + text + raw[tok.end :]
    out = document_from_text(raw, label=label)
    if out.token_texts != new_texts:
        out = document_from_tokens(new_texts, label=label)
        if out.token_texts != new_texts:
            raise ConfigError(f"unstable token texts {new_texts!r}")
    return out


def replace_token(doc: Document, index: int, new_text: str) -> Document:
    """Replace one token's text, preserving the surrounding raw string."""
    expected = doc.token_texts
    expected[index] = new_text
    return splice_texts(doc, expected)


def insert_token(doc: Document, index: int, side: str, new_text: str) -> Document:
    """Insert a new token to the left or right of token ``index``."""
    if side not in ("left", "right"):
        raise ConfigError(f"unknown insertion side {side!r}")
    texts = doc.token_texts
    if side == "left":
        at = doc.tokens[index].start
        expected = texts[: index] + [new_text] + texts[index:]
        candidates = [
            doc.raw[:at] + new_text + " " + doc.raw[at:],
            doc.raw[:at] + " " + new_text + " " + doc.raw[at:],
        ]
    else:
        at = doc.tokens[index].end
        expected = texts[: index + 1] + [new_text] + texts[index + 1 :]
        candidates = [
            doc.raw[:at] + " " + new_text + doc.raw[at:],
            doc.raw[:at] + " " + new_text + " " + doc.raw[at:],
        ]
    for raw in candidates:
        out = document_from_text(raw, label=doc.label)
        if out.token_texts == expected:
            return out
    out = document_from_tokens(expected, label=doc.label)
    if out.token_texts != expected:
        raise ConfigError(f"unstable token texts {expected!r}")
    return out
