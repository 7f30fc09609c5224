"""Dataset files and the synthetic two-class keyword corpus.

Datasets are UTF-8 TSV files with a ``text<TAB>label`` header (plus an
optional ``origin`` column for abstain training mixtures); tabs, newlines,
and backslashes inside the text are backslash-escaped so one line is always
one document.

The synthetic corpus is a desk-scale stand-in for a real hate-speech split:
pronounceable pseudo-words, two disjoint keyword lists, and documents of
5-15 tokens whose label is decided by which class contributes more keywords.
Every document carries keywords of both classes with a net majority of 1-3
for its own class, which is what gives attacks something to flip.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, SchemaError
from .pos import PosLexicon
from .text import Document, document_from_text

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def escape_text(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_text(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def write_dataset(path: str | Path, documents: list[Document], origins: list[str] | None = None) -> None:
    if origins is not None and len(origins) != len(documents):
        raise ConfigError("origins length mismatch")
    header = "text\tlabel\torigin" if origins is not None else "text\tlabel"
    lines = [header]
    for i, doc in enumerate(documents):
        if doc.label is None or doc.label < 0:
            raise ConfigError("dataset documents need non-negative labels")
        row = f"{escape_text(doc.raw)}\t{doc.label}"
        if origins is not None:
            row += f"\t{origins[i]}"
        lines.append(row)
    from .config import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path: str | Path) -> tuple[list[Document], list[str] | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] not in ("text\tlabel", "text\tlabel\torigin"):
        raise SchemaError(f"{path}:1: expected header 'text<TAB>label[<TAB>origin]'")
    has_origin = lines[0].endswith("\torigin")
    documents: list[Document] = []
    origins: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != (3 if has_origin else 2):
            raise SchemaError(f"{path}:{lineno}: expected {3 if has_origin else 2} columns, got {len(parts)}")
        try:
            label = int(parts[1])
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: label {parts[1]!r} is not an integer") from exc
        if label < 0:
            raise SchemaError(f"{path}:{lineno}: label must be non-negative")
        documents.append(document_from_text(unescape_text(parts[0]), label=label))
        if has_origin:
            origins.append(parts[2])
    return documents, (origins if has_origin else None)


@dataclass
class DatasetSpec:
    train_size: int = 600
    validation_size: int = 200
    test_size: int = 200
    vocab_size: int = 88
    keywords_per_class: int = 24
    min_tokens: int = 5
    max_tokens: int = 15
    seed: int = 0
    class_keywords: list[list[str]] | None = None  # explicit keyword lists override generation

    def __post_init__(self):
        for name in ("train_size", "validation_size", "test_size", "vocab_size", "keywords_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ConfigError("need 1 <= min_tokens <= max_tokens")
        if self.vocab_size <= 2 * self.keywords_per_class:
            raise ConfigError("vocab_size must exceed the keyword count")


@dataclass
class SyntheticDataset:
    splits: dict[str, list[Document]]
    class_keywords: list[list[str]]
    fillers: list[str]
    lexicon: PosLexicon = field(default_factory=PosLexicon)

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.class_keywords[0] + self.class_keywords[1] + self.fillers)


def _make_word(rng: random.Random, min_len: int, max_len: int) -> str:
    target = rng.randint(min_len, max_len)
    out = []
    while len(out) < target:
        out.append(rng.choice(_CONSONANTS))
        if len(out) < target:
            out.append(rng.choice(_VOWELS))
    return "".join(out[:target])


def _make_words(rng: random.Random, count: int, min_len: int, max_len: int, taken: set[str], shapes: set[str]) -> list[str]:
    words = []
    guard = 0
    while len(words) < count:
        guard += 1
        if guard > 100000:
            raise ConfigError("vocabulary too large for the word shape space")
        word = _make_word(rng, min_len, max_len)
        shape = "".join(sorted(word))
        # keep words anagram-free so spelling similarity stays discriminative
        if word in taken or shape in shapes:
            continue
        taken.add(word)
        shapes.add(shape)
        words.append(word)
    return words


def _make_document_pair(
    rng: random.Random, keywords: list[list[str]], fillers: list[str], spec: DatasetSpec
) -> tuple[Document, Document]:
    """One label-0 and one label-1 document sharing the same filler multiset.

    Documents mix keywords of both classes; the label is decided by a net
    majority of 1-3 of its class's keywords over the other's. Mirrored pairs
    keep every filler's class counts exactly balanced, so fillers carry no
    label signal of their own.
    """
    n = rng.randint(spec.min_tokens, spec.max_tokens)
    margin = rng.randint(1, 2)
    max_other = (n - margin) // 2
    n_other = rng.randint(2, max(2, min(6, max_other, len(keywords[0]) - margin)))
    n_own = n_other + margin
    shared = [rng.choice(fillers) for _ in range(n - n_own - n_other)]
    docs = []
    for label in (0, 1):
        tokens = rng.sample(keywords[label], n_own)
        tokens += rng.sample(keywords[1 - label], n_other)
        tokens += shared
        rng.shuffle(tokens)
        docs.append(document_from_text(" ".join(tokens), label=label))
    return docs[0], docs[1]


def generate_dataset(spec: DatasetSpec) -> SyntheticDataset:
    """Deterministic synthetic corpus with train/validation/test splits."""
    rng = random.Random(spec.seed)
    taken: set[str] = set()
    shapes: set[str] = set()
    if spec.class_keywords is not None:
        if len(spec.class_keywords) != 2:
            raise ConfigError("class_keywords must list exactly two classes")
        k0, k1 = (list(ks) for ks in spec.class_keywords)
        if set(k0) & set(k1):
            raise ConfigError("class keyword lists overlap")
        keywords = [k0, k1]
        for ks in keywords:
            taken.update(ks)
            shapes.update("".join(sorted(w)) for w in ks)
    else:
        # keywords are kept long so single character edits stay recoverable
        keywords = [
            _make_words(rng, spec.keywords_per_class, 7, 9, taken, shapes),
            _make_words(rng, spec.keywords_per_class, 7, 9, taken, shapes),
        ]
    filler_count = spec.vocab_size - len(keywords[0]) - len(keywords[1])
    fillers = _make_words(rng, filler_count, 3, 8, taken, shapes)

    splits: dict[str, list[Document]] = {}
    for split, size in (("train", spec.train_size), ("validation", spec.validation_size), ("test", spec.test_size)):
        split_rng = random.Random(f"{spec.seed}:{split}")
        docs: list[Document] = []
        while len(docs) < size:
            docs.extend(_make_document_pair(split_rng, keywords, fillers, spec))
        splits[split] = docs[:size]

    entries = {w: "ADJ" for ks in keywords for w in ks}
    filler_tags = ("NOUN", "VERB", "ADV", "PRON", "DET")
    for i, w in enumerate(fillers):
        entries[w] = filler_tags[i % len(filler_tags)]
    return SyntheticDataset(
        splits=splits,
        class_keywords=keywords,
        fillers=fillers,
        lexicon=PosLexicon(entries=entries),
    )
