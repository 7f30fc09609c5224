"""Explicit character-level defense: nearest-vocabulary token restoration.

Each token is embedded by hashed character n-gram counts (optionally passed
through a trained linear refinement) and compared against an index of the
training vocabulary. When the best cosine score falls inside the acceptance
band [accept_low, accept_high) the token is replaced by that nearest
vocabulary entry; identical strings score exactly 1.0 and are therefore
never touched, which also makes restoration idempotent.

The refinement matrix is fitted with a Siamese objective: the cosine between
the embeddings of a word pair should match the pair's normalized edit
similarity. A small pull toward the identity matrix keeps the raw n-gram
geometry as a fallback, and the best matrix seen during descent is kept.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import atomic_write_json
from .errors import ArtifactVersionError, ConfigError, SchemaError
from .text import Document, MisspellingPair, splice_texts

INDEX_FORMAT = "textrobust-vocab-index"
INDEX_VERSION = 1

DEFAULT_EMBED_DIM = 128
DEFAULT_NGRAM_ORDERS = (1, 2, 3)
BOUNDARY = ("^", "$")


@dataclass
class DefenseThresholds:
    accept_low: float = 0.7
    accept_high: float = 1.0  # exclusive

    def __post_init__(self):
        if not 0.0 < self.accept_low < self.accept_high <= 1.0:
            raise ConfigError("thresholds must satisfy 0 < accept_low < accept_high <= 1")


def _subspace_bounds(dim: int, orders: tuple[int, ...]) -> list[tuple[int, int]]:
    # one contiguous block of hash bins per n-gram order
    base = dim // len(orders)
    bounds = []
    start = 0
    for i in range(len(orders)):
        width = base if i < len(orders) - 1 else dim - start
        bounds.append((start, width))
        start += width
    return bounds


class CharEmbedder:
    """Deterministic token -> unit vector encoder over character n-grams."""

    def __init__(
        self,
        dim: int = DEFAULT_EMBED_DIM,
        hash_seed: int = 0,
        ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS,
        refinement: np.ndarray | None = None,
    ):
        if dim < len(ngram_orders):
            raise ConfigError("embedding dim smaller than the number of n-gram orders")
        self.dim = dim
        self.hash_seed = hash_seed
        self.ngram_orders = tuple(ngram_orders)
        self._bounds = _subspace_bounds(dim, self.ngram_orders)
        self.refinement = None if refinement is None else np.asarray(refinement, dtype=np.float64)

    def base_features(self, token: str) -> np.ndarray:
        """Unit-normalized hashed n-gram counts. Orders >= 2 see boundary padding."""
        if not token:
            raise ConfigError("cannot embed an empty token")
        v = np.zeros(self.dim)
        for order, (start, width) in zip(self.ngram_orders, self._bounds):
            text = token if order == 1 else BOUNDARY[0] + token + BOUNDARY[1]
            for i in range(len(text) - order + 1):
                gram = text[i : i + order]
                bucket = zlib.crc32(f"{self.hash_seed}:{order}:{gram}".encode()) % width
                v[start + bucket] += 1.0
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ConfigError("cannot embed an empty token")
        return v / norm

    def embed(self, token: str) -> np.ndarray:
        v = self.base_features(token)
        if self.refinement is not None:
            v = self.refinement @ v
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                return self.base_features(token)  # degenerate refinement; fall back
            v = v / norm
        return v

    def tag(self) -> str:
        """Fingerprint used to pair an index with the embedder that built it."""
        import hashlib

        h = hashlib.sha256(f"{self.dim}:{self.hash_seed}:{self.ngram_orders}".encode())
        if self.refinement is not None:
            h.update(self.refinement.tobytes())
        return h.hexdigest()[:16]


@dataclass
class EmbedderTrainConfig:
    dim: int = DEFAULT_EMBED_DIM
    hash_seed: int = 0
    ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS
    epochs: int = 150
    learning_rate: float = 0.5
    identity_weight: float = 0.01
    seed: int = 0


def siamese_loss_and_grad(
    w: np.ndarray, feats_a: np.ndarray, feats_b: np.ndarray, labels: np.ndarray, identity_weight: float
) -> tuple[float, np.ndarray]:
    """Mean squared error between pairwise cosines and labels, plus gradient."""
    a = feats_a @ w.T
    b = feats_b @ w.T
    na = np.maximum(np.linalg.norm(a, axis=1), 1e-12)
    nb = np.maximum(np.linalg.norm(b, axis=1), 1e-12)
    ah = a / na[:, None]
    bh = b / nb[:, None]
    cos = (ah * bh).sum(axis=1)
    resid = cos - labels
    n = len(labels)
    eye = np.eye(w.shape[0])
    loss = float((resid**2).mean() + identity_weight * ((w - eye) ** 2).sum())
    dcos = 2.0 * resid / n
    ga = (bh - cos[:, None] * ah) / na[:, None] * dcos[:, None]
    gb = (ah - cos[:, None] * bh) / nb[:, None] * dcos[:, None]
    grad = ga.T @ feats_a + gb.T @ feats_b + 2.0 * identity_weight * (w - eye)
    return loss, grad


def train_char_embedder(pairs: list[MisspellingPair], config: EmbedderTrainConfig | None = None) -> CharEmbedder:
    """Fit the refinement matrix so pair cosines track their similarity labels.

    Deterministic for a fixed config; the returned embedder carries the best
    matrix observed during descent, so its training loss never exceeds the
    identity refinement's.
    """
    if not pairs:
        raise ConfigError("cannot train the embedder on an empty pair list")
    config = config or EmbedderTrainConfig()
    base = CharEmbedder(config.dim, config.hash_seed, config.ngram_orders)
    feats_a = np.stack([base.base_features(p.correct) for p in pairs])
    feats_b = np.stack([base.base_features(p.corrupted) for p in pairs])
    labels = np.array([p.similarity for p in pairs], dtype=np.float64)

    w = np.eye(config.dim)
    best_w = w.copy()
    best_loss, _ = siamese_loss_and_grad(w, feats_a, feats_b, labels, config.identity_weight)
    for _ in range(config.epochs):
        loss, grad = siamese_loss_and_grad(w, feats_a, feats_b, labels, config.identity_weight)
        if loss < best_loss:
            best_loss = loss
            best_w = w.copy()
        w = w - config.learning_rate * grad
    loss, _ = siamese_loss_and_grad(w, feats_a, feats_b, labels, config.identity_weight)
    if loss < best_loss:
        best_w = w
    return CharEmbedder(config.dim, config.hash_seed, config.ngram_orders, refinement=best_w)


def embedder_training_loss(embedder: CharEmbedder, pairs: list[MisspellingPair]) -> float:
    """Mean squared cosine-vs-label error of an embedder on a pair list."""
    cos = np.array([float(embedder.embed(p.correct) @ embedder.embed(p.corrupted)) for p in pairs])
    labels = np.array([p.similarity for p in pairs])
    return float(((cos - labels) ** 2).mean())


def build_training_pairs(vocab, n: int, seed: int) -> list[MisspellingPair]:
    """Misspelled-word pairs plus a share of cross-word pairs, all labelled by
    normalized edit similarity.

    Pure misspelling pairs only carry high similarity targets; without the
    dissimilar cross-word pairs gradient descent can collapse every embedding
    onto one direction and score 1.0 everywhere.
    """
    import random

    from .text import generate_misspelling_pairs, pair_similarity

    words = sorted(set(vocab))
    if not words:
        raise ConfigError("empty vocabulary")
    n_cross = n // 4 if len(words) >= 2 else 0
    pairs = generate_misspelling_pairs(words, n - n_cross, seed)
    rng = random.Random(f"{seed}:cross")
    for _ in range(n_cross):
        a, b = rng.sample(words, 2)
        pairs.append(MisspellingPair(a, b, pair_similarity(a, b)))
    return pairs


@dataclass
class VocabularyEmbeddingIndex:
    tokens: list[str]
    matrix: np.ndarray  # (m, dim), unit rows, row i = embed(tokens[i])
    embedder_tag: str

    def __post_init__(self):
        if len(self.tokens) != self.matrix.shape[0]:
            raise ConfigError("index token/matrix size mismatch")
        if not self.tokens:
            raise ConfigError("index is empty")


def build_index(vocab, embedder: CharEmbedder) -> VocabularyEmbeddingIndex:
    """One embedding row per vocabulary token, in lexicographic token order."""
    tokens = sorted(set(vocab))
    if not tokens:
        raise ConfigError("cannot build an index over an empty vocabulary")
    matrix = np.stack([embedder.embed(t) for t in tokens])
    return VocabularyEmbeddingIndex(tokens=tokens, matrix=matrix, embedder_tag=embedder.tag())


@dataclass
class RestoreDecision:
    token: str
    score: float
    action: str  # "restored" or "kept"
    replacement: str | None = None


def cosine_scores(index: VocabularyEmbeddingIndex, vector: np.ndarray) -> np.ndarray:
    """Cosine of one embedded token against every index row.

    Rows that are bitwise identical to the query score exactly 1.0: the
    cosine of a vector with itself is 1 by definition, and float rounding
    must not let an in-vocabulary token slip below the strict upper bound.
    """
    scores = index.matrix @ vector
    exact = (index.matrix == vector).all(axis=1)
    if exact.any():
        scores[exact] = 1.0
    return scores


def restore(
    tokens: list[str],
    index: VocabularyEmbeddingIndex,
    embedder: CharEmbedder,
    thresholds: DefenseThresholds | None = None,
) -> tuple[list[str], list[RestoreDecision]]:
    """Replace each token by its nearest vocabulary entry when the best cosine
    lies in [accept_low, accept_high); otherwise keep it. Token count is
    preserved and every decision is traced.
    """
    thresholds = thresholds or DefenseThresholds()
    if index.embedder_tag != embedder.tag():
        raise ConfigError("index was built with a different embedder")
    restored: list[str] = []
    trace: list[RestoreDecision] = []
    for token in tokens:
        scores = cosine_scores(index, embedder.embed(token))
        best = int(np.argmax(scores))  # ties resolve to the lowest vocab index
        score = float(scores[best])
        if thresholds.accept_low <= score < thresholds.accept_high:
            restored.append(index.tokens[best])
            trace.append(RestoreDecision(token, score, "restored", index.tokens[best]))
        else:
            restored.append(token)
            trace.append(RestoreDecision(token, score, "kept"))
    return restored, trace


def defend_document(
    doc: Document,
    index: VocabularyEmbeddingIndex,
    embedder: CharEmbedder,
    thresholds: DefenseThresholds | None = None,
) -> Document:
    """Apply ``restore`` to a document, splicing restored tokens at their spans.

    A document whose tokens are all kept comes back byte-identical.
    """
    if not doc.tokens:
        return Document(raw=doc.raw, tokens=[], label=doc.label)
    restored, _ = restore(doc.token_texts, index, embedder, thresholds)
    return splice_texts(doc, restored)


@dataclass
class ExplicitDefense:
    """Bundle of everything needed to run the restoration defense."""

    index: VocabularyEmbeddingIndex
    embedder: CharEmbedder
    thresholds: DefenseThresholds = field(default_factory=DefenseThresholds)

    def defend(self, doc: Document) -> Document:
        return defend_document(doc, self.index, self.embedder, self.thresholds)


def save_index(defense: ExplicitDefense, path: str | Path, config_hash: str | None = None) -> None:
    emb = defense.embedder
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "dim": emb.dim,
        "hash_seed": emb.hash_seed,
        "ngram_orders": list(emb.ngram_orders),
        "refinement": None if emb.refinement is None else emb.refinement.tolist(),
        "accept_low": defense.thresholds.accept_low,
        "accept_high": defense.thresholds.accept_high,
        "tokens": defense.index.tokens,
        "matrix": defense.index.matrix.tolist(),
    }
    if config_hash is not None:
        payload["config_hash"] = config_hash
    atomic_write_json(path, payload)


def load_index(path: str | Path) -> ExplicitDefense:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("format") != INDEX_FORMAT:
        raise SchemaError(f"{path}: not a vocabulary index")
    if payload.get("version") != INDEX_VERSION:
        raise ArtifactVersionError(f"{path}: unsupported index version {payload.get('version')!r}")
    refinement = payload["refinement"]
    embedder = CharEmbedder(
        dim=payload["dim"],
        hash_seed=payload["hash_seed"],
        ngram_orders=tuple(payload["ngram_orders"]),
        refinement=None if refinement is None else np.array(refinement, dtype=np.float64),
    )
    index = VocabularyEmbeddingIndex(
        tokens=payload["tokens"],
        matrix=np.array(payload["matrix"], dtype=np.float64),
        embedder_tag=embedder.tag(),
    )
    thresholds = DefenseThresholds(payload["accept_low"], payload["accept_high"])
    return ExplicitDefense(index=index, embedder=embedder, thresholds=thresholds)
