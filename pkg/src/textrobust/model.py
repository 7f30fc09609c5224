"""Reference single-head self-attention text classifier, trained from scratch.

The architecture is the smallest one that still has a genuine attention
matrix to read token importances from:

    X  = embedding rows for the token ids            (n, d)
    A  = softmax(X Wq (X Wk)^T / sqrt(d)) row-wise   (n, n)
    H  = A (X Wv)                                    (n, d)
    h  = mean of H rows                              (d,)
    p  = softmax(Wo h + b)                           (C,)

Training is plain gradient descent on cross-entropy over fixed-order
mini-batches, with manually derived gradients (checked against finite
differences in the test suite).
All arithmetic is float64 and fully deterministic for a fixed seed; a trained
model is immutable and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ArtifactVersionError, ConfigError, EmptyInputError, SchemaError
from .text import Document

UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"

CHECKPOINT_FORMAT = "textrobust-checkpoint"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("emb", "wq", "wk", "wv", "wo", "bo")


@runtime_checkable
class TextClassifier(Protocol):
    """Behavioural contract every attack and defense targets."""

    num_classes: int

    def predict(self, doc: Document) -> np.ndarray: ...

    def attention_importance(self, doc: Document) -> np.ndarray: ...

    def mask_candidates(self, doc: Document, position: int, k: int) -> list[str]: ...

    def doc_embedding(self, doc: Document) -> np.ndarray: ...


@dataclass
class ToyModelConfig:
    embed_dim: int = 32
    num_classes: int = 2
    seed: int = 0
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 8  # fixed-order mini-batches; dataset order is the batch order
    vocab: list[str] | None = None

    def __post_init__(self):
        if self.embed_dim < 4:
            raise ConfigError("embed_dim must be >= 4")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.vocab is not None:
            for special in (UNK_TOKEN, MASK_TOKEN):
                if self.vocab.count(special) != 1:
                    raise ConfigError(f"vocab must contain {special} exactly once")


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class ToyModel:
    """A trained classifier; parameters are float64 numpy arrays."""

    def __init__(self, config: ToyModelConfig, vocab: list[str], params: dict[str, np.ndarray]):
        self.config = config
        self.vocab = list(vocab)
        self.token_to_id = {t: i for i, t in enumerate(self.vocab)}
        self.unk_id = self.token_to_id[UNK_TOKEN]
        self.mask_id = self.token_to_id[MASK_TOKEN]
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.provenance: dict | None = None
        self.training_loss_history: list[float] = []

    @property
    def num_classes(self) -> int:
        return self.params["wo"].shape[0]

    def ids_for(self, texts: list[str]) -> np.ndarray:
        unk = self.unk_id
        table = self.token_to_id
        return np.array([table.get(t, unk) for t in texts], dtype=np.intp)

    def _require_tokens(self, doc: Document) -> list[str]:
        texts = doc.token_texts
        if not texts:
            raise EmptyInputError("document has no tokens")
        return texts

    def _attention(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        x = p["emb"][ids]
        scale = 1.0 / np.sqrt(self.config.embed_dim)
        attn = _softmax_rows((x @ p["wq"]) @ (x @ p["wk"]).T * scale)
        contextual = attn @ (x @ p["wv"])
        return attn, contextual

    def predict_ids(self, ids: np.ndarray) -> np.ndarray:
        _, contextual = self._attention(ids)
        pooled = contextual.mean(axis=0)
        logits = self.params["wo"] @ pooled + self.params["bo"]
        return _softmax_rows(logits)

    def predict(self, doc: Document) -> np.ndarray:
        """Class probability vector; only the token texts matter."""
        return self.predict_ids(self.ids_for(self._require_tokens(doc)))

    def attention_importance(self, doc: Document) -> np.ndarray:
        """Attention received per token: column sums of the attention matrix."""
        ids = self.ids_for(self._require_tokens(doc))
        attn, _ = self._attention(ids)
        return attn.sum(axis=0)

    def doc_embedding(self, doc: Document) -> np.ndarray:
        """Mean of the post-attention contextual token vectors."""
        ids = self.ids_for(self._require_tokens(doc))
        _, contextual = self._attention(ids)
        return contextual.mean(axis=0)

    def mask_candidates(self, doc: Document, position: int, k: int) -> list[str]:
        """Top-k vocabulary tokens for a masked position.

        The position's embedding is replaced by the MASK embedding, the
        encoder is run, and the whole vocabulary (minus UNK, MASK, and the
        original token) is ranked by cosine similarity between the contextual
        vector at the position and each token's contextual-space embedding.
        Ties break toward the lower vocabulary index.
        """
        return self.mask_candidates_texts(self._require_tokens(doc), position, k)

    def vocab_context_table(self) -> np.ndarray:
        """Each vocabulary token's representation in the contextual (value) space.

        Contextual vectors are attention mixtures of value-projected
        embeddings, so candidate ranking compares against ``emb @ wv`` rows;
        ranking against the raw embedding table would compare across spaces.
        """
        return self.params["emb"] @ self.params["wv"]

    def mask_candidates_texts(self, texts: list[str], position: int, k: int) -> list[str]:
        """``mask_candidates`` over a bare token-text list.

        Lets callers score virtual positions (e.g. a MASK inserted between
        two tokens) without building a document around them.
        """
        if not texts:
            raise EmptyInputError("token list is empty")
        if not 0 <= position < len(texts):
            raise ConfigError(f"mask position {position} out of range")
        if k < 1:
            raise ConfigError("k must be >= 1")
        ids = self.ids_for(texts)
        original_id = ids[position]
        ids = ids.copy()
        ids[position] = self.mask_id
        _, contextual = self._attention(ids)
        query = contextual[position]
        table = self.vocab_context_table()
        norms = np.linalg.norm(table, axis=1) * max(np.linalg.norm(query), 1e-12)
        sims = (table @ query) / np.maximum(norms, 1e-12)
        excluded = {self.unk_id, self.mask_id}
        if texts[position] in self.token_to_id:
            excluded.add(int(original_id))
        order = np.argsort(-sims, kind="stable")
        out = []
        for idx in order:
            if int(idx) in excluded:
                continue
            out.append(self.vocab[int(idx)])
            if len(out) == k:
                break
        return out

    def accuracy(self, documents: list[Document]) -> float:
        correct = sum(int(np.argmax(self.predict(d)) == d.label) for d in documents)
        return correct / len(documents)


def _init_params(config: ToyModelConfig, vocab_size: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    return {
        "emb": rng.normal(0.0, 0.3, size=(vocab_size, d)),
        "wq": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        "wk": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        "wv": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        "wo": rng.normal(0.0, 0.1, size=(config.num_classes, d)),
        "bo": np.zeros(config.num_classes),
    }


def loss_and_gradients(
    params: dict[str, np.ndarray], batches: list[tuple[np.ndarray, int]], embed_dim: int
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over (ids, label) pairs plus analytic gradients."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    scale = 1.0 / np.sqrt(embed_dim)
    total = 0.0
    inv = 1.0 / len(batches)
    emb, wq, wk, wv, wo = params["emb"], params["wq"], params["wk"], params["wv"], params["wo"]
    for ids, label in batches:
        n = len(ids)
        x = emb[ids]
        qm, km, vm = x @ wq, x @ wk, x @ wv
        attn = _softmax_rows(qm @ km.T * scale)
        contextual = attn @ vm
        pooled = contextual.mean(axis=0)
        logits = wo @ pooled + params["bo"]
        probs = _softmax_rows(logits)
        total += -np.log(max(probs[label], 1e-300)) * inv

        dlogits = probs.copy()
        dlogits[label] -= 1.0
        dlogits *= inv
        grads["wo"] += np.outer(dlogits, pooled)
        grads["bo"] += dlogits
        dpooled = wo.T @ dlogits
        dcontextual = np.tile(dpooled / n, (n, 1))
        dattn = dcontextual @ vm.T
        dvm = attn.T @ dcontextual
        # softmax backward, row-wise
        dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
        dscores *= scale
        dqm = dscores @ km
        dkm = dscores.T @ qm
        grads["wq"] += x.T @ dqm
        grads["wk"] += x.T @ dkm
        grads["wv"] += x.T @ dvm
        dx = dqm @ wq.T + dkm @ wk.T + dvm @ wv.T
        np.add.at(grads["emb"], ids, dx)
    return total, grads


def fit(model: ToyModel, documents: list[Document], epochs: int, learning_rate: float) -> list[float]:
    """Run fixed-order mini-batch gradient descent in place.

    Returns the per-epoch mean losses. Batch boundaries follow the dataset
    order, so training is bit-for-bit reproducible.
    """
    examples = [(model.ids_for(d.token_texts), d.label) for d in documents]
    batch_size = model.config.batch_size
    losses = []
    for _ in range(epochs):
        epoch_loss = 0.0
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            loss, grads = loss_and_gradients(model.params, chunk, model.config.embed_dim)
            epoch_loss += loss * len(chunk)
            for name in PARAM_NAMES:
                model.params[name] -= learning_rate * grads[name]
        losses.append(epoch_loss / len(examples))
    model.training_loss_history.extend(losses)
    return losses


def build_vocab(documents: list[Document]) -> list[str]:
    seen = set()
    for doc in documents:
        seen.update(doc.token_texts)
    return [UNK_TOKEN, MASK_TOKEN] + sorted(seen)


def train_toy_classifier(documents: list[Document], config: ToyModelConfig) -> ToyModel:
    """Train from scratch on labelled documents; deterministic for a fixed seed."""
    if not documents:
        raise ConfigError("training set is empty")
    for doc in documents:
        if doc.label is None or not 0 <= doc.label < config.num_classes:
            raise ConfigError(f"label {doc.label!r} out of range for {config.num_classes} classes")
        if not doc.tokens:
            raise ConfigError("training set contains an empty document")
    vocab = config.vocab if config.vocab is not None else build_vocab(documents)
    model = ToyModel(config, vocab, _init_params(config, len(vocab)))
    fit(model, documents, config.epochs, config.learning_rate)
    return model


def model_fingerprint(model: ToyModel) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(json.dumps(_config_payload(model.config), sort_keys=True).encode())
    h.update("\x00".join(model.vocab).encode())
    for name in PARAM_NAMES:
        h.update(model.params[name].tobytes())
    return h.hexdigest()[:16]


def _config_payload(config: ToyModelConfig) -> dict:
    return {
        "embed_dim": config.embed_dim,
        "num_classes": config.num_classes,
        "seed": config.seed,
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
    }


def save_checkpoint(model: ToyModel, path: str | Path, config_hash: str | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": _config_payload(model.config),
        "vocab": model.vocab,
        "params": {k: v.tolist() for k, v in model.params.items()},
    }
    if config_hash is not None:
        payload["config_hash"] = config_hash
    if model.provenance is not None:
        payload["provenance"] = model.provenance
    from .config import atomic_write_json

    atomic_write_json(path, payload)


def load_checkpoint(path: str | Path) -> ToyModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ArtifactVersionError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    for key in ("config", "vocab", "params"):
        if key not in payload:
            raise SchemaError(f"{path}: missing checkpoint field {key!r}")
    config = ToyModelConfig(**payload["config"])
    params = {}
    for name in PARAM_NAMES:
        if name not in payload["params"]:
            raise SchemaError(f"{path}: missing parameter tensor {name!r}")
        params[name] = np.array(payload["params"][name], dtype=np.float64)
    model = ToyModel(config, payload["vocab"], params)
    model.provenance = payload.get("provenance")
    return model
