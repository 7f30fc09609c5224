"""White-box attacks: attention-ranked word and character perturbations.

All three attacks share the same outer loop: rank tokens by the attention
they receive, then greedily commit, position by position, the single edit
that lowers the model's confidence in its original predicted class the most.
An attack succeeds when the committed document's argmax class flips.

Query accounting: every ``predict`` call made by an attack counts against
its budget, starting with the prediction of the unperturbed document, so a
budget of 1 can never succeed. Candidate generation, attention scores, and
document embeddings are white-box reads and are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyInputError, MisclassifiedInputError
from .model import MASK_TOKEN
from .pos import PosLexicon, pos_tag
from .text import (
    CHAR_INVENTORY,
    CharEditOp,
    Document,
    apply_char_edit,
    document_from_tokens,
    insert_token,
    is_punctuation_token,
    jaccard,
    levenshtein,
    replace_token,
    splice_texts,
    tokenize,
)

WORD_EDIT_KINDS = ("replace", "insert_left", "insert_right")


@dataclass
class AttackConfig:
    max_tokens_attacked: int = 5
    candidates_per_position: int = 10
    query_budget: int = 2000
    cosine_threshold: float = 0.9363  # constrained word attack only
    max_char_edits_per_token: int = 2
    seed: int = 0  # reserved; the greedy searches are deterministic

    def __post_init__(self):
        for name in ("max_tokens_attacked", "candidates_per_position", "query_budget", "max_char_edits_per_token"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.cosine_threshold <= 1.0:
            raise ConfigError("cosine_threshold must be in (0, 1]")


@dataclass
class WordEditOp:
    kind: str
    position: int  # token index in the document the edit was applied to
    new_token: str

    def __post_init__(self):
        if self.kind not in WORD_EDIT_KINDS:
            raise ConfigError(f"unknown word edit kind {self.kind!r}")
        if not self.new_token:
            raise ConfigError("new_token must be non-empty")


@dataclass
class AttackResult:
    original: Document
    perturbed: Document
    success: bool
    queries: int
    edits: list = field(default_factory=list)
    original_confidence: float = 0.0
    final_confidence: float = 0.0
    confidence_delta: float = 0.0
    levenshtein_raw: int = 0
    jaccard_tokens: float = 1.0


def _finish(original, perturbed, success, queries, edits, orig_conf, final_conf) -> AttackResult:
    return AttackResult(
        original=original,
        perturbed=perturbed,
        success=success,
        queries=queries,
        edits=edits,
        original_confidence=float(orig_conf),
        final_confidence=float(final_conf),
        confidence_delta=float(orig_conf - final_conf),
        levenshtein_raw=levenshtein(original.raw, perturbed.raw),
        jaccard_tokens=jaccard(original.token_texts, perturbed.token_texts),
    )


class _BudgetExhausted(Exception):
    pass


class _QuerySession:
    """Counts predict calls and stops the search at the budget."""

    def __init__(self, model, budget: int):
        self.model = model
        self.budget = budget
        self.queries = 0

    def predict(self, doc: Document) -> np.ndarray:
        if self.queries >= self.budget:
            raise _BudgetExhausted
        self.queries += 1
        return self.model.predict(doc)


def rank_tokens(model, doc: Document) -> list[int]:
    """Token indices by descending attention importance.

    Ties break toward the lower index; punctuation-only tokens go last.
    """
    if not doc.tokens:
        raise EmptyInputError("cannot rank an empty document")
    scores = model.attention_importance(doc)
    punct = [is_punctuation_token(t) for t in doc.token_texts]
    return sorted(range(len(scores)), key=lambda i: (punct[i], -scores[i], i))


def _start(model, doc: Document, session: _QuerySession):
    if not doc.tokens:
        raise EmptyInputError("cannot attack an empty document")
    probs = session.predict(doc)
    target = int(np.argmax(probs))
    if doc.label is not None and target != doc.label:
        raise MisclassifiedInputError(
            f"model predicts class {target}, gold label is {doc.label}; nothing to attack"
        )
    return target, probs


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom < 1e-300:
        return 0.0
    return float(a @ b / denom)


def _word_attack(model, doc, config, lexicon=None, constrained=False) -> AttackResult:
    session = _QuerySession(model, config.query_budget)
    target, probs = _start(model, doc, session)
    orig_conf = float(probs[target])
    order = rank_tokens(model, doc)
    original_embedding = model.doc_embedding(doc) if constrained else None

    current = doc
    current_conf = orig_conf
    # original token index -> index in the evolving document
    position_of = list(range(len(doc.tokens)))
    edits: list[WordEditOp] = []
    success = False
    k = config.candidates_per_position
    mask = MASK_TOKEN

    try:
        for original_pos in order[: config.max_tokens_attacked]:
            pos = position_of[original_pos]
            texts = current.token_texts
            options: list[tuple[WordEditOp, list[str]]] = []
            for cand in model.mask_candidates(current, pos, k):
                options.append((WordEditOp("replace", pos, cand), texts[:pos] + [cand] + texts[pos + 1 :]))
            # insertion candidates come from masking a virtual position
            left = model.mask_candidates_texts(texts[:pos] + [mask] + texts[pos:], pos, k)
            for cand in left:
                options.append((WordEditOp("insert_left", pos, cand), texts[:pos] + [cand] + texts[pos:]))
            right = model.mask_candidates_texts(texts[: pos + 1] + [mask] + texts[pos + 1 :], pos + 1, k)
            for cand in right:
                options.append((WordEditOp("insert_right", pos, cand), texts[: pos + 1] + [cand] + texts[pos + 1 :]))

            best = None
            for op, new_texts in options:
                if constrained:
                    if op.kind == "replace" and pos_tag(lexicon, op.new_token) != pos_tag(lexicon, texts[pos]):
                        continue
                probe = document_from_tokens(new_texts)
                if constrained and _cosine(original_embedding, model.doc_embedding(probe)) < config.cosine_threshold:
                    continue
                p = session.predict(probe)
                conf = float(p[target])
                if conf < current_conf and (best is None or conf < best[0]):
                    best = (conf, op, p)

            if best is None:
                continue
            conf, op, p = best
            if op.kind == "replace":
                current = replace_token(current, op.position, op.new_token)
            else:
                side = "left" if op.kind == "insert_left" else "right"
                current = insert_token(current, op.position, side, op.new_token)
                shift_at = op.position if side == "left" else op.position + 1
                position_of = [i + 1 if i >= shift_at else i for i in position_of]
            current_conf = conf
            edits.append(op)
            if int(np.argmax(p)) != target:
                success = True
                break
    except _BudgetExhausted:
        return _finish(doc, current, False, config.query_budget, edits, orig_conf, current_conf)

    return _finish(doc, current, success, session.queries, edits, orig_conf, current_conf)


def baseline_word_attack(model, doc: Document, config: AttackConfig) -> AttackResult:
    """Replace or insert masked-LM candidates at the highest-attention positions."""
    return _word_attack(model, doc, config)


def constrained_word_attack(model, doc: Document, config: AttackConfig, lexicon: PosLexicon) -> AttackResult:
    """Word attack with document-cosine and POS admissibility constraints.

    A candidate edit is admissible only if the perturbed document's embedding
    stays within ``cosine_threshold`` of the original's, and, for
    replacements, the candidate's POS tag matches the target token's.
    Insertions have no aligned target token and skip the POS check.
    """
    return _word_attack(model, doc, config, lexicon=lexicon, constrained=True)


def enumerate_char_edits(text: str) -> list[CharEditOp]:
    """All admissible single-character edits for a token, in commitment order.

    Order: swap < insert < delete < substitute, then position, then char.
    No-op edits (swapping equal characters, substituting a character by
    itself) are skipped, delete is skipped on length-1 tokens, and any edit
    whose result would not survive re-tokenization as a single token is
    skipped so documents stay well-formed.
    """
    ops: list[CharEditOp] = []
    n = len(text)
    for pos in range(n - 1):
        if text[pos] != text[pos + 1]:
            ops.append(CharEditOp("swap", pos))
    for pos in range(n + 1):
        for ch in CHAR_INVENTORY:
            ops.append(CharEditOp("insert", pos, ch))
    if n >= 2:
        for pos in range(n):
            ops.append(CharEditOp("delete", pos))
    for pos in range(n):
        for ch in CHAR_INVENTORY:
            if ch != text[pos]:
                ops.append(CharEditOp("substitute", pos, ch))
    if text.isalnum():
        return ops  # alnum edits always re-tokenize cleanly
    out = []
    for op in ops:
        edited = apply_char_edit(text, op)
        retok = tokenize(edited)
        if len(retok) == 1 and retok[0].text == edited:
            out.append(op)
    return out


def char_attack(model, doc: Document, config: AttackConfig) -> AttackResult:
    """Greedy character-level perturbation of the highest-attention tokens.

    Each ranked token receives up to ``max_char_edits_per_token`` committed
    edits; at every step all admissible edits are probed and the one with the
    largest confidence drop wins, ties resolved by enumeration order. Tokens
    are never reduced to the empty string and the token count is preserved.
    """
    session = _QuerySession(model, config.query_budget)
    target, probs = _start(model, doc, session)
    orig_conf = float(probs[target])
    order = rank_tokens(model, doc)

    texts = doc.token_texts
    current_conf = orig_conf
    edits: list[tuple[int, CharEditOp]] = []
    success = False

    def perturbed_doc() -> Document:
        return splice_texts(doc, texts)

    ids_for = getattr(model, "ids_for", None)

    try:
        for pos in order[: config.max_tokens_attacked]:
            for _ in range(config.max_char_edits_per_token):
                best = None
                # distinct edits often collapse to the same model input (any
                # out-of-vocabulary form maps to UNK); a white-box attacker
                # queries each distinct input once and reuses the answer
                seen: dict[tuple, np.ndarray] = {}
                if ids_for is not None:
                    seen[tuple(ids_for(texts))] = None  # current state cannot improve on itself
                for op in enumerate_char_edits(texts[pos]):
                    candidate = apply_char_edit(texts[pos], op)
                    new_texts = texts[:pos] + [candidate] + texts[pos + 1 :]
                    key = tuple(ids_for(new_texts)) if ids_for is not None else None
                    if key is not None and key in seen:
                        p = seen[key]
                        if p is None:
                            continue
                    else:
                        p = session.predict(document_from_tokens(new_texts))
                        if key is not None:
                            seen[key] = p
                    conf = float(p[target])
                    if conf < current_conf and (best is None or conf < best[0]):
                        best = (conf, op, candidate, p)
                if best is None:
                    break
                conf, op, candidate, p = best
                texts[pos] = candidate
                current_conf = conf
                edits.append((pos, op))
                if int(np.argmax(p)) != target:
                    success = True
                    break
            if success:
                break
    except _BudgetExhausted:
        return _finish(doc, perturbed_doc(), False, config.query_budget, edits, orig_conf, current_conf)

    return _finish(doc, perturbed_doc(), success, session.queries, edits, orig_conf, current_conf)


ATTACKS = {
    "baseline_word": baseline_word_attack,
    "constrained_word": constrained_word_attack,
    "char": char_attack,
}


def run_attack(name: str, model, doc: Document, config: AttackConfig, lexicon: PosLexicon | None = None) -> AttackResult:
    if name not in ATTACKS:
        raise ConfigError(f"unknown attack {name!r}; expected one of {sorted(ATTACKS)}")
    if name == "constrained_word":
        if lexicon is None:
            raise ConfigError("constrained_word attack requires a POS lexicon")
        return constrained_word_attack(model, doc, config, lexicon)
    return ATTACKS[name](model, doc, config)


# ---------------------------------------------------------------------------
# serialization


def document_to_json(doc: Document) -> dict:
    return {
        "raw": doc.raw,
        "tokens": [{"text": t.text, "start": t.start, "end": t.end} for t in doc.tokens],
        "label": doc.label,
    }


def document_from_json(payload: dict) -> Document:
    from .text import Token

    return Document(
        raw=payload["raw"],
        tokens=[Token(t["text"], t["start"], t["end"]) for t in payload["tokens"]],
        label=payload["label"],
    )


def edit_to_json(edit) -> list:
    if isinstance(edit, WordEditOp):
        return ["word", edit.kind, edit.position, edit.new_token]
    index, op = edit
    return ["char", index, op.kind, op.position, op.char]


def edit_from_json(payload: list):
    if payload[0] == "word":
        return WordEditOp(payload[1], payload[2], payload[3])
    if payload[0] == "char":
        return (payload[1], CharEditOp(payload[2], payload[3], payload[4]))
    raise ConfigError(f"unknown edit tag {payload[0]!r}")


def result_to_json(result: AttackResult) -> dict:
    return {
        "original": document_to_json(result.original),
        "perturbed": document_to_json(result.perturbed),
        "success": result.success,
        "queries": result.queries,
        "edits": [edit_to_json(e) for e in result.edits],
        "original_confidence": result.original_confidence,
        "final_confidence": result.final_confidence,
        "confidence_delta": result.confidence_delta,
        "levenshtein_raw": result.levenshtein_raw,
        "jaccard_tokens": result.jaccard_tokens,
    }


def result_from_json(payload: dict) -> AttackResult:
    return AttackResult(
        original=document_from_json(payload["original"]),
        perturbed=document_from_json(payload["perturbed"]),
        success=payload["success"],
        queries=payload["queries"],
        edits=[edit_from_json(e) for e in payload["edits"]],
        original_confidence=payload["original_confidence"],
        final_confidence=payload["final_confidence"],
        confidence_delta=payload["confidence_delta"],
        levenshtein_raw=payload["levenshtein_raw"],
        jaccard_tokens=payload["jaccard_tokens"],
    )
