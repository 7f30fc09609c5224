"""White-box adversarial attacks and character-level defenses for text classifiers."""

from .abstain import (
    AbstainConfig,
    abstain_coverage,
    abstain_train,
    build_abstain_dataset,
    clean_accuracy,
    defended_attack_success,
)
from .attacks import (
    AttackConfig,
    AttackResult,
    WordEditOp,
    baseline_word_attack,
    char_attack,
    constrained_word_attack,
    rank_tokens,
    run_attack,
)
from .data import DatasetSpec, generate_dataset, read_dataset, write_dataset
from .evaluation import AbstainSemantics, CampaignConfig, aggregate, pearson, run_campaign
from .model import (
    TextClassifier,
    ToyModel,
    ToyModelConfig,
    load_checkpoint,
    save_checkpoint,
    train_toy_classifier,
)
from .pos import PosLexicon, pos_tag
from .restore import (
    CharEmbedder,
    DefenseThresholds,
    ExplicitDefense,
    VocabularyEmbeddingIndex,
    build_index,
    defend_document,
    restore,
    train_char_embedder,
)
from .text import (
    CharEditOp,
    Document,
    MisspellingPair,
    Token,
    apply_char_edit,
    document_from_text,
    generate_misspelling_pairs,
    jaccard,
    levenshtein,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AbstainConfig",
    "AbstainSemantics",
    "AttackConfig",
    "AttackResult",
    "CampaignConfig",
    "CharEditOp",
    "CharEmbedder",
    "DatasetSpec",
    "DefenseThresholds",
    "Document",
    "ExplicitDefense",
    "MisspellingPair",
    "PosLexicon",
    "TextClassifier",
    "Token",
    "ToyModel",
    "ToyModelConfig",
    "VocabularyEmbeddingIndex",
    "WordEditOp",
    "abstain_coverage",
    "abstain_train",
    "aggregate",
    "apply_char_edit",
    "baseline_word_attack",
    "build_abstain_dataset",
    "build_index",
    "char_attack",
    "clean_accuracy",
    "constrained_word_attack",
    "defend_document",
    "defended_attack_success",
    "document_from_text",
    "generate_dataset",
    "generate_misspelling_pairs",
    "jaccard",
    "levenshtein",
    "load_checkpoint",
    "pearson",
    "pos_tag",
    "rank_tokens",
    "read_dataset",
    "restore",
    "run_attack",
    "run_campaign",
    "save_checkpoint",
    "tokenize",
    "train_char_embedder",
    "train_toy_classifier",
    "write_dataset",
]
