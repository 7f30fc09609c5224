"""Abstain-based retraining: learn to recognize adversarial inputs as a class.

The defense extends the undefended classifier with one extra output class
(ABSTAIN), generates adversarial examples against the undefended model,
labels them ABSTAIN, mixes them with the clean training data, and retrains.
An attack on the defended model only counts as a success when the final
prediction is neither the original class nor ABSTAIN: abstaining is a win
for the defense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, AttackResult
from .errors import ConfigError, NoAdversarialExamplesError
from .model import ToyModel, ToyModelConfig, fit, model_fingerprint
from .text import Document


@dataclass
class AbstainConfig:
    mix_ratio: float = 1.0  # adversarial : clean cap
    epochs: int = 30
    learning_rate: float = 0.05
    cold_start: bool = False  # default warm-starts from the undefended weights
    seed: int = 0

    def __post_init__(self):
        if self.mix_ratio <= 0:
            raise ConfigError("mix_ratio must be positive")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs must be >= 1 and learning_rate positive")


def abstain_label_for(model: ToyModel) -> int:
    return model.num_classes


def build_abstain_dataset(
    model: ToyModel,
    train_set: list[Document],
    attack_fn,
    attack_config: AttackConfig,
    config: AbstainConfig | None = None,
) -> tuple[list[Document], list[AttackResult]]:
    """Attack the correctly-classified training documents and relabel the hits.

    Returns the mixed dataset (all clean documents followed by the successful
    perturbations labelled ABSTAIN) and the underlying attack results.
    """
    if not train_set:
        raise ConfigError("training set is empty")
    config = config or AbstainConfig()
    abstain = abstain_label_for(model)
    results: list[AttackResult] = []
    adversarial: list[Document] = []
    for doc in train_set:
        if int(np.argmax(model.predict(doc))) != doc.label:
            continue
        result = attack_fn(model, doc, attack_config)
        results.append(result)
        if result.success:
            perturbed = result.perturbed
            adversarial.append(Document(raw=perturbed.raw, tokens=perturbed.tokens, label=abstain))
    cap = int(config.mix_ratio * len(train_set))
    adversarial = adversarial[:cap]
    if not adversarial:
        raise NoAdversarialExamplesError(
            "the generation attack produced no successful adversarial examples; "
            "increase the query budget or use a stronger attack"
        )
    return list(train_set) + adversarial, results


def abstain_train(undefended: ToyModel, mixed_set: list[Document], config: AbstainConfig | None = None) -> ToyModel:
    """Train the extended classifier on the clean + ABSTAIN mixture.

    The defended model starts from the undefended parameters with a
    zero-initialized ABSTAIN output row (so before training its ABSTAIN logit
    is constant for every input); ``cold_start`` re-initializes instead.
    """
    config = config or AbstainConfig()
    abstain = abstain_label_for(undefended)
    labels = [doc.label for doc in mixed_set]
    if abstain not in labels:
        raise ConfigError("mixed set contains no ABSTAIN example")
    for cls in range(undefended.num_classes):
        if cls not in labels:
            raise ConfigError(f"mixed set contains no clean example of class {cls}")

    base_cfg = undefended.config
    defended_cfg = ToyModelConfig(
        embed_dim=base_cfg.embed_dim,
        num_classes=undefended.num_classes + 1,
        seed=config.seed,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
    )
    if config.cold_start:
        from .model import _init_params

        params = _init_params(defended_cfg, len(undefended.vocab))
    else:
        params = {k: v.copy() for k, v in undefended.params.items()}
        d = base_cfg.embed_dim
        params["wo"] = np.vstack([params["wo"], np.zeros((1, d))])
        params["bo"] = np.append(params["bo"], 0.0)
    defended = ToyModel(defended_cfg, undefended.vocab, params)
    defended.provenance = {
        "source_model": model_fingerprint(undefended),
        "abstain_label": abstain,
        "cold_start": config.cold_start,
    }
    fit(defended, mixed_set, config.epochs, config.learning_rate)
    return defended


def defended_attack_success(defended: ToyModel, results: list[AttackResult], abstain_label: int) -> float:
    """Attack success rate under abstain semantics.

    A result counts as a success only if the defended model's prediction on
    the perturbed document is neither its prediction on the original nor
    ABSTAIN. Works both for results produced against the defended model
    itself and for replayed perturbations from an undefended campaign.
    """
    if not results:
        raise ConfigError("no attack results to score")
    wins = 0
    for result in results:
        original_class = int(np.argmax(defended.predict(result.original)))
        final_class = int(np.argmax(defended.predict(result.perturbed)))
        if final_class != original_class and final_class != abstain_label:
            wins += 1
    return wins / len(results)


def abstain_coverage(defended: ToyModel, adversarial_docs: list[Document], abstain_label: int) -> float:
    """Fraction of adversarial documents the defended model flags as ABSTAIN."""
    if not adversarial_docs:
        raise ConfigError("no adversarial documents to score")
    hits = sum(int(np.argmax(defended.predict(d))) == abstain_label for d in adversarial_docs)
    return hits / len(adversarial_docs)


def clean_accuracy(model: ToyModel, documents: list[Document]) -> float:
    """Accuracy on clean documents; predicting ABSTAIN on clean input is an error."""
    if not documents:
        raise ConfigError("no documents to score")
    correct = sum(int(np.argmax(model.predict(d))) == d.label for d in documents)
    return correct / len(documents)
