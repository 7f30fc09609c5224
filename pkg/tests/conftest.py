import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from textrobust.abstain import AbstainConfig, abstain_train, build_abstain_dataset
from textrobust.attacks import AttackConfig, char_attack
from textrobust.data import DatasetSpec, SyntheticDataset, generate_dataset
from textrobust.evaluation import CampaignConfig, run_campaign
from textrobust.model import ToyModel, ToyModelConfig, train_toy_classifier
from textrobust.restore import (
    DefenseThresholds,
    EmbedderTrainConfig,
    ExplicitDefense,
    build_index,
    build_training_pairs,
    train_char_embedder,
)

DESK_SEED = 42
MODEL_SEED = 7


class CountingModel:
    """Delegating wrapper that counts predict calls; used to audit query accounting."""

    def __init__(self, model):
        self._model = model
        self.calls = 0

    def predict(self, doc):
        self.calls += 1
        return self._model.predict(doc)

    def __getattr__(self, name):
        return getattr(self._model, name)


@dataclass
class DeskBundle:
    dataset: SyntheticDataset
    model: ToyModel
    train_seconds: float
    campaigns: dict = field(default_factory=dict)
    campaign_seconds: dict = field(default_factory=dict)


@pytest.fixture(scope="session")
def desk(request) -> DeskBundle:
    dataset = generate_dataset(DatasetSpec(seed=DESK_SEED))
    start = time.monotonic()
    model = train_toy_classifier(dataset.splits["train"], ToyModelConfig(seed=MODEL_SEED))
    bundle = DeskBundle(dataset=dataset, model=model, train_seconds=time.monotonic() - start)
    return bundle


def _campaign(desk: DeskBundle, attack: str):
    if attack not in desk.campaigns:
        config = CampaignConfig(attack=attack, attack_config=AttackConfig())
        start = time.monotonic()
        aggregates, records = run_campaign(
            desk.model, desk.dataset.splits["test"], config, lexicon=desk.dataset.lexicon
        )
        desk.campaign_seconds[attack] = time.monotonic() - start
        desk.campaigns[attack] = (aggregates, records)
    return desk.campaigns[attack]


@pytest.fixture(scope="session")
def char_campaign(desk):
    return _campaign(desk, "char")


@pytest.fixture(scope="session")
def baseline_campaign(desk):
    return _campaign(desk, "baseline_word")


@pytest.fixture(scope="session")
def constrained_campaign(desk):
    return _campaign(desk, "constrained_word")


@pytest.fixture(scope="session")
def explicit_defense(desk) -> ExplicitDefense:
    vocab = [t for t in desk.model.vocab if not t.startswith("[")]
    pairs = build_training_pairs(vocab, 3000, seed=99)
    embedder = train_char_embedder(pairs, EmbedderTrainConfig(hash_seed=5))
    return ExplicitDefense(index=build_index(vocab, embedder), embedder=embedder, thresholds=DefenseThresholds())


@dataclass
class AbstainBundle:
    defended: ToyModel
    abstain_label: int
    mixed: list
    generation_results: list


@pytest.fixture(scope="session")
def abstain_bundle(desk) -> AbstainBundle:
    config = AbstainConfig(seed=11)
    mixed, results = build_abstain_dataset(
        desk.model, desk.dataset.splits["train"], char_attack, AttackConfig(), config
    )
    defended = abstain_train(desk.model, mixed, config)
    return AbstainBundle(
        defended=defended,
        abstain_label=defended.num_classes - 1,
        mixed=mixed,
        generation_results=results,
    )


@pytest.fixture(scope="session")
def eligible_test_docs(desk):
    return [
        d
        for d in desk.dataset.splits["test"]
        if int(np.argmax(desk.model.predict(d))) == d.label
    ]
