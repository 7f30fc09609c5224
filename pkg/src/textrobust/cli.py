"""Command-line front end wiring datasets, models, attacks, and defenses.

Subcommands::

    gen-data  --config C [--seed S] [--out DIR]
    train     --config C [--seed S] [--out DIR]
    attack    --config C --attack NAME [--defense NAME] [--seed S] [--out DIR]
    defend    --config C --defense NAME [--seed S] [--out DIR]
    report    --config C --attack NAME [--defense NAME] [--records F] [--report F]

All paths come from the config file (plus the listed overrides); environment
variables are never consulted. Every command writes the fully resolved
config next to its outputs and exits non-zero if any requested artifact
could not be written and validated.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import abstain as abstain_mod
from .attacks import ATTACKS, AttackConfig, run_attack
from .config import (
    canonical_json,
    derive_seed,
    load_config,
    require_file,
    validate_positive,
    write_resolved_config,
)
from .data import DatasetSpec, generate_dataset, read_dataset, write_dataset
from .errors import (
    ConfigError,
    EmptyInputError,
    EmptyPopulationError,
    MisclassifiedInputError,
    NoAdversarialExamplesError,
    PositionError,
    SchemaError,
    TextRobustError,
    UndefinedCorrelationError,
)
from .evaluation import (
    AbstainSemantics,
    CampaignConfig,
    aggregate,
    read_records,
    read_report,
    run_campaign,
    write_plot_data,
    write_records,
    write_report,
)
from .model import ToyModelConfig, load_checkpoint, save_checkpoint, train_toy_classifier
from .pos import load_lexicon, save_lexicon
from .restore import (
    CharEmbedder,
    DefenseThresholds,
    EmbedderTrainConfig,
    ExplicitDefense,
    build_index,
    build_training_pairs,
    embedder_training_loss,
    load_index,
    save_index,
    train_char_embedder,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_MISSING_FILE = 2
EXIT_SCHEMA = 3
EXIT_CONFIG = 4
EXIT_RUNTIME = 5

SPLITS = ("train", "validation", "test")


def _dataset_dir(out: Path) -> Path:
    return out / "dataset"


def _model_path(out: Path) -> Path:
    return out / "model.json"


def _attack_dir(out: Path, attack: str, defense: str | None) -> Path:
    name = attack if defense is None else f"{attack}_vs_{defense}"
    return out / "attacks" / name


def _load_split(out: Path, split: str):
    docs, _ = read_dataset(require_file(_dataset_dir(out) / f"{split}.tsv", f"{split} split"))
    return docs


def _attack_config(config: dict, name: str, seed: int) -> AttackConfig:
    raw = dict(config["attacks"][name])
    raw["seed"] = derive_seed(seed, f"attack:{name}")
    return AttackConfig(**raw)


def _prepare(args) -> tuple[dict, Path, int]:
    config = load_config(require_file(args.config, "config file"))
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out_dir"] = args.out
    validate_positive(config)
    out = Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return config, out, config["seed"]


def cmd_gen_data(args) -> int:
    config, out, seed = _prepare(args)
    ds = config["dataset"]
    spec = DatasetSpec(
        train_size=ds["train_size"],
        validation_size=ds["validation_size"],
        test_size=ds["test_size"],
        vocab_size=ds["vocab_size"],
        keywords_per_class=ds["keywords_per_class"],
        min_tokens=ds["min_tokens"],
        max_tokens=ds["max_tokens"],
        seed=derive_seed(seed, "dataset"),
        class_keywords=ds.get("class_keywords"),
    )
    dataset = generate_dataset(spec)
    ddir = _dataset_dir(out)
    for split in SPLITS:
        write_dataset(ddir / f"{split}.tsv", dataset.splits[split])
    save_lexicon(dataset.lexicon, ddir / "pos_lexicon.tsv", ddir / "suffix_rules.tsv")
    write_resolved_config(config, out)
    for split in SPLITS:
        docs = dataset.splits[split]
        positives = sum(d.label for d in docs)
        print(f"{split}: {len(docs)} documents ({positives} labelled 1)")
    return EXIT_OK


def cmd_train(args) -> int:
    config, out, seed = _prepare(args)
    train_docs = _load_split(out, "train")
    mc = config["model"]
    model_config = ToyModelConfig(
        embed_dim=mc["embed_dim"],
        num_classes=mc["num_classes"],
        learning_rate=mc["learning_rate"],
        epochs=mc["epochs"],
        batch_size=mc["batch_size"],
        seed=derive_seed(seed, "model"),
    )
    model = train_toy_classifier(train_docs, model_config)
    digest = write_resolved_config(config, out)
    save_checkpoint(model, _model_path(out), config_hash=digest)
    for split in SPLITS:
        print(f"{split} accuracy: {model.accuracy(_load_split(out, split)):.3f}")
    return EXIT_OK


def _load_defense(config: dict, out: Path, defense: str):
    """Returns (model, campaign defense object) for a defended campaign."""
    if defense == "explicit":
        model = load_checkpoint(require_file(_model_path(out), "model checkpoint"))
        bundle = load_index(require_file(out / "defenses" / "explicit" / "index.json", "vocabulary index"))
        return model, bundle
    if defense == "abstain":
        defended = load_checkpoint(
            require_file(out / "defenses" / "abstain" / "defended_model.json", "defended checkpoint")
        )
        label = (defended.provenance or {}).get("abstain_label", defended.num_classes - 1)
        return defended, AbstainSemantics(abstain_label=label)
    raise ConfigError(f"unknown defense {defense!r}")


def cmd_attack(args) -> int:
    config, out, seed = _prepare(args)
    if args.defense is None:
        model = load_checkpoint(require_file(_model_path(out), "model checkpoint"))
        defense = None
    else:
        model, defense = _load_defense(config, out, args.defense)
    docs = _load_split(out, config["campaign"]["split"])
    lexicon = load_lexicon(
        require_file(_dataset_dir(out) / "pos_lexicon.tsv", "POS lexicon"),
        _dataset_dir(out) / "suffix_rules.tsv",
    )
    campaign = CampaignConfig(
        attack=args.attack,
        attack_config=_attack_config(config, args.attack, seed),
        defense=args.defense,
        workers=config["campaign"]["workers"],
        seed=derive_seed(seed, "campaign"),
    )
    aggregates, records = run_campaign(model, docs, campaign, lexicon=lexicon, defense=defense)
    digest = write_resolved_config(config, out)
    adir = _attack_dir(out, args.attack, args.defense)
    meta = {"attack": args.attack, "defense": args.defense, "config_hash": digest, "split": config["campaign"]["split"]}
    write_records(adir / "records.jsonl", records, meta)
    write_report(adir / "report.json", aggregates, meta | {"records_path": "records.jsonl"})
    write_plot_data(adir, records)
    for key in sorted(aggregates):
        print(f"{key}: {aggregates[key]}")
    return EXIT_OK


def _defend_abstain(config: dict, out: Path, seed: int) -> int:
    model = load_checkpoint(require_file(_model_path(out), "model checkpoint"))
    train_docs = _load_split(out, "train")
    test_docs = _load_split(out, "test")
    dcfg = config["defenses"]["abstain"]
    attack_name = dcfg["generation_attack"]
    if attack_name not in ATTACKS:
        raise ConfigError(f"unknown generation attack {attack_name!r}")
    lexicon = load_lexicon(
        require_file(_dataset_dir(out) / "pos_lexicon.tsv", "POS lexicon"),
        _dataset_dir(out) / "suffix_rules.tsv",
    )
    attack_config = _attack_config(config, attack_name, seed)
    abstain_config = abstain_mod.AbstainConfig(
        mix_ratio=dcfg["mix_ratio"],
        epochs=dcfg["epochs"],
        learning_rate=dcfg["learning_rate"],
        cold_start=dcfg["cold_start"],
        seed=derive_seed(seed, "abstain"),
    )

    def attack_fn(m, d, c):
        return run_attack(attack_name, m, d, c, lexicon=lexicon)

    mixed, results = abstain_mod.build_abstain_dataset(model, train_docs, attack_fn, attack_config, abstain_config)
    defended = abstain_mod.abstain_train(model, mixed, abstain_config)
    defended.provenance["generation_attack"] = attack_name

    ddir = out / "defenses" / "abstain"
    digest = write_resolved_config(config, out)
    origins = ["clean"] * len(train_docs) + ["adversarial"] * (len(mixed) - len(train_docs))
    write_dataset(ddir / "abstain_dataset.tsv", mixed, origins=origins)
    from .attacks import result_to_json

    gen_records = [{"index": i, "length": len(r.original.tokens), **result_to_json(r)} for i, r in enumerate(results)]
    write_records(ddir / "generation_records.jsonl", gen_records, {"attack": attack_name, "config_hash": digest})
    save_checkpoint(defended, ddir / "defended_model.json", config_hash=digest)

    abstain_label = defended.provenance["abstain_label"]
    report = {
        "abstain_examples": len(mixed) - len(train_docs),
        "clean_accuracy_undefended": model.accuracy(test_docs),
        "clean_accuracy_defended": abstain_mod.clean_accuracy(defended, test_docs),
        "abstain_label": abstain_label,
    }
    # replay numbers against held-out adversarial examples, when available
    undefended_records = _attack_dir(out, attack_name, None) / "records.jsonl"
    if undefended_records.exists():
        from .attacks import result_from_json

        _, recs = read_records(undefended_records)
        replayed = [result_from_json(r) for r in recs if r["success"]]
        if replayed:
            adv_docs = [r.perturbed for r in replayed]
            report["replay_abstain_coverage"] = abstain_mod.abstain_coverage(defended, adv_docs, abstain_label)
            report["replay_attack_success_rate"] = abstain_mod.defended_attack_success(
                defended, replayed, abstain_label
            )
    write_report(ddir / "defense_report.json", report, {"defense": "abstain", "config_hash": digest})
    for key in sorted(report):
        print(f"{key}: {report[key]}")
    return EXIT_OK


def _defend_explicit(config: dict, out: Path, seed: int) -> int:
    model = load_checkpoint(require_file(_model_path(out), "model checkpoint"))
    dcfg = config["defenses"]["explicit"]
    vocab = [t for t in model.vocab if t not in ("[UNK]", "[MASK]")]
    pairs = build_training_pairs(vocab, dcfg["pairs"], derive_seed(seed, "explicit-pairs"))
    train_config = EmbedderTrainConfig(
        dim=dcfg["embed_dim"],
        hash_seed=derive_seed(seed, "explicit-hash") % (2**31),
        ngram_orders=tuple(dcfg["ngram_orders"]),
        epochs=dcfg["epochs"],
        learning_rate=dcfg["learning_rate"],
        identity_weight=dcfg["identity_weight"],
        seed=derive_seed(seed, "explicit-train"),
    )
    embedder = train_char_embedder(pairs, train_config)
    identity = CharEmbedder(train_config.dim, train_config.hash_seed, train_config.ngram_orders)
    index_vocab = list(vocab)
    if dcfg.get("wordlist"):
        wordlist = require_file(dcfg["wordlist"], "wordlist")
        extra = [line.strip().lower() for line in wordlist.read_text(encoding="utf-8").splitlines() if line.strip()]
        index_vocab.extend(extra)
    index = build_index(index_vocab, embedder)
    thresholds = DefenseThresholds(dcfg["accept_low"], dcfg["accept_high"])
    bundle = ExplicitDefense(index=index, embedder=embedder, thresholds=thresholds)

    ddir = out / "defenses" / "explicit"
    digest = write_resolved_config(config, out)
    save_index(bundle, ddir / "index.json", config_hash=digest)
    report = {
        "index_size": len(index.tokens),
        "pairs": len(pairs),
        "training_loss_identity": embedder_training_loss(identity, pairs),
        "training_loss_trained": embedder_training_loss(embedder, pairs),
    }
    write_report(ddir / "defense_report.json", report, {"defense": "explicit", "config_hash": digest})
    for key in sorted(report):
        print(f"{key}: {report[key]}")
    return EXIT_OK


def cmd_defend(args) -> int:
    config, out, seed = _prepare(args)
    if args.defense == "abstain":
        return _defend_abstain(config, out, seed)
    if args.defense == "explicit":
        return _defend_explicit(config, out, seed)
    raise ConfigError(f"unknown defense {args.defense!r}")


def cmd_report(args) -> int:
    config, out, _ = _prepare(args)
    adir = _attack_dir(out, args.attack, args.defense)
    records_path = Path(args.records) if args.records else adir / "records.jsonl"
    report_path = Path(args.report) if args.report else adir / "report.json"
    _, records = read_records(require_file(records_path, "records file"))
    stored = read_report(require_file(report_path, "report file"))
    recomputed = aggregate(records)
    for key in sorted(recomputed):
        print(f"{key}: {recomputed[key]}")
    if canonical_json(stored["aggregates"]) != canonical_json(recomputed):
        print("stored report does not match the records", file=sys.stderr)
        return EXIT_RUNTIME
    print("report verified: aggregates match the records")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textrobust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset splits")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the undefended classifier")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run an attack campaign")
    common(p)
    p.add_argument("--attack", required=True, choices=sorted(ATTACKS))
    p.add_argument("--defense", choices=["abstain", "explicit"], default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="train a defense and write its artifacts")
    common(p)
    p.add_argument("--defense", required=True, choices=["abstain", "explicit"])
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("report", help="recompute aggregates from records and verify the stored report")
    common(p)
    p.add_argument("--attack", required=True, choices=sorted(ATTACKS))
    p.add_argument("--defense", choices=["abstain", "explicit"], default=None)
    p.add_argument("--records", default=None, help="records file (default: derived from --attack/--defense)")
    p.add_argument("--report", default=None, help="report file to verify against")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigError, MisclassifiedInputError, PositionError, EmptyInputError, UndefinedCorrelationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmptyPopulationError, NoAdversarialExamplesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except TextRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
