"""Campaign runner and aggregate metrics.

A campaign attacks every document of a split that the target model already
classifies correctly, each with a fresh query budget, and writes one JSONL
record per document. Aggregates (success rate, query statistics, sequence
length vs. queries correlation, edit distances, confidence deltas, Jaccard
similarities) are always recomputable from the records alone.

Two defense modes change the success semantics:

* explicit restoration: the perturbed text is passed through the restoration
  defense before the final prediction; the attack only counts if the
  restored document still flips the class.
* abstain: the attack runs against the defended (extended) model and counts
  only if the final prediction is neither the original class nor ABSTAIN.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, document_to_json, result_to_json, run_attack
from .config import atomic_write_text, canonical_json
from .errors import (
    ArtifactVersionError,
    ConfigError,
    EmptyPopulationError,
    SchemaError,
    UndefinedCorrelationError,
)
from .pos import PosLexicon
from .restore import ExplicitDefense
from .text import Document, jaccard

RECORDS_FORMAT = "textrobust-attack-records"
REPORT_FORMAT = "textrobust-campaign-report"
RECORDS_VERSION = 1
REPORT_VERSION = 1

_RECORD_REQUIRED_KEYS = ("index", "length", "success", "queries", "original", "perturbed")


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient.

    Raises UndefinedCorrelationError on length mismatch, fewer than two
    points, or zero variance in either input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise UndefinedCorrelationError("inputs must be equal-length 1-d sequences")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance input")
    return float(dx @ dy / np.sqrt(sxx * syy))


@dataclass
class AbstainSemantics:
    """Marks a campaign whose model carries an ABSTAIN class."""

    abstain_label: int


@dataclass
class CampaignConfig:
    attack: str
    attack_config: AttackConfig
    defense: str | None = None  # "explicit" or "abstain"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.defense not in (None, "explicit", "abstain"):
            raise ConfigError(f"unknown defense {self.defense!r}")


def _attack_record(index, doc, model, attack_name, attack_config, lexicon, defense):
    result = run_attack(attack_name, model, doc, attack_config, lexicon=lexicon)
    record = {"index": index, "length": len(doc.tokens)}
    record.update(result_to_json(result))
    if isinstance(defense, ExplicitDefense):
        defended_doc = defense.defend(result.perturbed)
        final = model.predict(defended_doc)
        record["defended"] = document_to_json(defended_doc)
        record["defended_prediction"] = [float(v) for v in final]
        record["defended_success"] = bool(int(np.argmax(final)) != doc.label)
        record["jaccard_defended"] = jaccard(doc.token_texts, defended_doc.token_texts)
    elif isinstance(defense, AbstainSemantics):
        final = model.predict(result.perturbed)
        final_class = int(np.argmax(final))
        record["final_prediction"] = [float(v) for v in final]
        record["abstained"] = bool(final_class == defense.abstain_label)
        record["defended_success"] = bool(final_class != doc.label and final_class != defense.abstain_label)
    return record


def run_campaign(
    model,
    documents: list[Document],
    config: CampaignConfig,
    lexicon: PosLexicon | None = None,
    defense: ExplicitDefense | AbstainSemantics | None = None,
) -> tuple[dict, list[dict]]:
    """Attack the eligible population and return (aggregates, records)."""
    if not documents:
        raise ConfigError("empty dataset")
    if config.defense == "explicit" and not isinstance(defense, ExplicitDefense):
        raise ConfigError("explicit campaign needs an ExplicitDefense")
    if config.defense == "abstain" and not isinstance(defense, AbstainSemantics):
        raise ConfigError("abstain campaign needs AbstainSemantics")

    eligible = [
        (i, doc)
        for i, doc in enumerate(documents)
        if doc.label is not None and int(np.argmax(model.predict(doc))) == doc.label
    ]
    if not eligible:
        raise EmptyPopulationError("the model classifies no document of this split correctly")

    if config.workers == 1:
        records = [
            _attack_record(i, doc, model, config.attack, config.attack_config, lexicon, defense)
            for i, doc in eligible
        ]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(_attack_record, i, doc, model, config.attack, config.attack_config, lexicon, defense)
                for i, doc in eligible
            ]
            records = [f.result() for f in futures]
    records.sort(key=lambda r: r["index"])
    return aggregate(records), records


def _effective_success(record: dict) -> bool:
    if "defended_success" in record:
        return record["defended_success"]
    return record["success"]


def aggregate(records: list[dict]) -> dict:
    """Recompute every campaign aggregate from per-example records.

    Query, distance, confidence, and Jaccard statistics are taken over the
    successful attacks (success is defense-aware when a defense is present);
    mean queries over all attempts is reported alongside. Aggregates that are
    undefined (no successes, degenerate correlation) are absent, never zero.
    """
    if not records:
        raise ConfigError("no records to aggregate")
    attempted = len(records)
    successes = sum(_effective_success(r) for r in records)
    out = {
        "attempted": attempted,
        "successes": successes,
        "success_rate": successes / attempted,
        "mean_queries_all": sum(r["queries"] for r in records) / attempted,
    }
    if any("defended_success" in r for r in records):
        raw = sum(r["success"] for r in records)
        out["attack_successes"] = raw
        out["attack_success_rate"] = raw / attempted
    if any("abstained" in r for r in records):
        out["abstain_rate"] = sum(r["abstained"] for r in records) / attempted
    won = [r for r in records if _effective_success(r)]
    if won:
        queries = [r["queries"] for r in won]
        out["mean_queries_successful"] = sum(queries) / len(queries)
        out["median_queries_successful"] = float(statistics.median(queries))
        out["mean_levenshtein_raw"] = sum(r["levenshtein_raw"] for r in won) / len(won)
        out["mean_confidence_delta"] = sum(r["confidence_delta"] for r in won) / len(won)
        out["mean_jaccard_perturbed"] = sum(r["jaccard_tokens"] for r in won) / len(won)
        if all("jaccard_defended" in r for r in won):
            out["mean_jaccard_defended"] = sum(r["jaccard_defended"] for r in won) / len(won)
        try:
            out["pearson_length_queries"] = pearson([r["length"] for r in won], queries)
        except UndefinedCorrelationError:
            pass  # reported as absent
    return out


def write_plot_data(directory: str | Path, records: list[dict]) -> list[Path]:
    """Plot-ready CSV exports: per-sample (length, queries) pairs for the
    successful attacks plus histograms of the perturbation metrics.
    """
    directory = Path(directory)
    won = [r for r in records if _effective_success(r)]
    written = []

    lines = ["length,queries"]
    lines += [f"{r['length']},{r['queries']}" for r in won]
    path = directory / "length_queries.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    counts: dict[int, int] = {}
    for r in won:
        counts[r["levenshtein_raw"]] = counts.get(r["levenshtein_raw"], 0) + 1
    lines = ["levenshtein_raw,count"]
    lines += [f"{value},{counts[value]}" for value in sorted(counts)]
    path = directory / "levenshtein_histogram.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    def binned(values, bins=10):
        edges = [i / bins for i in range(bins + 1)]
        hist = [0] * bins
        for v in values:
            slot = min(int(v * bins), bins - 1)
            hist[max(slot, 0)] += 1
        return edges, hist

    edges, hist = binned([r["confidence_delta"] for r in won])
    lines = ["bin_low,bin_high,count"]
    lines += [f"{edges[i]},{edges[i + 1]},{hist[i]}" for i in range(len(hist))]
    path = directory / "confidence_delta_histogram.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    if any("jaccard_defended" in r for r in records):
        _, perturbed = binned([r["jaccard_tokens"] for r in records])
        _, defended = binned([r["jaccard_defended"] for r in records if "jaccard_defended" in r])
        lines = ["bin_low,bin_high,count_perturbed,count_defended"]
        lines += [
            f"{edges[i]},{edges[i + 1]},{perturbed[i]},{defended[i]}" for i in range(len(perturbed))
        ]
        path = directory / "jaccard_histogram.csv"
        atomic_write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# persistence


def write_records(path: str | Path, records: list[dict], header_extra: dict | None = None) -> None:
    header = {"format": RECORDS_FORMAT, "version": RECORDS_VERSION}
    if header_extra:
        header.update(header_extra)
    lines = [canonical_json(header)]
    lines.extend(canonical_json(r) for r in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"records file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"{path}:1: empty records file")

    def parse(lineno: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise SchemaError(f"{path}:{lineno}: expected an object")
        return obj

    header = parse(1, lines[0])
    if header.get("format") != RECORDS_FORMAT:
        raise SchemaError(f"{path}:1: not an attack records file")
    if header.get("version") != RECORDS_VERSION:
        raise ArtifactVersionError(f"{path}:1: unsupported records version {header.get('version')!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        record = parse(lineno, line)
        missing = [k for k in _RECORD_REQUIRED_KEYS if k not in record]
        if missing:
            raise SchemaError(f"{path}:{lineno}: record missing keys {missing}")
        records.append(record)
    return header, records


def write_report(path: str | Path, aggregates: dict, meta: dict | None = None) -> None:
    payload = {"format": REPORT_FORMAT, "version": REPORT_VERSION, "aggregates": aggregates}
    if meta:
        payload.update(meta)
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_report(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"report file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("format") != REPORT_FORMAT:
        raise SchemaError(f"{path}: not a campaign report")
    if payload.get("version") != REPORT_VERSION:
        raise ArtifactVersionError(f"{path}: unsupported report version {payload.get('version')!r}")
    if "aggregates" not in payload:
        raise SchemaError(f"{path}: missing aggregates")
    return payload
