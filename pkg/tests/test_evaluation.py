import json

import numpy as np
import pytest

from textrobust.attacks import AttackConfig
from textrobust.config import canonical_json
from textrobust.errors import (
    ArtifactVersionError,
    ConfigError,
    EmptyPopulationError,
    SchemaError,
    UndefinedCorrelationError,
)
from textrobust.evaluation import (
    AbstainSemantics,
    CampaignConfig,
    aggregate,
    pearson,
    read_records,
    read_report,
    run_campaign,
    write_records,
    write_report,
)
from textrobust.text import document_from_text


class TestPearson:
    def test_perfect_linear(self):
        assert pearson([1, 2, 3], [3, 5, 7]) == pytest.approx(1.0)

    def test_constant_input_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1, 2, 3], [4, 4, 4])

    def test_known_value(self):
        # direct formula: covariance 3, variances 5 and 5 -> 3/5
        assert pearson([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)

    def test_self_correlation(self):
        assert pearson([3, 1, 4, 1, 5], [3, 1, 4, 1, 5]) == pytest.approx(1.0)

    def test_anti_correlation(self):
        x = [3.0, 1.0, 4.0, 1.5]
        assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)

    def test_length_mismatch(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1, 2], [1, 2, 3])

    def test_too_few_points(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1], [2])


def _record(index, success, queries, length=5, **extra):
    doc = {"raw": "a b", "tokens": [{"text": "a", "start": 0, "end": 1}, {"text": "b", "start": 2, "end": 3}], "label": 0}
    base = {
        "index": index,
        "length": length,
        "success": success,
        "queries": queries,
        "original": doc,
        "perturbed": doc,
        "edits": [],
        "original_confidence": 0.9,
        "final_confidence": 0.4 if success else 0.9,
        "confidence_delta": 0.5 if success else 0.0,
        "levenshtein_raw": 2 if success else 0,
        "jaccard_tokens": 0.5 if success else 1.0,
    }
    base.update(extra)
    return base


class TestAggregate:
    def test_single_success(self):
        out = aggregate([_record(0, True, 7)])
        assert out["attempted"] == 1
        assert out["successes"] == 1
        assert out["success_rate"] == 1.0
        assert out["mean_queries_successful"] == 7.0
        assert out["median_queries_successful"] == 7.0

    def test_exact_third(self):
        out = aggregate([_record(0, True, 5), _record(1, False, 9), _record(2, False, 9)])
        assert out["success_rate"] == 1 / 3

    def test_permutation_invariant(self):
        records = [_record(i, i % 2 == 0, 3 + i, length=4 + i) for i in range(7)]
        a = aggregate(records)
        b = aggregate(list(reversed(records)))
        assert canonical_json(a) == canonical_json(b)

    def test_no_successes_omits_success_stats(self):
        out = aggregate([_record(0, False, 4), _record(1, False, 6)])
        assert out["success_rate"] == 0.0
        assert "mean_queries_successful" not in out
        assert "mean_levenshtein_raw" not in out

    def test_defense_fields_absent_without_defense(self):
        out = aggregate([_record(0, True, 4)])
        for key in ("attack_success_rate", "mean_jaccard_defended", "abstain_rate"):
            assert key not in out

    def test_defended_success_drives_rate(self):
        records = [
            _record(0, True, 4, defended_success=False),
            _record(1, True, 5, defended_success=True),
        ]
        out = aggregate(records)
        assert out["success_rate"] == 0.5
        assert out["attack_success_rate"] == 1.0

    def test_degenerate_pearson_absent(self):
        records = [_record(0, True, 4, length=5), _record(1, True, 4, length=9)]
        out = aggregate(records)  # queries constant -> zero variance
        assert "pearson_length_queries" not in out

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            aggregate([])


class TestRunCampaign:
    def test_recount_oracle(self, desk):
        config = CampaignConfig(attack="char", attack_config=AttackConfig())
        aggregates, records = run_campaign(desk.model, desk.dataset.splits["test"][:16], config)
        assert aggregates["attempted"] == len(records)
        assert aggregates["successes"] == sum(r["success"] for r in records)
        assert aggregates["success_rate"] == sum(r["success"] for r in records) / len(records)
        assert canonical_json(aggregate(records)) == canonical_json(aggregates)

    def test_eligibility_excludes_misclassified(self, desk):
        docs = [document_from_text(d.raw, label=1 - d.label) for d in desk.dataset.splits["test"][:6]]
        docs += desk.dataset.splits["test"][:6]
        config = CampaignConfig(attack="char", attack_config=AttackConfig())
        aggregates, records = run_campaign(desk.model, docs, config)
        assert aggregates["attempted"] <= 7  # the flipped-label copies are excluded

    def test_all_misclassified_is_an_error(self, desk):
        docs = [document_from_text(d.raw, label=1 - d.label) for d in desk.dataset.splits["test"][:10]]
        config = CampaignConfig(attack="char", attack_config=AttackConfig())
        with pytest.raises(EmptyPopulationError):
            run_campaign(desk.model, docs, config)

    def test_budget_one_forces_zero_rate(self, desk):
        config = CampaignConfig(attack="char", attack_config=AttackConfig(query_budget=1))
        aggregates, _ = run_campaign(desk.model, desk.dataset.splits["test"][:10], config)
        assert aggregates["success_rate"] == 0.0

    def test_deterministic_records(self, desk):
        config = CampaignConfig(attack="baseline_word", attack_config=AttackConfig())
        docs = desk.dataset.splits["test"][:10]
        _, a = run_campaign(desk.model, docs, config)
        _, b = run_campaign(desk.model, docs, config)
        assert canonical_json(a) == canonical_json(b)

    def test_worker_pool_matches_sequential(self, desk):
        docs = desk.dataset.splits["test"][:8]
        seq = CampaignConfig(attack="char", attack_config=AttackConfig(), workers=1)
        par = CampaignConfig(attack="char", attack_config=AttackConfig(), workers=2)
        _, a = run_campaign(desk.model, docs, seq)
        _, b = run_campaign(desk.model, docs, par)
        assert canonical_json(a) == canonical_json(b)

    def test_explicit_defense_campaign_records(self, desk, explicit_defense):
        config = CampaignConfig(attack="char", attack_config=AttackConfig(), defense="explicit")
        aggregates, records = run_campaign(
            desk.model, desk.dataset.splits["test"][:12], config, defense=explicit_defense
        )
        for r in records:
            assert "defended" in r and "defended_success" in r and "jaccard_defended" in r
        assert "attack_success_rate" in aggregates
        assert aggregates["success_rate"] <= aggregates["attack_success_rate"] + 1e-12

    def test_abstain_campaign_semantics(self, desk, abstain_bundle):
        config = CampaignConfig(attack="char", attack_config=AttackConfig(), defense="abstain")
        aggregates, records = run_campaign(
            abstain_bundle.defended,
            desk.dataset.splits["test"][:12],
            config,
            defense=AbstainSemantics(abstain_bundle.abstain_label),
        )
        for r in records:
            final = int(np.argmax(r["final_prediction"]))
            assert r["abstained"] == (final == abstain_bundle.abstain_label)
            if r["abstained"]:
                assert not r["defended_success"]

    def test_defense_config_mismatch(self, desk):
        config = CampaignConfig(attack="char", attack_config=AttackConfig(), defense="explicit")
        with pytest.raises(ConfigError):
            run_campaign(desk.model, desk.dataset.splits["test"][:4], config)

    def test_campaign_config_validation(self):
        with pytest.raises(ConfigError):
            CampaignConfig(attack="char", attack_config=AttackConfig(), workers=0)
        with pytest.raises(ConfigError):
            CampaignConfig(attack="char", attack_config=AttackConfig(), defense="firewall")


class TestPlotExports:
    def test_length_queries_pairs(self, tmp_path):
        from textrobust.evaluation import write_plot_data

        records = [_record(0, True, 7, length=5), _record(1, False, 9, length=8), _record(2, True, 3, length=4)]
        written = write_plot_data(tmp_path, records)
        assert {p.name for p in written} == {
            "length_queries.csv",
            "levenshtein_histogram.csv",
            "confidence_delta_histogram.csv",
        }
        lines = (tmp_path / "length_queries.csv").read_text().splitlines()
        assert lines[0] == "length,queries"
        assert lines[1:] == ["5,7", "4,3"]  # successful attacks only

    def test_histogram_counts_sum_to_successes(self, tmp_path):
        from textrobust.evaluation import write_plot_data

        records = [_record(i, True, 4, length=5) for i in range(6)]
        write_plot_data(tmp_path, records)
        rows = (tmp_path / "levenshtein_histogram.csv").read_text().splitlines()[1:]
        assert sum(int(r.split(",")[1]) for r in rows) == 6

    def test_jaccard_histogram_written_with_defense(self, tmp_path):
        from textrobust.evaluation import write_plot_data

        records = [
            _record(i, True, 4, defended_success=False, jaccard_defended=0.95) for i in range(4)
        ]
        written = write_plot_data(tmp_path, records)
        assert any(p.name == "jaccard_histogram.csv" for p in written)
        rows = (tmp_path / "jaccard_histogram.csv").read_text().splitlines()
        assert rows[0] == "bin_low,bin_high,count_perturbed,count_defended"
        assert sum(int(r.split(",")[3]) for r in rows[1:]) == 4


class TestPersistence:
    def test_records_round_trip(self, tmp_path):
        records = [_record(i, i % 2 == 0, 3 + i) for i in range(5)]
        path = tmp_path / "records.jsonl"
        write_records(path, records, {"attack": "char", "config_hash": "abc"})
        header, loaded = read_records(path)
        assert header["attack"] == "char"
        assert loaded == records

    def test_byte_identical_rewrites(self, tmp_path):
        records = [_record(i, True, 4 + i) for i in range(4)]
        write_records(tmp_path / "a.jsonl", records, {"attack": "char"})
        write_records(tmp_path / "b.jsonl", records, {"attack": "char"})
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_schema_error_carries_line_number(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records(path, [_record(0, True, 3)], {})
        lines = path.read_text().splitlines()
        lines.append("{not json")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match=":3:"):
            read_records(path)

    def test_missing_record_keys_detected(self, tmp_path):
        path = tmp_path / "records.jsonl"
        header = {"format": "textrobust-attack-records", "version": 1}
        path.write_text(json.dumps(header) + "\n" + json.dumps({"index": 0}) + "\n")
        with pytest.raises(SchemaError, match="missing keys"):
            read_records(path)

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"format": "other", "version": 1}\n')
        with pytest.raises(SchemaError):
            read_records(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"format": "textrobust-attack-records", "version": 9}\n')
        with pytest.raises(ArtifactVersionError):
            read_records(path)

    def test_report_round_trip(self, tmp_path):
        aggregates = aggregate([_record(0, True, 7)])
        path = tmp_path / "report.json"
        write_report(path, aggregates, {"attack": "char", "config_hash": "ff"})
        loaded = read_report(path)
        assert canonical_json(loaded["aggregates"]) == canonical_json(aggregates)
        assert loaded["attack"] == "char"

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_records(tmp_path / "nope.jsonl")
        with pytest.raises(FileNotFoundError):
            read_report(tmp_path / "nope.json")
