import json
from dataclasses import replace

import numpy as np
import pytest

from selabel.corpus import load_corpus
from selabel.engine import (
    ExperimentConfig,
    ExperimentState,
    bootstrap,
    labeled_set_from_store,
    resume_experiment,
    run_experiment,
    run_round,
)
from selabel.errors import ValidationError
from selabel.oracle import LabelState

from conftest import tiny_experiment_config


@pytest.fixture(scope="module")
def corpora(tiny_corpora):
    return (
        load_corpus(tiny_corpora["train_path"]),
        load_corpus(tiny_corpora["test_path"]),
    )


def test_config_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="mystery"):
        ExperimentConfig.from_dict({"mystery": 1})


def test_config_validates_ranges(tiny_corpora):
    with pytest.raises(ValidationError):
        tiny_experiment_config(tiny_corpora, budget_fraction=1.5)
    with pytest.raises(ValidationError):
        tiny_experiment_config(tiny_corpora, rounds=0)
    with pytest.raises(ValidationError):
        tiny_experiment_config(tiny_corpora, strategy="bogus")


def test_config_file_roundtrip(tiny_corpora, tmp_path):
    config = tiny_experiment_config(tiny_corpora)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    assert ExperimentConfig.from_file(path) == config


def test_bootstrap_costs_and_determinism(tiny_corpora, corpora):
    train_c, test_c = corpora
    config = tiny_experiment_config(tiny_corpora)
    state = bootstrap(config, train_c, test_c)
    assert len(state.bootstrap_doc_ids) == 10
    assert state.ledger.spent_seconds == 10 * 360.0
    again = bootstrap(config, train_c, test_c)
    assert again.bootstrap_doc_ids == state.bootstrap_doc_ids
    assert np.array_equal(again.scorer.parameters, state.scorer.parameters)
    assert again.reports[0].avg_e2e_max_f1 == state.reports[0].avg_e2e_max_f1


def test_round_bookkeeping_identity(tiny_corpora, corpora):
    train_c, test_c = corpora
    config = tiny_experiment_config(tiny_corpora)
    state = bootstrap(config, train_c, test_c)
    before = state.store.labeled_count()
    report = run_round(state, config, train_c, test_c)
    grown = state.store.labeled_count() - before
    assert grown == report.questions_asked + report.inferred_negatives
    assert report.yes_count + report.no_count == report.questions_asked
    assert report.questions_asked > 0
    # labeled/unlabeled stay a partition of the pool
    assert state.store.labeled_count() <= train_c.num_candidates


def test_single_round_consumes_whole_budget(tiny_corpora):
    # capping off so the tiny pool's (doc, field) groups don't run out first
    config = tiny_experiment_config(tiny_corpora, rounds=1, cap_candidates=False)
    result = run_experiment(config)
    questions = result.reports[1].questions_asked
    assert questions == result.question_budget
    assert result.questions_asked == result.question_budget


def test_total_questions_never_exceed_budget(tiny_corpora):
    config = tiny_experiment_config(tiny_corpora, rounds=4)
    result = run_experiment(config)
    assert result.questions_asked <= result.question_budget
    spent = result.reports[-1].seconds_spent_cumulative
    assert spent == 10 * 360.0 + 10.0 * result.questions_asked


def test_target_zero_stops_after_bootstrap(tiny_corpora):
    config = tiny_experiment_config(tiny_corpora, target_f1=0.0)
    result = run_experiment(config)
    assert result.stop_reason == "target"
    assert len(result.reports) == 1
    assert result.reports[0].round_index == 0


def test_rounds_csv_has_rounds_rows(tiny_corpora, tmp_path):
    config = tiny_experiment_config(tiny_corpora, rounds=3)
    run_experiment(config, tmp_path / "out")
    lines = (tmp_path / "out" / "rounds.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 3  # header + one row per round
    assert (tmp_path / "out" / "fields.csv").exists()
    assert (tmp_path / "out" / "summary.json").exists()


def test_fixed_seed_reports_byte_identical(tiny_corpora, tmp_path):
    config = tiny_experiment_config(tiny_corpora, rounds=2)
    run_experiment(config, tmp_path / "a")
    run_experiment(config, tmp_path / "b")
    assert (tmp_path / "a" / "rounds.csv").read_bytes() == (tmp_path / "b" / "rounds.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert (tmp_path / "a" / "fields.csv").read_bytes() == (tmp_path / "b" / "fields.csv").read_bytes()


def test_checkpoint_resume_equals_uninterrupted(tiny_corpora, corpora, tmp_path):
    train_c, test_c = corpora
    config = tiny_experiment_config(tiny_corpora, rounds=3)
    run_experiment(config, tmp_path / "full")

    out = tmp_path / "interrupted"
    out.mkdir()
    state = bootstrap(config, train_c, test_c)
    state.save(out / "state_round_00.json")
    run_round(state, config, train_c, test_c)
    state.save(out / "state_round_01.json")
    resume_experiment(config, out)
    assert (out / "rounds.csv").read_bytes() == (tmp_path / "full" / "rounds.csv").read_bytes()


def test_state_roundtrip(tiny_corpora, corpora, tmp_path):
    train_c, test_c = corpora
    config = tiny_experiment_config(tiny_corpora)
    state = bootstrap(config, train_c, test_c)
    run_round(state, config, train_c, test_c)
    path = tmp_path / "state.json"
    state.save(path)
    loaded = ExperimentState.load(path)
    assert loaded.completed_rounds == state.completed_rounds
    assert loaded.store.to_dict() == state.store.to_dict()
    assert np.array_equal(loaded.scorer.parameters, state.scorer.parameters)
    assert loaded.ledger.to_dict() == state.ledger.to_dict()
    assert [r.to_dict() for r in loaded.reports] == [r.to_dict() for r in state.reports]


def test_labeled_set_partition_after_rounds(tiny_corpora, corpora):
    train_c, test_c = corpora
    config = tiny_experiment_config(tiny_corpora, rounds=2)
    state = bootstrap(config, train_c, test_c)
    total = train_c.num_candidates
    for _ in range(2):
        run_round(state, config, train_c, test_c)
        labeled = state.store.labeled_count()
        unlabeled = sum(
            1 for c in train_c.iter_candidates()
            if state.store.state(c.candidate_id) is LabelState.UNLABELED
        )
        assert labeled + unlabeled == total
    labeled_set = labeled_set_from_store(train_c, state.store)
    assert len(labeled_set) == state.store.labeled_count()


def test_ablation_switches_change_behavior(tiny_corpora):
    base = tiny_experiment_config(tiny_corpora, rounds=2)
    plain = run_experiment(replace(base, calibrate_scores=False,
                                   cap_candidates=False, auto_infer_negatives=False))
    assert all(r.inferred_negatives == 0 for r in plain.reports)
    with_ain = run_experiment(replace(base, auto_infer_negatives=True))
    assert sum(r.inferred_negatives for r in with_ain.reports) > 0


def test_mode_full_trains_reference_upper_bound(tiny_corpora):
    config = tiny_experiment_config(tiny_corpora, mode="full")
    result = run_experiment(config)
    assert result.stop_reason == "mode"
    assert result.questions_asked == 0
    assert result.final_f1 > result.initial_f1


def test_missing_corpus_fails_before_state(tmp_path, tiny_corpora):
    config = tiny_experiment_config(tiny_corpora)
    config = replace(config, train_corpus=str(tmp_path / "missing.jsonl"))
    with pytest.raises(FileNotFoundError):
        run_experiment(config, tmp_path / "never")
    assert not (tmp_path / "never").exists() or not any((tmp_path / "never").iterdir())
