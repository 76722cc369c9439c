import pytest

from selabel.corpus import CorpusSpec, FieldSchema, generate_corpus, save_corpus
from selabel.engine import ExperimentConfig


def small_schema(num_fields: int = 4) -> tuple[FieldSchema, ...]:
    freqs = [1.0, 0.8, 0.5, 0.6]
    covers = [1.0, 0.9, 0.8, 1.0]
    diffs = [0.8, 1.5, 1.2, 2.0]
    return tuple(
        FieldSchema(
            field_id=f"f{i}",
            display_name=f"Field {i}",
            repeating=(i % 4 == 3),
            frequency=freqs[i % 4],
            coverage=covers[i % 4],
            difficulty=diffs[i % 4],
        )
        for i in range(num_fields)
    )


@pytest.fixture(scope="session")
def tiny_corpora(tmp_path_factory):
    """A small train/test pair on disk, shared across tests that just need
    something runnable."""
    root = tmp_path_factory.mktemp("corpora")
    schema = small_schema()
    train = generate_corpus(CorpusSpec(80, schema, (2, 4), feature_dim=6, seed=21))
    test = generate_corpus(CorpusSpec(40, schema, (2, 4), feature_dim=6, seed=22))
    train_path = root / "train.jsonl"
    test_path = root / "test.jsonl"
    save_corpus(train, train_path)
    save_corpus(test, test_path)
    return {"train": train, "test": test, "train_path": train_path, "test_path": test_path}


def tiny_experiment_config(tiny_corpora, **overrides) -> ExperimentConfig:
    base = dict(
        train_corpus=str(tiny_corpora["train_path"]),
        test_corpus=str(tiny_corpora["test_path"]),
        bootstrap_docs=10,
        budget_fraction=0.3,
        rounds=3,
        seed=9,
        learning_rate=0.01,
        batch_size=32,
        max_epochs=40,
        early_stop_patience=10,
    )
    base.update(overrides)
    return ExperimentConfig(**base)
