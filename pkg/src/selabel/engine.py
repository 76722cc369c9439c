"""Experiment orchestration: bootstrap, labeling rounds, reports, resume.

A run starts by classically labeling a small random document sample and
training an initial model, then repeats: rank the unlabeled pool by
uncertainty, select a capped batch within the per-round question budget,
answer each question (simulated oracle or live annotators), infer free
negatives, retrain warm-started from the previous parameters, refit
thresholds and calibration curves for the new model, and evaluate on the
held-out test corpus. All randomness is derived from the experiment seed
and the round index, so checkpointed state resumes bit-identically.
"""

from __future__ import annotations

import json
import math
import dataclasses
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import acquisition, evaluation, oracle
from .acquisition import SamplerConfig, UNCAPPED
from .calibration import CalibratorSet, fit_calibrator
from .calibration import curve_to_csv_rows as calibration_csv_rows
from .corpus import Corpus, load_corpus
from .errors import ConsistencyError, ValidationError
from .oracle import Annotator, AnnotatorConfig, BudgetLedger, LabelStore
from .scorer import (
    FeatureEncoder,
    LabeledCandidateSet,
    LabeledExample,
    ScorerConfig,
    TrainedScorer,
    fit_field_thresholds,
    save_scorer,
    train,
)

MODES = ("selective", "initial", "full")

# spawn-key tags for deriving per-purpose, per-round RNG streams
_TAG_BOOTSTRAP = 0
_TAG_TRAIN = 1
_TAG_SAMPLER = 2
_TAG_ANNOTATOR = 3
_TAG_SPLIT = 4
_TAG_RANK = 5
_TAG_FULL = 6


def _sub_rng(seed: int, tag: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag, round_index)))


def _sub_seed(seed: int, tag: int, round_index: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(tag, round_index))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every key is settable from the config
    file. `k=0` means the per-round batch size is derived from the budget,
    `top_n=0` sizes the random_from_top_n prefix at twice the batch."""

    train_corpus: str = ""
    test_corpus: str = ""
    mode: str = "selective"
    bootstrap_docs: int = 100
    budget_fraction: float = 0.10
    rounds: int = 12
    seed: int = 0
    target_f1: float | None = None
    full_f1: float | None = None
    # scorer
    hidden_units: int = 32
    dropout_rate: float = 0.1
    learning_rate: float = 0.001
    retrain_learning_rate: float = 0.0  # 0 = same as learning_rate
    warm_start: bool = True  # retrain rounds from the previous parameters
    batch_size: int = 128
    max_epochs: int = 50
    early_stop_patience: int = 3
    ensemble_size: int = 1
    # sampling
    strategy: str = "top_k_plus_random"
    k: int = 0
    k_prime_fraction: float = 0.9
    top_n: int = 0
    cap_m: int = 1
    metric: str = "score_distance"
    uncertainty_threshold: float = 0.5
    variance_passes: int = 10
    # calibration
    num_bins: int = 10
    floor_threshold: float = 1e-3
    # ablation switches
    calibrate_scores: bool = True
    cap_candidates: bool = True
    auto_infer_negatives: bool = True
    # oracle
    noise_rate: float = 0.0
    cost_full_doc_seconds: float = 360.0
    cost_question_seconds: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.rounds < 1:
            raise ValidationError("rounds must be >= 1")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValidationError("budget_fraction must be in (0, 1]")
        if self.bootstrap_docs < 1:
            raise ValidationError("bootstrap_docs must be >= 1")
        if not 0.0 < self.k_prime_fraction <= 1.0:
            raise ValidationError("k_prime_fraction must be in (0, 1]")
        if self.metric not in acquisition.METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}")
        if self.strategy not in acquisition.STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.variance_passes < 2:
            raise ValidationError("variance_passes must be >= 2")
        self.scorer_config().validate()
        AnnotatorConfig(self.noise_rate, self.seed).validate()

    def scorer_config(self, seed: int | None = None, warm: bool = False) -> ScorerConfig:
        lr = self.learning_rate
        if warm and self.retrain_learning_rate > 0:
            lr = self.retrain_learning_rate
        return ScorerConfig(
            hidden_units=self.hidden_units,
            dropout_rate=self.dropout_rate,
            learning_rate=lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            ensemble_size=self.ensemble_size,
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclass_fields(ExperimentConfig)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        config = ExperimentConfig(**raw)
        config.validate()
        return config

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a flat JSON object")
        return ExperimentConfig.from_dict(raw)


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    questions_asked: int
    yes_count: int
    no_count: int
    inferred_negatives: int
    seconds_spent_cumulative: float
    avg_e2e_max_f1: float
    per_field_f1: dict[str, float]
    gap_closed_so_far: float | None = None

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "questions_asked": self.questions_asked,
            "yes_count": self.yes_count,
            "no_count": self.no_count,
            "inferred_negatives": self.inferred_negatives,
            "seconds_spent_cumulative": self.seconds_spent_cumulative,
            "avg_e2e_max_f1": self.avg_e2e_max_f1,
            "per_field_f1": dict(sorted(self.per_field_f1.items())),
            "gap_closed_so_far": self.gap_closed_so_far,
        }

    @staticmethod
    def from_dict(raw: dict) -> "RoundReport":
        return RoundReport(
            round_index=int(raw["round_index"]),
            questions_asked=int(raw["questions_asked"]),
            yes_count=int(raw["yes_count"]),
            no_count=int(raw["no_count"]),
            inferred_negatives=int(raw["inferred_negatives"]),
            seconds_spent_cumulative=float(raw["seconds_spent_cumulative"]),
            avg_e2e_max_f1=float(raw["avg_e2e_max_f1"]),
            per_field_f1={k: float(v) for k, v in raw["per_field_f1"].items()},
            gap_closed_so_far=(
                None if raw["gap_closed_so_far"] is None else float(raw["gap_closed_so_far"])
            ),
        )


class ExperimentState:
    """Mutable run state; serializes to one JSON document per checkpoint."""

    def __init__(
        self,
        store: LabelStore,
        ledger: BudgetLedger,
        scorer: TrainedScorer,
        calibrators: CalibratorSet | None,
        reports: list[RoundReport],
        bootstrap_doc_ids: tuple[str, ...],
        completed_rounds: int = 0,
    ):
        self.store = store
        self.ledger = ledger
        self.scorer = scorer
        self.calibrators = calibrators
        self.reports = reports
        self.bootstrap_doc_ids = bootstrap_doc_ids
        self.completed_rounds = completed_rounds

    @property
    def initial_f1(self) -> float:
        return self.reports[0].avg_e2e_max_f1

    @property
    def latest_f1(self) -> float:
        return self.reports[-1].avg_e2e_max_f1

    def to_dict(self) -> dict:
        return {
            "format": "selabel-state",
            "version": 1,
            "completed_rounds": self.completed_rounds,
            "bootstrap_doc_ids": list(self.bootstrap_doc_ids),
            "store": self.store.to_dict(),
            "ledger": self.ledger.to_dict(),
            "scorer": {
                "parameters": self.scorer.parameters.tolist(),
                "feature_dim": self.scorer.feature_dim,
                "field_ids": list(self.scorer.field_ids),
                "hidden_units": self.scorer.hidden_units,
                "dropout_rate": self.scorer.dropout_rate,
                "field_thresholds": self.scorer.field_thresholds,
                "training_round": self.scorer.training_round,
                "validation_auc": self.scorer.validation_auc,
            },
            "calibrators": None if self.calibrators is None else self.calibrators.to_dict(),
            "reports": [r.to_dict() for r in self.reports],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8"
        )

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentState":
        if raw.get("format") != "selabel-state":
            raise ValidationError("not an experiment state file")
        sc = raw["scorer"]
        scorer = TrainedScorer(
            parameters=np.asarray(sc["parameters"], dtype=np.float64),
            feature_dim=int(sc["feature_dim"]),
            field_ids=tuple(sc["field_ids"]),
            hidden_units=int(sc["hidden_units"]),
            dropout_rate=float(sc["dropout_rate"]),
            field_thresholds={k: float(v) for k, v in sc["field_thresholds"].items()},
            training_round=int(sc["training_round"]),
            validation_auc=float(sc["validation_auc"]),
        )
        return ExperimentState(
            store=LabelStore.from_dict(raw["store"]),
            ledger=BudgetLedger.from_dict(raw["ledger"]),
            scorer=scorer,
            calibrators=(
                None if raw["calibrators"] is None else CalibratorSet.from_dict(raw["calibrators"])
            ),
            reports=[RoundReport.from_dict(r) for r in raw["reports"]],
            bootstrap_doc_ids=tuple(raw["bootstrap_doc_ids"]),
            completed_rounds=int(raw["completed_rounds"]),
        )

    @staticmethod
    def load(path: str | Path) -> "ExperimentState":
        return ExperimentState.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class AnswerSource(Protocol):
    """Where yes/no answers come from: simulated oracle or live annotators."""

    def collect(self, candidate_ids: list[str], round_index: int) -> list[tuple[str, str]]:
        """Answer the batch; returns (candidate_id, "yes"/"no") in the order
        answers were applied to the store/ledger."""
        ...


class SimulatedAnswerSource:
    def __init__(self, corpus: Corpus, store: LabelStore, ledger: BudgetLedger,
                 config: ExperimentConfig):
        self.corpus = corpus
        self.store = store
        self.ledger = ledger
        self.config = config

    def collect(self, candidate_ids: list[str], round_index: int) -> list[tuple[str, str]]:
        annotator = Annotator(
            AnnotatorConfig(self.config.noise_rate, 0),
            rng=_sub_rng(self.config.seed, _TAG_ANNOTATOR, round_index),
        )
        out = []
        for cid in candidate_ids:
            if not self.ledger.can_afford(self.ledger.cost_question_seconds):
                break  # budget exhausted mid-batch: truncate, not an error
            answer = oracle.answer_question(self.store, self.corpus, cid, annotator, self.ledger)
            out.append((cid, answer))
        return out


def labeled_set_from_store(corpus: Corpus, store: LabelStore) -> LabeledCandidateSet:
    entries = []
    for doc in corpus.documents:
        for c in doc.candidates:
            if store.is_labeled(c.candidate_id):
                entries.append(
                    LabeledExample(
                        candidate_id=c.candidate_id,
                        features=c.features,
                        field_id=c.field_id,
                        label=store.label_of(c.candidate_id),
                        source=store.source_of(c.candidate_id),
                    )
                )
    return LabeledCandidateSet(entries)


def full_labeled_set(corpus: Corpus) -> LabeledCandidateSet:
    """Every candidate with its hidden label: the full-labeling reference."""
    return LabeledCandidateSet(
        LabeledExample(c.candidate_id, c.features, c.field_id, bool(c.hidden_label), "bootstrap")
        for c in corpus.iter_candidates()
    )


def _split_labeled(
    labeled: LabeledCandidateSet, rng: np.random.Generator
) -> tuple[LabeledCandidateSet, LabeledCandidateSet]:
    """80-20 train/validation split; nudges a positive and a negative into
    the train side when a shuffle would leave it single-class."""
    entries = list(labeled.entries)
    n = len(entries)
    if n < 5:
        return LabeledCandidateSet(entries), LabeledCandidateSet(entries)
    order = rng.permutation(n)
    n_val = max(1, int(round(0.2 * n)))
    val_idx = set(int(i) for i in order[:n_val])
    train_entries = [entries[i] for i in range(n) if i not in val_idx]
    val_entries = [entries[i] for i in sorted(val_idx)]
    train_labels = {e.label for e in train_entries}
    if len(train_labels) < 2:
        missing = not next(iter(train_labels))
        for e in list(val_entries):
            if e.label == missing:
                val_entries.remove(e)
                train_entries.append(e)
                break
    return LabeledCandidateSet(train_entries), LabeledCandidateSet(val_entries)


def _fit_calibrators(
    scorer: TrainedScorer,
    labeled: LabeledCandidateSet,
    round_index: int,
    config: ExperimentConfig,
) -> CalibratorSet:
    curves = {}
    for field_id, entries in labeled.by_field().items():
        if field_id not in scorer.field_ids or not entries:
            continue
        enc = scorer.encoder
        feats = np.asarray([e.features for e in entries], dtype=np.float64)
        idx = np.full(len(entries), enc.field_index(field_id), dtype=np.int64)
        scores = scorer.score_batch(feats, idx)
        pairs = [(float(s), e.label) for s, e in zip(scores, entries)]
        curves[field_id] = fit_calibrator(
            pairs, field_id, num_bins=config.num_bins, floor_threshold=config.floor_threshold
        )
    return CalibratorSet(round_index=round_index, curves=curves)


def _evaluate(
    scorer: TrainedScorer, test_corpus: Corpus
) -> tuple[float, dict[str, float]]:
    results = evaluation.evaluate_corpus(scorer, test_corpus)
    per_field = {r.field_id: r.max_f1 for r in results}
    f1 = float(np.mean([r.max_f1 for r in results])) if results else 0.0
    return f1, per_field


def bootstrap(
    config: ExperimentConfig,
    train_corpus: Corpus,
    test_corpus: Corpus,
    init_scorer: TrainedScorer | None = None,
) -> ExperimentState:
    """Classically label a random document sample and train the initial model.

    `init_scorer` (a loaded checkpoint) replaces the initial training run;
    the bootstrap documents are still labeled and thresholds/calibrators are
    refit on them so the state stays self-consistent.
    """
    config.validate()
    question_budget = oracle.compute_question_budget(
        len(train_corpus),
        config.budget_fraction,
        config.bootstrap_docs,
        config.cost_full_doc_seconds,
        config.cost_question_seconds,
    )
    del question_budget  # validated above; per-round k reads the ledger
    ledger = BudgetLedger(
        total_seconds=len(train_corpus) * config.cost_full_doc_seconds * config.budget_fraction,
        cost_full_doc_seconds=config.cost_full_doc_seconds,
        cost_question_seconds=config.cost_question_seconds,
    )
    store = LabelStore()
    rng = _sub_rng(config.seed, _TAG_BOOTSTRAP, 0)
    pool_ids = list(train_corpus.doc_ids)
    if config.bootstrap_docs > len(pool_ids):
        raise ValidationError(
            f"bootstrap_docs {config.bootstrap_docs} exceeds pool size {len(pool_ids)}"
        )
    chosen = sorted(
        pool_ids[int(i)] for i in rng.choice(len(pool_ids), size=config.bootstrap_docs, replace=False)
    )
    for doc_id in chosen:
        oracle.label_full_document(store, train_corpus, doc_id, ledger)

    encoder = FeatureEncoder(train_corpus.field_ids, train_corpus.feature_dim)
    labeled = labeled_set_from_store(train_corpus, store)
    train_set, val_set = _split_labeled(labeled, _sub_rng(config.seed, _TAG_SPLIT, 0))
    if init_scorer is not None:
        if init_scorer.feature_dim != encoder.feature_dim or tuple(
            init_scorer.field_ids
        ) != tuple(encoder.field_ids):
            raise ValidationError("scorer checkpoint does not match the corpus schema")
        model = dataclasses.replace(init_scorer, training_round=0)
    else:
        model = train(
            config.scorer_config(seed=_sub_seed(config.seed, _TAG_TRAIN, 0)),
            train_set,
            val_set,
            encoder=encoder,
            training_round=0,
        )
    model = model.with_thresholds(fit_field_thresholds(model, val_set))
    calibrators = (
        _fit_calibrators(model, labeled, 0, config) if config.calibrate_scores else None
    )
    f1, per_field = _evaluate(model, test_corpus)
    report = RoundReport(
        round_index=0,
        questions_asked=0,
        yes_count=0,
        no_count=0,
        inferred_negatives=0,
        seconds_spent_cumulative=ledger.spent_seconds,
        avg_e2e_max_f1=f1,
        per_field_f1=per_field,
        gap_closed_so_far=(
            evaluation.gap_closed(f1, f1, config.full_f1)
            if config.full_f1 is not None
            else None
        ),
    )
    return ExperimentState(
        store=store,
        ledger=ledger,
        scorer=model,
        calibrators=calibrators,
        reports=[report],
        bootstrap_doc_ids=tuple(chosen),
    )


def _per_round_k(state: ExperimentState, config: ExperimentConfig) -> int:
    remaining_q = int(state.ledger.remaining_seconds // config.cost_question_seconds)
    if config.k > 0:
        return min(config.k, remaining_q)
    remaining_rounds = max(1, config.rounds - state.completed_rounds)
    return max(1, remaining_q // remaining_rounds) if remaining_q > 0 else 0


def run_round(
    state: ExperimentState,
    config: ExperimentConfig,
    train_corpus: Corpus,
    test_corpus: Corpus,
    answer_source: AnswerSource | None = None,
) -> RoundReport:
    """One select-annotate-infer-retrain-evaluate cycle; mutates state."""
    r = state.completed_rounds + 1
    k = _per_round_k(state, config)
    if k <= 0:
        raise ConsistencyError("round started with no remaining question budget")
    if answer_source is None:
        answer_source = SimulatedAnswerSource(train_corpus, state.store, state.ledger, config)

    ranked = acquisition.rank_pool(
        list(train_corpus.iter_candidates()),
        state.scorer,
        state.calibrators if config.calibrate_scores else None,
        metric=config.metric,
        threshold=config.uncertainty_threshold,
        label_store=state.store,
        variance_passes=config.variance_passes,
        seed=_sub_seed(config.seed, _TAG_RANK, r),
    )
    sampler_config = SamplerConfig(
        strategy=config.strategy,
        k=k,
        k_prime=min(k, max(1, math.ceil(config.k_prime_fraction * k))),
        n=max(k, config.top_n if config.top_n > 0 else 2 * k),
        cap_m=config.cap_m if config.cap_candidates else UNCAPPED,
        uncertainty_threshold=config.uncertainty_threshold,
        seed=_sub_seed(config.seed, _TAG_SAMPLER, r),
    )
    batch = acquisition.select_batch(
        ranked, sampler_config, rng=_sub_rng(config.seed, _TAG_SAMPLER, r)
    )
    answers = answer_source.collect(batch, r)
    yes = sum(1 for _, a in answers if a == "yes")
    no = len(answers) - yes

    inferred = (
        oracle.infer_negatives(state.store, train_corpus)
        if config.auto_infer_negatives
        else 0
    )

    labeled = labeled_set_from_store(train_corpus, state.store)
    train_set, val_set = _split_labeled(labeled, _sub_rng(config.seed, _TAG_SPLIT, r))
    model = train(
        config.scorer_config(seed=_sub_seed(config.seed, _TAG_TRAIN, r), warm=config.warm_start),
        train_set,
        val_set,
        encoder=state.scorer.encoder,
        init=state.scorer.parameters if config.warm_start else None,
        training_round=r,
    )
    model = model.with_thresholds(fit_field_thresholds(model, val_set))
    state.scorer = model
    state.calibrators = (
        _fit_calibrators(model, labeled, r, config) if config.calibrate_scores else None
    )

    f1, per_field = _evaluate(model, test_corpus)
    report = RoundReport(
        round_index=r,
        questions_asked=len(answers),
        yes_count=yes,
        no_count=no,
        inferred_negatives=inferred,
        seconds_spent_cumulative=state.ledger.spent_seconds,
        avg_e2e_max_f1=f1,
        per_field_f1=per_field,
        gap_closed_so_far=(
            evaluation.gap_closed(state.initial_f1, f1, config.full_f1)
            if config.full_f1 is not None
            else None
        ),
    )
    state.reports.append(report)
    state.completed_rounds = r
    return report


def _run_full_labeling(
    state: ExperimentState,
    config: ExperimentConfig,
    train_corpus: Corpus,
    test_corpus: Corpus,
) -> RoundReport:
    """Reference upper bound: fine-tune the bootstrap model on the fully
    labeled pool, ignoring the annotation budget."""
    labeled = full_labeled_set(train_corpus)
    train_set, val_set = _split_labeled(labeled, _sub_rng(config.seed, _TAG_FULL, 0))
    model = train(
        config.scorer_config(seed=_sub_seed(config.seed, _TAG_FULL, 1), warm=True),
        train_set,
        val_set,
        encoder=state.scorer.encoder,
        init=state.scorer.parameters,
        training_round=1,
    )
    model = model.with_thresholds(fit_field_thresholds(model, val_set))
    state.scorer = model
    state.calibrators = (
        _fit_calibrators(model, labeled, 1, config) if config.calibrate_scores else None
    )
    f1, per_field = _evaluate(model, test_corpus)
    report = RoundReport(
        round_index=1,
        questions_asked=0,
        yes_count=0,
        no_count=0,
        inferred_negatives=0,
        seconds_spent_cumulative=state.ledger.spent_seconds,
        avg_e2e_max_f1=f1,
        per_field_f1=per_field,
        gap_closed_so_far=None,
    )
    state.reports.append(report)
    state.completed_rounds = 1
    return report


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    reports: list[RoundReport]
    initial_f1: float
    final_f1: float
    questions_asked: int
    question_budget: int
    seconds_spent: float
    stop_reason: str
    gap_closed: float | None = None

    def to_dict(self) -> dict:
        return {
            "config": dict(sorted(self.config.items())),
            "initial_f1": self.initial_f1,
            "final_f1": self.final_f1,
            "questions_asked": self.questions_asked,
            "question_budget": self.question_budget,
            "seconds_spent": self.seconds_spent,
            "stop_reason": self.stop_reason,
            "gap_closed": self.gap_closed,
            "rounds": [r.to_dict() for r in self.reports],
        }


def _target_reached(config: ExperimentConfig, f1: float) -> bool:
    return config.target_f1 is not None and f1 >= config.target_f1


def _unlabeled_remaining(corpus: Corpus, store: LabelStore) -> bool:
    return store.labeled_count() < corpus.num_candidates


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    answer_source_factory: Callable[[ExperimentState, Corpus], AnswerSource] | None = None,
    state: ExperimentState | None = None,
    init_scorer: TrainedScorer | None = None,
    round_callback: Callable[[ExperimentState, RoundReport], None] | None = None,
) -> ExperimentReport:
    """Run (or resume, when `state` is given) a whole experiment.

    Stops at the round limit, budget exhaustion, an exhausted pool, or the
    target F1. When out_dir is set, writes a checkpoint per round plus
    rounds.csv / fields.csv / summary.json.
    """
    config.validate()
    train_corpus = load_corpus(config.train_corpus)
    test_corpus = load_corpus(config.test_corpus)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    if state is None:
        state = bootstrap(config, train_corpus, test_corpus, init_scorer=init_scorer)
        _checkpoint(state, out_path)

    stop_reason = "rounds"
    if config.mode == "initial":
        stop_reason = "mode"
    elif _target_reached(config, state.latest_f1):
        stop_reason = "target"
    elif config.mode == "full":
        if state.completed_rounds == 0:
            _run_full_labeling(state, config, train_corpus, test_corpus)
            _checkpoint(state, out_path)
        stop_reason = "mode"
    else:
        source = (
            answer_source_factory(state, train_corpus)
            if answer_source_factory is not None
            else SimulatedAnswerSource(train_corpus, state.store, state.ledger, config)
        )
        while state.completed_rounds < config.rounds:
            if state.ledger.remaining_seconds < config.cost_question_seconds:
                stop_reason = "budget"
                break
            if not _unlabeled_remaining(train_corpus, state.store):
                stop_reason = "pool_exhausted"
                break
            report = run_round(state, config, train_corpus, test_corpus, source)
            _checkpoint(state, out_path)
            if round_callback is not None:
                round_callback(state, report)
            if _target_reached(config, report.avg_e2e_max_f1):
                stop_reason = "target"
                break

    question_budget = oracle.compute_question_budget(
        len(train_corpus),
        config.budget_fraction,
        config.bootstrap_docs,
        config.cost_full_doc_seconds,
        config.cost_question_seconds,
    )
    gap = None
    if config.full_f1 is not None:
        gap = evaluation.gap_closed(state.initial_f1, state.latest_f1, config.full_f1)
    result = ExperimentReport(
        config=config.to_dict(),
        reports=list(state.reports),
        initial_f1=state.initial_f1,
        final_f1=state.latest_f1,
        questions_asked=sum(r.questions_asked for r in state.reports),
        question_budget=question_budget,
        seconds_spent=state.ledger.spent_seconds,
        stop_reason=stop_reason,
        gap_closed=gap,
    )
    if out_path is not None:
        write_reports(result, state, test_corpus, out_path)
    return result


def resume_experiment(
    config: ExperimentConfig,
    out_dir: str | Path,
    *,
    answer_source_factory: Callable[[ExperimentState, Corpus], AnswerSource] | None = None,
) -> ExperimentReport:
    """Continue from the newest checkpoint in out_dir."""
    out_path = Path(out_dir)
    checkpoints = sorted(out_path.glob("state_round_*.json"))
    if not checkpoints:
        raise ValidationError(f"no checkpoints to resume in {out_dir}")
    state = ExperimentState.load(checkpoints[-1])
    return run_experiment(
        config,
        out_dir,
        answer_source_factory=answer_source_factory,
        state=state,
    )


def _checkpoint(state: ExperimentState, out_path: Path | None) -> None:
    if out_path is not None:
        state.save(out_path / f"state_round_{state.completed_rounds:02d}.json")


def write_reports(
    result: ExperimentReport,
    state: ExperimentState,
    test_corpus: Corpus,
    out_path: Path,
) -> None:
    rounds_csv = ["round,questions_asked,yes_count,no_count,inferred_negatives,"
                  "seconds_spent_cumulative,avg_e2e_max_f1,gap_closed_so_far"]
    for r in state.reports:
        if r.round_index == 0:
            continue
        gap = "" if r.gap_closed_so_far is None else f"{r.gap_closed_so_far:.3f}"
        rounds_csv.append(
            f"{r.round_index},{r.questions_asked},{r.yes_count},{r.no_count},"
            f"{r.inferred_negatives},{r.seconds_spent_cumulative:.1f},"
            f"{r.avg_e2e_max_f1:.6f},{gap}"
        )
    (out_path / "rounds.csv").write_text("\n".join(rounds_csv) + "\n", encoding="utf-8")

    fields_csv = ["field_id,coverage,max_f1,best_threshold,precision,recall"]
    for fr in evaluation.evaluate_corpus(state.scorer, test_corpus):
        fields_csv.append(
            f"{fr.field_id},{fr.coverage:.6f},{fr.max_f1:.6f},"
            f"{fr.best_threshold:.6f},{fr.precision:.6f},{fr.recall:.6f}"
        )
    (out_path / "fields.csv").write_text("\n".join(fields_csv) + "\n", encoding="utf-8")

    (out_path / "ledger.csv").write_text(
        "\n".join(state.ledger.csv_rows()) + "\n", encoding="utf-8"
    )
    if state.calibrators is not None:
        rows = ["field_id,bin_edge_low,bin_edge_high,value"]
        for field_id, curve in sorted(state.calibrators.curves.items()):
            for lo, hi, value in calibration_csv_rows(curve):
                rows.append(f"{field_id},{lo!r},{hi!r},{value!r}")
        (out_path / "calibration.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    save_scorer(state.scorer, out_path / "scorer.json")

    (out_path / "summary.json").write_text(
        json.dumps(result.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )
