"""Hidden-label oracle, label bookkeeping, and the annotation budget ledger.

All labeling flows through here: full-document bootstrap labeling (charged
at the classic per-document rate), yes/no questions (charged per question),
and free negative inference for non-repeating fields. The ledger is an
append-only log whose entries replay exactly to the spent total; entry
timestamps are logical sequence numbers so replays and resumed runs stay
byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .corpus import Corpus
from .errors import (
    BudgetExhaustedError,
    ConsistencyError,
    DuplicateDocumentError,
    DuplicateQuestionError,
    ValidationError,
)

COST_FULL_DOC_SECONDS = 360.0
COST_QUESTION_SECONDS = 10.0


class LabelState(str, Enum):
    UNLABELED = "unlabeled"
    BOOTSTRAP_POS = "bootstrap_pos"
    BOOTSTRAP_NEG = "bootstrap_neg"
    HUMAN_POS = "human_pos"
    HUMAN_NEG = "human_neg"
    INFERRED_NEG = "inferred_neg"


POSITIVE_STATES = frozenset({LabelState.BOOTSTRAP_POS, LabelState.HUMAN_POS})
NEGATIVE_STATES = frozenset(
    {LabelState.BOOTSTRAP_NEG, LabelState.HUMAN_NEG, LabelState.INFERRED_NEG}
)

_SOURCE = {
    LabelState.BOOTSTRAP_POS: "bootstrap",
    LabelState.BOOTSTRAP_NEG: "bootstrap",
    LabelState.HUMAN_POS: "human",
    LabelState.HUMAN_NEG: "human",
    LabelState.INFERRED_NEG: "inferred",
}


class LabelStore:
    """Per-candidate label state; unlabeled candidates are simply absent.

    Human and bootstrap labels are final: inference may only move a
    candidate from unlabeled to inferred_neg.
    """

    def __init__(self):
        self._states: dict[str, LabelState] = {}

    def state(self, candidate_id: str) -> LabelState:
        return self._states.get(candidate_id, LabelState.UNLABELED)

    def is_labeled(self, candidate_id: str) -> bool:
        return candidate_id in self._states

    def set_human(self, candidate_id: str, positive: bool) -> None:
        if candidate_id in self._states:
            raise DuplicateQuestionError(f"{candidate_id} already labeled")
        self._states[candidate_id] = (
            LabelState.HUMAN_POS if positive else LabelState.HUMAN_NEG
        )

    def set_bootstrap(self, candidate_id: str, positive: bool) -> None:
        if candidate_id in self._states:
            raise ConsistencyError(f"{candidate_id} already labeled")
        self._states[candidate_id] = (
            LabelState.BOOTSTRAP_POS if positive else LabelState.BOOTSTRAP_NEG
        )

    def set_inferred_negative(self, candidate_id: str) -> None:
        if candidate_id in self._states:
            raise ConsistencyError(
                f"inference may not overwrite label of {candidate_id}"
            )
        self._states[candidate_id] = LabelState.INFERRED_NEG

    def items(self) -> Iterator[tuple[str, LabelState]]:
        return iter(self._states.items())

    def labeled_count(self) -> int:
        return len(self._states)

    def label_of(self, candidate_id: str) -> bool:
        state = self.state(candidate_id)
        if state is LabelState.UNLABELED:
            raise ConsistencyError(f"{candidate_id} is unlabeled")
        return state in POSITIVE_STATES

    def source_of(self, candidate_id: str) -> str:
        return _SOURCE[self._states[candidate_id]]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {s.value: 0 for s in LabelState if s is not LabelState.UNLABELED}
        for state in self._states.values():
            out[state.value] += 1
        return out

    def to_dict(self) -> dict[str, str]:
        return {cid: state.value for cid, state in sorted(self._states.items())}

    @staticmethod
    def from_dict(raw: dict[str, str]) -> "LabelStore":
        store = LabelStore()
        store._states = {cid: LabelState(v) for cid, v in raw.items()}
        return store


@dataclass(frozen=True, slots=True)
class LedgerEntry:
    seq: int  # logical timestamp: strictly increasing event counter
    kind: str  # full_doc | question
    id: str
    seconds: float


class BudgetLedger:
    """Seconds-denominated annotation accounting with an append-only log."""

    def __init__(
        self,
        total_seconds: float,
        cost_full_doc_seconds: float = COST_FULL_DOC_SECONDS,
        cost_question_seconds: float = COST_QUESTION_SECONDS,
    ):
        if total_seconds < 0:
            raise ValidationError("total_seconds must be non-negative")
        self.total_seconds = float(total_seconds)
        self.cost_full_doc_seconds = float(cost_full_doc_seconds)
        self.cost_question_seconds = float(cost_question_seconds)
        self.entries: list[LedgerEntry] = []
        self.spent_seconds = 0.0

    @property
    def remaining_seconds(self) -> float:
        return self.total_seconds - self.spent_seconds

    def can_afford(self, seconds: float) -> bool:
        return self.spent_seconds + seconds <= self.total_seconds

    def _charge(self, kind: str, id_: str, seconds: float) -> None:
        if not self.can_afford(seconds):
            raise BudgetExhaustedError(
                f"charge of {seconds}s exceeds remaining {self.remaining_seconds}s"
            )
        self.entries.append(LedgerEntry(len(self.entries), kind, id_, seconds))
        self.spent_seconds += seconds

    def charge_question(self, candidate_id: str) -> None:
        self._charge("question", candidate_id, self.cost_question_seconds)

    def charge_full_doc(self, doc_id: str) -> None:
        self._charge("full_doc", doc_id, self.cost_full_doc_seconds)

    def replay_total(self) -> float:
        return float(sum(e.seconds for e in self.entries))

    def csv_rows(self) -> list[str]:
        rows = ["seq,kind,id,seconds"]
        rows += [f"{e.seq},{e.kind},{e.id},{e.seconds:g}" for e in self.entries]
        return rows

    def to_dict(self) -> dict:
        return {
            "total_seconds": self.total_seconds,
            "cost_full_doc_seconds": self.cost_full_doc_seconds,
            "cost_question_seconds": self.cost_question_seconds,
            "entries": [[e.seq, e.kind, e.id, e.seconds] for e in self.entries],
        }

    @staticmethod
    def from_dict(raw: dict) -> "BudgetLedger":
        ledger = BudgetLedger(
            total_seconds=float(raw["total_seconds"]),
            cost_full_doc_seconds=float(raw["cost_full_doc_seconds"]),
            cost_question_seconds=float(raw["cost_question_seconds"]),
        )
        for seq, kind, id_, seconds in raw["entries"]:
            ledger.entries.append(LedgerEntry(int(seq), str(kind), str(id_), float(seconds)))
            ledger.spent_seconds += float(seconds)
        return ledger


@dataclass(frozen=True, slots=True)
class AnnotatorConfig:
    noise_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValidationError("noise_rate must be in [0, 1]")


class Annotator:
    """Simulated human: reveals hidden labels, optionally flipping answers."""

    def __init__(self, config: AnnotatorConfig, rng: np.random.Generator | None = None):
        config.validate()
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)


def apply_answer(
    store: LabelStore, candidate_id: str, positive: bool, ledger: BudgetLedger
) -> None:
    """Record one yes/no answer and charge for it; shared by the simulated
    oracle and the live annotation service. No charge on failure."""
    if store.is_labeled(candidate_id):
        raise DuplicateQuestionError(f"{candidate_id} already labeled")
    if not ledger.can_afford(ledger.cost_question_seconds):
        raise BudgetExhaustedError(
            f"cannot afford a question ({ledger.remaining_seconds:.0f}s left)"
        )
    ledger.charge_question(candidate_id)
    store.set_human(candidate_id, positive)


def answer_question(
    store: LabelStore,
    corpus: Corpus,
    candidate_id: str,
    annotator: Annotator,
    ledger: BudgetLedger,
) -> str:
    """Answer from the hidden label, flipped with probability noise_rate.

    Returns "yes" or "no"; the store records what was answered, not the
    truth, so noisy annotators leave wrong labels behind by design.
    """
    candidate = corpus.candidate(candidate_id)
    if store.is_labeled(candidate_id):
        raise DuplicateQuestionError(f"{candidate_id} already labeled")
    if not ledger.can_afford(ledger.cost_question_seconds):
        raise BudgetExhaustedError(
            f"cannot afford a question ({ledger.remaining_seconds:.0f}s left)"
        )
    answer = bool(candidate.hidden_label)
    if annotator.config.noise_rate > 0.0:
        if annotator.rng.random() < annotator.config.noise_rate:
            answer = not answer
    apply_answer(store, candidate_id, answer, ledger)
    return "yes" if answer else "no"


def label_full_document(
    store: LabelStore, corpus: Corpus, doc_id: str, ledger: BudgetLedger
) -> int:
    """Classic annotation of a whole document: every candidate gets a
    bootstrap label from the hidden truth for one flat per-document charge."""
    doc = corpus.doc(doc_id)
    if any(
        store.state(c.candidate_id)
        in (LabelState.BOOTSTRAP_POS, LabelState.BOOTSTRAP_NEG)
        for c in doc.candidates
    ):
        raise DuplicateDocumentError(f"{doc_id} already bootstrap-labeled")
    if not ledger.can_afford(ledger.cost_full_doc_seconds):
        raise BudgetExhaustedError(
            f"cannot afford a full document ({ledger.remaining_seconds:.0f}s left)"
        )
    ledger.charge_full_doc(doc_id)
    written = 0
    for c in doc.candidates:
        if not store.is_labeled(c.candidate_id):
            store.set_bootstrap(c.candidate_id, bool(c.hidden_label))
            written += 1
    return written


def infer_negatives(store: LabelStore, corpus: Corpus) -> int:
    """Mark remaining candidates of confirmed non-repeating fields negative.

    Wherever a (doc, field) group of a non-repeating field has a bootstrap
    or human positive, every still-unlabeled candidate of the group becomes
    inferred_neg at zero annotation cost. Never touches existing labels;
    calling it twice infers nothing new.
    """
    non_repeating = {f.field_id for f in corpus.schema if not f.repeating}
    inferred = 0
    for doc in corpus.documents:
        confirmed: set[str] = set()
        for c in doc.candidates:
            if (
                c.field_id in non_repeating
                and store.state(c.candidate_id) in POSITIVE_STATES
            ):
                confirmed.add(c.field_id)
        if not confirmed:
            continue
        for c in doc.candidates:
            if c.field_id in confirmed and not store.is_labeled(c.candidate_id):
                store.set_inferred_negative(c.candidate_id)
                inferred += 1
    return inferred


def compute_question_budget(
    num_docs: int,
    budget_fraction: float,
    bootstrap_docs: int,
    cost_full_doc_seconds: float = COST_FULL_DOC_SECONDS,
    cost_question_seconds: float = COST_QUESTION_SECONDS,
) -> int:
    """Number of yes/no questions affordable after paying for the bootstrap.

    The total budget is the given fraction of what classic annotation of
    the whole pool would cost; the bootstrap documents' classic-annotation
    cost is subtracted before converting to questions.
    """
    if not 0.0 < budget_fraction <= 1.0:
        raise ValidationError("budget_fraction must be in (0, 1]")
    if num_docs <= 0:
        raise ValidationError("num_docs must be positive")
    if bootstrap_docs < 0:
        raise ValidationError("bootstrap_docs must be non-negative")
    total = num_docs * cost_full_doc_seconds * budget_fraction
    bootstrap_cost = bootstrap_docs * cost_full_doc_seconds
    if bootstrap_cost > total:
        raise ValidationError(
            f"bootstrap cost {bootstrap_cost:.0f}s exceeds budget {total:.0f}s"
        )
    return int(math.floor((total - bootstrap_cost) / cost_question_seconds))
