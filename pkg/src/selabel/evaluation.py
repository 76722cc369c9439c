"""End-to-end extraction metrics: per-field max F1, macro average, gap closed.

A field's score is the best document-level F1 over a sweep of extraction
thresholds: at threshold t the extractor emits, for each document, its
top-scoring candidate when that score is >= t, and the emission counts as
correct when the candidate is a true positive. Predictions on documents
that do not actually contain the field count against precision. Fields
absent from the whole test corpus are excluded from the macro average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationCurve
from .corpus import Corpus
from .errors import ValidationError
from .scorer import TrainedScorer


@dataclass(frozen=True, slots=True)
class Prediction:
    doc_id: str
    top_score: float
    is_correct: bool


@dataclass(frozen=True, slots=True)
class FieldEvalResult:
    field_id: str
    max_f1: float
    best_threshold: float
    precision: float
    recall: float
    coverage: float  # fraction of field-present docs with any positive candidate
    present_docs: int
    predictions: int


def max_f1_sweep(
    predictions: list[Prediction] | list[tuple[str, float, bool]],
    ground_truth_docs: int,
) -> tuple[float, float]:
    """Best F1 over thresholds drawn from the distinct scores plus 0.

    At threshold t, entries with top_score >= t are predicted. Returns
    (max_f1, smallest threshold achieving it).
    """
    f1, t, _p, _r = _sweep_details(predictions, ground_truth_docs)
    return f1, t


def _sweep_details(
    predictions, ground_truth_docs: int
) -> tuple[float, float, float, float]:
    if ground_truth_docs <= 0:
        raise ValidationError("field has no ground-truth documents; skip it")
    entries = [
        p if isinstance(p, Prediction) else Prediction(p[0], float(p[1]), bool(p[2]))
        for p in predictions
    ]
    if not entries:
        return 0.0, 0.0, 0.0, 0.0
    scores = np.asarray([p.top_score for p in entries])
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError("prediction scores must lie in [0, 1]")
    correct = np.asarray([p.is_correct for p in entries], dtype=np.int64)

    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    tp = np.cumsum(correct[order])

    best = (0.0, 0.0, 0.0, 0.0)  # f1, threshold, precision, recall
    thresholds: list[tuple[float, int]] = []  # (threshold, predicted_count)
    n = len(s)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        thresholds.append((float(s[i]), j + 1))
        i = j + 1
    if not thresholds or thresholds[-1][0] > 0.0:
        thresholds.append((0.0, n))

    # ascending order so ties resolve to the smallest threshold; F1 in
    # integer-ratio form so mathematically equal values tie exactly
    for t, predicted in reversed(thresholds):
        c = int(tp[predicted - 1])
        f1 = 2.0 * c / (predicted + ground_truth_docs)
        if f1 > best[0]:
            best = (f1, t, c / predicted, c / ground_truth_docs)
    return best


def field_predictions(
    scorer: TrainedScorer, corpus: Corpus, field_id: str
) -> tuple[list[Prediction], int]:
    """Top-candidate predictions per document plus the present-doc count."""
    predictions: list[Prediction] = []
    present = 0
    for doc in corpus.documents:
        cands = [c for c in doc.candidates if c.field_id == field_id]
        if field_id in doc.fields_present:
            present += 1
        if not cands:
            continue
        cands.sort(key=lambda c: c.candidate_id)
        scores = scorer.score_candidates(cands)
        top = int(np.argmax(scores))  # first max = smallest candidate_id
        predictions.append(
            Prediction(doc.doc_id, float(scores[top]), bool(cands[top].hidden_label))
        )
    return predictions, present


def field_coverage(corpus: Corpus, field_id: str) -> float:
    """Fraction of field-present documents whose candidates include a true
    positive; an upper bound on the field's extraction recall."""
    present = 0
    covered = 0
    for doc in corpus.documents:
        if field_id not in doc.fields_present:
            continue
        present += 1
        if any(c.hidden_label for c in doc.candidates if c.field_id == field_id):
            covered += 1
    return covered / present if present else 0.0


def evaluate_field(
    scorer: TrainedScorer, corpus: Corpus, field_id: str
) -> FieldEvalResult | None:
    """None when the field never occurs in the corpus (excluded from macro)."""
    predictions, present = field_predictions(scorer, corpus, field_id)
    if present == 0:
        return None
    f1, t, precision, recall = _sweep_details(predictions, present)
    return FieldEvalResult(
        field_id=field_id,
        max_f1=f1,
        best_threshold=t,
        precision=precision,
        recall=recall,
        coverage=field_coverage(corpus, field_id),
        present_docs=present,
        predictions=len(predictions),
    )


def evaluate_corpus(scorer: TrainedScorer, corpus: Corpus) -> list[FieldEvalResult]:
    results = []
    for field_id in scorer.field_ids:
        r = evaluate_field(scorer, corpus, field_id)
        if r is not None:
            results.append(r)
    return results


def average_e2e_max_f1(scorer: TrainedScorer, corpus: Corpus) -> float:
    """Unweighted mean of per-field max F1 over evaluable fields."""
    results = evaluate_corpus(scorer, corpus)
    if not results:
        return 0.0
    return float(np.mean([r.max_f1 for r in results]))


def gap_closed(initial_f1: float, achieved_f1: float, full_f1: float) -> float | None:
    """Percentage of the initial-to-full gap covered; None when the gap is
    zero (undefined). Can exceed 100 when selective beats full labeling."""
    gap = full_f1 - initial_f1
    if gap == 0.0:
        return None
    return 100.0 * (achieved_f1 - initial_f1) / gap


def calibration_error(
    curve: CalibrationCurve, held_out: list[tuple[float, bool]]
) -> float:
    """Count-weighted mean |bin positive rate - bin value| on held-out data."""
    if not held_out:
        raise ValidationError("need at least one held-out example")
    scores = np.asarray([s for s, _ in held_out], dtype=np.float64)
    labels = np.asarray([bool(l) for _, l in held_out], dtype=np.float64)
    edges = np.asarray(curve.bin_edges)
    which = np.clip(np.searchsorted(edges, scores, side="right") - 1, 0, len(edges) - 2)
    total = len(scores)
    err = 0.0
    for b in range(len(edges) - 1):
        in_bin = which == b
        count = int(in_bin.sum())
        if count == 0:
            continue
        prevalence = float(labels[in_bin].mean())
        err += (count / total) * abs(prevalence - curve.bin_values[b])
    return err
