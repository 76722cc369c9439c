"""Uncertainty ranking and budgeted batch selection of yes/no questions.

Candidates are ranked by one of three uncertainty metrics computed on
calibrated scores: distance of the score from a threshold, binary entropy
(an equivalent ordering at threshold 0.5), or variance over stochastic
dropout passes. Selection then walks the ranking under a per-(document,
field) cap, optionally blending in uniform random picks for diversity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import CalibratorSet
from .corpus import Candidate
from .errors import ConsistencyError, ValidationError
from .oracle import LabelStore
from .scorer import TrainedScorer, forward

METRICS = ("score_distance", "entropy", "variance")
STRATEGIES = ("top_k", "top_k_plus_random", "random_from_top_n", "pure_random")

UNCAPPED = 10**9  # effectively disables the per-(doc, field) cap


@dataclass(frozen=True, slots=True)
class UncertaintyScore:
    candidate_id: str
    doc_id: str
    field_id: str
    raw_score: float
    calibrated_score: float
    metric: str
    value: float


@dataclass(frozen=True, slots=True)
class SamplerConfig:
    strategy: str = "top_k_plus_random"
    k: int = 100
    k_prime: int = 90
    n: int = 200
    cap_m: int = 1
    uncertainty_threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.k <= 0:
            raise ValidationError("k must be positive")
        if self.cap_m < 1:
            raise ValidationError("cap_m must be >= 1")
        if self.strategy == "top_k_plus_random" and not 0 < self.k_prime <= self.k:
            raise ValidationError("need 0 < k_prime <= k")
        if self.strategy == "random_from_top_n" and self.n < self.k:
            raise ValidationError("need n >= k")
        if not 0.0 <= self.uncertainty_threshold <= 1.0:
            raise ValidationError("uncertainty_threshold must be in [0, 1]")


def uncertainty_score_distance(calibrated_score: float, threshold: float) -> float:
    """1 - |score - threshold|: maximal exactly at the threshold."""
    return 1.0 - abs(calibrated_score - threshold)


def uncertainty_entropy(calibrated_score: float) -> float:
    """Binary entropy in bits, with 0*log(0) taken as 0."""
    p = calibrated_score
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _entropy_many(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    q = p[interior]
    out[interior] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return out


def rank_pool(
    candidates: Sequence[Candidate],
    scorer: TrainedScorer,
    calibrators: CalibratorSet | None,
    metric: str = "score_distance",
    threshold: float = 0.5,
    *,
    label_store: LabelStore | None = None,
    variance_passes: int = 10,
    seed: int = 0,
) -> list[UncertaintyScore]:
    """Rank unlabeled candidates by uncertainty, most uncertain first.

    Calibrators must have been fitted for the scorer's current round (pass
    None to rank on raw scores). Already-labeled candidates are dropped.
    Ties break by ascending candidate_id.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    if calibrators is not None and calibrators.round_index != scorer.training_round:
        raise ConsistencyError(
            f"calibrators fitted for round {calibrators.round_index}, "
            f"scorer is at round {scorer.training_round}"
        )
    pool = [
        c
        for c in candidates
        if label_store is None or not label_store.is_labeled(c.candidate_id)
    ]
    if not pool:
        return []

    enc = scorer.encoder
    feats = np.asarray([c.features for c in pool], dtype=np.float64)
    fidx = np.asarray([enc.field_index(c.field_id) for c in pool], dtype=np.int64)
    raw = scorer.score_batch(feats, fidx)

    def calibrate_rows(rows: np.ndarray) -> np.ndarray:
        if calibrators is None:
            return rows
        out = np.array(rows, dtype=np.float64, copy=True)
        for fi in np.unique(fidx):
            field_id = enc.field_ids[fi]
            cols = fidx == fi
            out[..., cols] = calibrators.calibrate(field_id, rows[..., cols])
        return out

    calibrated = calibrate_rows(raw)
    if metric == "score_distance":
        values = 1.0 - np.abs(calibrated - threshold)
    elif metric == "entropy":
        values = _entropy_many(calibrated)
    else:
        values = _variance_values(scorer, enc, feats, fidx, calibrate_rows, variance_passes, seed)

    scored = [
        UncertaintyScore(
            candidate_id=c.candidate_id,
            doc_id=c.doc_id,
            field_id=c.field_id,
            raw_score=float(raw[i]),
            calibrated_score=float(calibrated[i]),
            metric=metric,
            value=float(values[i]),
        )
        for i, c in enumerate(pool)
    ]
    scored.sort(key=lambda u: (-u.value, u.candidate_id))
    return scored


def _variance_values(
    scorer: TrainedScorer,
    enc,
    feats: np.ndarray,
    fidx: np.ndarray,
    calibrate_rows,
    passes: int,
    seed: int,
) -> np.ndarray:
    if passes < 2:
        raise ValidationError("variance metric needs passes >= 2")
    if scorer.hidden_units == 0 or scorer.dropout_rate == 0.0:
        return np.zeros(feats.shape[0])  # no stochasticity: variance exactly 0
    x = enc.encode(feats, fidx)
    rng = np.random.default_rng(seed)
    keep = 1.0 - scorer.dropout_rate
    rows = np.empty((passes, feats.shape[0]))
    for p in range(passes):
        mask = (rng.random(scorer.hidden_units) < keep).astype(np.float64) / keep
        rows[p] = forward(scorer.parameters, x, scorer.hidden_units, mask)
    return calibrate_rows(rows).var(axis=0)


class _CapTracker:
    def __init__(self, cap_m: int):
        self.cap = cap_m
        self.counts: dict[tuple[str, str], int] = {}

    def admit(self, item: UncertaintyScore) -> bool:
        key = (item.doc_id, item.field_id)
        if self.counts.get(key, 0) >= self.cap:
            return False
        self.counts[key] = self.counts.get(key, 0) + 1
        return True


def select_batch(
    ranked: Sequence[UncertaintyScore],
    config: SamplerConfig,
    *,
    rng: np.random.Generator | None = None,
) -> list[str]:
    """Pick at most k candidate_ids from a ranked pool.

    Every strategy honors the per-(doc, field) cap; fewer than k ids come
    back only when no eligible candidate remains. Deterministic for a fixed
    (pool, config, seed).
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)

    if config.strategy == "top_k":
        return _walk_capped(ranked, config.k, _CapTracker(config.cap_m))

    if config.strategy == "top_k_plus_random":
        tracker = _CapTracker(config.cap_m)
        chosen = _walk_capped(ranked, config.k_prime, tracker)
        taken = set(chosen)
        rest = [u for u in ranked if u.candidate_id not in taken]
        extra = _walk_capped(_shuffled(rest, rng), config.k - len(chosen), tracker)
        return chosen + extra

    if config.strategy == "random_from_top_n":
        prefix = _walk_items_capped(ranked, config.n, _CapTracker(config.cap_m))
        picked = _shuffled(prefix, rng)[: config.k]
        return [u.candidate_id for u in picked]

    # pure_random
    return _walk_capped(_shuffled(list(ranked), rng), config.k, _CapTracker(config.cap_m))


def _shuffled(items: list[UncertaintyScore], rng: np.random.Generator) -> list[UncertaintyScore]:
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def _walk_capped(
    pool: Sequence[UncertaintyScore], want: int, tracker: _CapTracker
) -> list[str]:
    return [u.candidate_id for u in _walk_items_capped(pool, want, tracker)]


def _walk_items_capped(
    pool: Sequence[UncertaintyScore], want: int, tracker: _CapTracker
) -> list[UncertaintyScore]:
    out: list[UncertaintyScore] = []
    for u in pool:
        if len(out) >= want:
            break
        if tracker.admit(u):
            out.append(u)
    return out
