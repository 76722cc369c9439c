"""Trainable binary candidate classifier with per-field extraction thresholds.

One classifier serves every field: the input is the candidate's feature
vector with a one-hot field indicator appended. The reference model is a
single hidden layer with rectifier units, dropout, and a sigmoid output;
``hidden_units=0`` degrades to logistic regression. Training minimizes
binary cross-entropy with a rectified adaptive-moment optimizer and early
stopping on validation AUC-ROC, and is bit-deterministic for a fixed seed.

The forward/backward passes are written out explicitly (no autodiff) so the
analytic gradient can be checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Candidate, Document
from .errors import (
    DegenerateDataError,
    DivergenceError,
    SchemaError,
    ValidationError,
)

_BETA1 = 0.9
_BETA2 = 0.999
_EPS = 1e-8
_AUC_IMPROVEMENT_EPS = 1e-5


@dataclass(frozen=True, slots=True)
class ScorerConfig:
    hidden_units: int = 32
    dropout_rate: float = 0.1
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 50
    early_stop_patience: int = 3
    ensemble_size: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1")
        if self.hidden_units < 0:
            raise ValidationError("hidden_units must be >= 0")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.ensemble_size < 1:
            raise ValidationError("ensemble_size must be >= 1")


@dataclass(frozen=True, slots=True)
class LabeledExample:
    candidate_id: str
    features: tuple[float, ...]
    field_id: str
    label: bool
    source: str  # bootstrap | human | inferred


class LabeledCandidateSet:
    """The labeled partition of the candidate pool: what the model trains on."""

    def __init__(self, entries: Iterable[LabeledExample]):
        self.entries: tuple[LabeledExample, ...] = tuple(entries)
        seen: set[str] = set()
        for e in self.entries:
            if e.candidate_id in seen:
                raise ValidationError(f"duplicate candidate_id {e.candidate_id!r}")
            seen.add(e.candidate_id)

    def __len__(self) -> int:
        return len(self.entries)

    def num_positives(self) -> int:
        return sum(1 for e in self.entries if e.label)

    def by_field(self) -> dict[str, list[LabeledExample]]:
        grouped: dict[str, list[LabeledExample]] = {}
        for e in self.entries:
            grouped.setdefault(e.field_id, []).append(e)
        return grouped


class FeatureEncoder:
    """Appends a one-hot field indicator to raw candidate features."""

    def __init__(self, field_ids: Sequence[str], feature_dim: int):
        self.field_ids = tuple(field_ids)
        self.feature_dim = int(feature_dim)
        self.input_dim = self.feature_dim + len(self.field_ids)
        self._index = {f: i for i, f in enumerate(self.field_ids)}

    def field_index(self, field_id: str) -> int:
        try:
            return self._index[field_id]
        except KeyError:
            raise SchemaError(f"field {field_id!r} not in encoder schema") from None

    def encode(self, features: np.ndarray, field_idx: np.ndarray) -> np.ndarray:
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise SchemaError(
                f"features shape {features.shape} incompatible with feature_dim {self.feature_dim}"
            )
        n = features.shape[0]
        out = np.zeros((n, self.input_dim), dtype=np.float64)
        out[:, : self.feature_dim] = features
        out[np.arange(n), self.feature_dim + field_idx] = 1.0
        return out

    def encode_examples(self, entries: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
        if not entries:
            return np.zeros((0, self.input_dim)), np.zeros(0)
        feats = np.asarray([e.features for e in entries], dtype=np.float64)
        idx = np.asarray([self.field_index(e.field_id) for e in entries], dtype=np.int64)
        return self.encode(feats, idx), np.asarray([e.label for e in entries], dtype=np.float64)


# ---------------------------------------------------------------------------
# Flat-parameter network: forward, loss, analytic gradient.


def init_params(input_dim: int, hidden_units: int, rng: np.random.Generator) -> np.ndarray:
    if hidden_units == 0:
        return np.concatenate([
            rng.normal(scale=np.sqrt(1.0 / input_dim), size=input_dim),
            np.zeros(1),
        ])
    w1 = rng.normal(scale=np.sqrt(2.0 / input_dim), size=input_dim * hidden_units)
    w2 = rng.normal(scale=np.sqrt(1.0 / hidden_units), size=hidden_units)
    return np.concatenate([w1, np.zeros(hidden_units), w2, np.zeros(1)])


def param_count(input_dim: int, hidden_units: int) -> int:
    if hidden_units == 0:
        return input_dim + 1
    return input_dim * hidden_units + hidden_units + hidden_units + 1


def _unpack(params: np.ndarray, input_dim: int, h: int):
    if h == 0:
        return params[:input_dim], params[input_dim]
    w1 = params[: input_dim * h].reshape(input_dim, h)
    b1 = params[input_dim * h : input_dim * h + h]
    w2 = params[input_dim * h + h : input_dim * h + 2 * h]
    b2 = params[-1]
    return w1, b1, w2, b2


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    params: np.ndarray,
    x: np.ndarray,
    hidden_units: int,
    dropout_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Probabilities for a batch. dropout_mask, when given, is a per-unit
    multiplier (already scaled by 1/keep) shared across the batch."""
    input_dim = x.shape[1]
    if hidden_units == 0:
        w, b = _unpack(params, input_dim, 0)
        return _sigmoid(x @ w + b)
    w1, b1, w2, b2 = _unpack(params, input_dim, hidden_units)
    a = np.maximum(x @ w1 + b1, 0.0)
    if dropout_mask is not None:
        a = a * dropout_mask
    return _sigmoid(a @ w2 + b2)


def loss_and_grad(
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    hidden_units: int,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the flat params.

    The loss is computed in the numerically stable logit form
    softplus(z) - y*z, whose exact gradient through the sigmoid is p - y.
    """
    n, input_dim = x.shape
    grad = np.zeros_like(params)
    if hidden_units == 0:
        w, b = _unpack(params, input_dim, 0)
        z = x @ w + b
        p = _sigmoid(z)
        loss = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))
        dz = (p - y) / n
        grad[:input_dim] = x.T @ dz
        grad[input_dim] = dz.sum()
        return loss, grad

    w1, b1, w2, b2 = _unpack(params, input_dim, hidden_units)
    z1 = x @ w1 + b1
    a = np.maximum(z1, 0.0)
    d = a if dropout_mask is None else a * dropout_mask
    z = d @ w2 + b2
    p = _sigmoid(z)
    loss = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))

    dz = (p - y) / n
    h = hidden_units
    dw2 = d.T @ dz
    db2 = dz.sum()
    dd = np.outer(dz, w2)
    da = dd if dropout_mask is None else dd * dropout_mask
    dz1 = da * (z1 > 0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    grad[: input_dim * h] = dw1.ravel()
    grad[input_dim * h : input_dim * h + h] = db1
    grad[input_dim * h + h : input_dim * h + 2 * h] = dw2
    grad[-1] = db2
    return loss, grad


class _RAdam:
    """Rectified adaptive-moment updates; no warmup schedule needed."""

    def __init__(self, size: int, lr: float):
        self.lr = lr
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.rho_inf = 2.0 / (1.0 - _BETA2) - 1.0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        t = self.t
        self.m = _BETA1 * self.m + (1.0 - _BETA1) * grad
        self.v = _BETA2 * self.v + (1.0 - _BETA2) * grad * grad
        m_hat = self.m / (1.0 - _BETA1**t)
        rho_t = self.rho_inf - 2.0 * t * _BETA2**t / (1.0 - _BETA2**t)
        if rho_t > 4.0:
            v_hat = np.sqrt(self.v / (1.0 - _BETA2**t))
            r = np.sqrt(
                ((rho_t - 4.0) * (rho_t - 2.0) * self.rho_inf)
                / ((self.rho_inf - 4.0) * (self.rho_inf - 2.0) * rho_t)
            )
            params -= self.lr * r * m_hat / (v_hat + _EPS)
        else:
            params -= self.lr * m_hat


def auc_roc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC with tie averaging; 0.5 when only one class present."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(labels.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True, eq=False)
class TrainedScorer:
    """Immutable classifier snapshot plus per-field extraction thresholds."""

    parameters: np.ndarray
    feature_dim: int
    field_ids: tuple[str, ...]
    hidden_units: int
    dropout_rate: float
    field_thresholds: dict[str, float]
    training_round: int = 0
    validation_auc: float = 0.5

    @property
    def encoder(self) -> FeatureEncoder:
        return FeatureEncoder(self.field_ids, self.feature_dim)

    def threshold(self, field_id: str) -> float:
        return self.field_thresholds.get(field_id, 0.5)

    def score_batch(self, features: np.ndarray, field_idx: np.ndarray) -> np.ndarray:
        x = self.encoder.encode(features, field_idx)
        return forward(self.parameters, x, self.hidden_units)

    def score_candidates(self, candidates: Sequence[Candidate]) -> np.ndarray:
        if not candidates:
            return np.zeros(0)
        enc = self.encoder
        feats = np.asarray([c.features for c in candidates], dtype=np.float64)
        idx = np.asarray([enc.field_index(c.field_id) for c in candidates], dtype=np.int64)
        return self.score_batch(feats, idx)

    def with_thresholds(self, thresholds: dict[str, float]) -> "TrainedScorer":
        return replace(self, field_thresholds=dict(thresholds))


def score(scorer: TrainedScorer, candidate: Candidate) -> float:
    """Deterministic probability for one candidate; dropout disabled."""
    if len(candidate.features) != scorer.feature_dim:
        raise SchemaError(
            f"candidate has {len(candidate.features)} features, scorer expects {scorer.feature_dim}"
        )
    return float(scorer.score_candidates([candidate])[0])


def train(
    config: ScorerConfig,
    train_set: LabeledCandidateSet,
    val_set: LabeledCandidateSet,
    *,
    encoder: FeatureEncoder | None = None,
    init: np.ndarray | None = None,
    training_round: int = 0,
) -> TrainedScorer:
    """Fit the classifier; returns the parameters of the best-validation epoch.

    `init` warm-starts from an earlier round's parameters. Raises
    DegenerateDataError when the training set has a single class and
    DivergenceError when the loss goes non-finite.
    """
    config.validate()
    if len(train_set) == 0:
        raise DegenerateDataError("empty training set")
    n_pos = train_set.num_positives()
    if n_pos == 0 or n_pos == len(train_set):
        raise DegenerateDataError(
            f"training set needs both classes (got {n_pos} positives of {len(train_set)})"
        )
    if encoder is None:
        fields = sorted({e.field_id for e in train_set.entries}
                        | {e.field_id for e in val_set.entries})
        encoder = FeatureEncoder(fields, len(train_set.entries[0].features))

    x_train, y_train = encoder.encode_examples(train_set.entries)
    x_val, y_val = encoder.encode_examples(val_set.entries)

    rng = np.random.default_rng(config.seed)
    h = config.hidden_units
    if init is not None:
        if init.shape != (param_count(encoder.input_dim, h),):
            raise SchemaError(
                f"warm-start parameter shape {init.shape} does not match model"
            )
        params = init.astype(np.float64).copy()
    else:
        params = init_params(encoder.input_dim, h, rng)

    def val_auc(p: np.ndarray) -> float:
        if x_val.shape[0] == 0:
            return 0.5
        return auc_roc(forward(p, x_val, h), y_val)

    best_auc = -np.inf  # best tracking starts at epoch 1, not the init
    best_params = params.copy()
    opt = _RAdam(params.size, config.learning_rate)
    keep = 1.0 - config.dropout_rate
    stale = 0
    n = x_train.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            mask = None
            if h > 0 and config.dropout_rate > 0.0:
                mask = (rng.random(h) < keep).astype(np.float64) / keep
            loss, grad = loss_and_grad(params, x_train[idx], y_train[idx], h, mask)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.step(params, grad)
        auc = val_auc(params)
        if auc > best_auc + _AUC_IMPROVEMENT_EPS:
            best_auc = auc
            best_params = params.copy()
            stale = 0
        else:
            if auc == best_auc:
                # exact tie: same validation quality, more training; keep
                # the later epoch so saturated small val sets don't freeze
                # an undertrained model. Sub-epsilon fluctuations do NOT
                # move the kept parameters, which pins the selection to the
                # first plateau instead of a random late epoch.
                best_params = params.copy()
            stale += 1
            if stale >= config.early_stop_patience:
                break

    return TrainedScorer(
        parameters=best_params,
        feature_dim=encoder.feature_dim,
        field_ids=encoder.field_ids,
        hidden_units=h,
        dropout_rate=config.dropout_rate,
        field_thresholds={f: 0.5 for f in encoder.field_ids},
        training_round=training_round,
        validation_auc=float(best_auc) if np.isfinite(best_auc) else 0.5,
    )


def train_ensemble(
    config: ScorerConfig,
    train_set: LabeledCandidateSet,
    val_set: LabeledCandidateSet,
    *,
    encoder: FeatureEncoder | None = None,
) -> list[TrainedScorer]:
    """Independently seeded members for committee-style variance."""
    return [
        train(replace(config, seed=config.seed + i), train_set, val_set, encoder=encoder)
        for i in range(config.ensemble_size)
    ]


def score_ensemble(
    scorer: TrainedScorer,
    candidates: Sequence[Candidate],
    passes: int = 10,
    *,
    seed: int = 0,
    members: Sequence[TrainedScorer] | None = None,
) -> list[tuple[float, float]]:
    """Per-candidate (mean, population variance) over stochastic passes.

    Default mode re-scores with dropout enabled `passes` times (one shared
    mask per pass); passing `members` instead spreads the scores across
    independently trained models.
    """
    if members is not None:
        if len(members) < 2:
            raise ValidationError("need at least 2 ensemble members")
        rows = np.stack([m.score_candidates(candidates) for m in members])
    else:
        if passes < 2:
            raise ValidationError("passes must be >= 2")
        if not candidates:
            return []
        if scorer.hidden_units == 0 or scorer.dropout_rate == 0.0:
            # no stochasticity: every pass is identical, variance exactly 0
            means = scorer.score_candidates(candidates)
            return [(float(m), 0.0) for m in means]
        enc = scorer.encoder
        feats = np.asarray([c.features for c in candidates], dtype=np.float64)
        idx = np.asarray([enc.field_index(c.field_id) for c in candidates], dtype=np.int64)
        x = enc.encode(feats, idx)
        rng = np.random.default_rng(seed)
        keep = 1.0 - scorer.dropout_rate
        rows = np.empty((passes, len(candidates)))
        for p in range(passes):
            mask = (rng.random(scorer.hidden_units) < keep).astype(np.float64) / keep
            rows[p] = forward(scorer.parameters, x, scorer.hidden_units, mask)
    means = rows.mean(axis=0)
    variances = rows.var(axis=0)
    return [(float(m), float(v)) for m, v in zip(means, variances)]


def fit_field_thresholds(
    scorer: TrainedScorer, val_set: LabeledCandidateSet
) -> dict[str, float]:
    """Per-field threshold maximizing candidate-level F1 on validation scores.

    Sweeps the distinct scores of the field's validation candidates
    (predicted positive means score >= threshold), breaking ties toward the
    larger threshold. Fields without validation positives fall back to 0.5.
    """
    thresholds = {f: 0.5 for f in scorer.field_ids}
    grouped = val_set.by_field()
    for field_id, entries in grouped.items():
        if field_id not in thresholds:
            continue
        labels = np.asarray([e.label for e in entries], dtype=bool)
        if not labels.any():
            continue
        enc = scorer.encoder
        feats = np.asarray([e.features for e in entries], dtype=np.float64)
        idx = np.full(len(entries), enc.field_index(field_id), dtype=np.int64)
        scores = scorer.score_batch(feats, idx)
        thresholds[field_id] = _best_f1_threshold(scores, labels)
    return thresholds


def _best_f1_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    pos = labels[order].astype(np.int64)
    tp = np.cumsum(pos)
    total_pos = int(pos.sum())
    best_f1 = -1.0
    best_t = 0.5
    n = len(s)
    i = 0
    while i < n:  # descending distinct scores; first win keeps the larger t
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        predicted = j + 1
        correct = int(tp[j])
        # integer-ratio form: mathematically equal F1 values compare equal
        # in floats, so the larger-threshold tie rule holds exactly
        f1 = 2.0 * correct / (predicted + total_pos)
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(s[i])
        i = j + 1
    return best_t


def extract(
    scorer: TrainedScorer, document: Document
) -> dict[str, tuple[str, float] | None]:
    """Highest-scoring candidate per field when it clears the field threshold.

    Ties on score go to the smaller candidate_id; fields with no candidate
    above threshold map to None.
    """
    by_field: dict[str, list[Candidate]] = {}
    for c in document.candidates:
        by_field.setdefault(c.field_id, []).append(c)
    out: dict[str, tuple[str, float] | None] = {}
    for field_id in scorer.field_ids:
        cands = by_field.get(field_id)
        if not cands:
            out[field_id] = None
            continue
        cands = sorted(cands, key=lambda c: c.candidate_id)
        scores = scorer.score_candidates(cands)
        top = int(np.argmax(scores))  # argmax keeps the first (smallest id) on ties
        if float(scores[top]) > scorer.threshold(field_id):
            out[field_id] = (cands[top].candidate_id, float(scores[top]))
        else:
            out[field_id] = None
    return out


# ---------------------------------------------------------------------------
# Checkpoint file: JSON dump of parameters + thresholds.


def save_scorer(scorer: TrainedScorer, path: str | Path) -> None:
    payload = {
        "format": "selabel-scorer",
        "version": 1,
        "parameters": scorer.parameters.tolist(),
        "feature_dim": scorer.feature_dim,
        "field_ids": list(scorer.field_ids),
        "hidden_units": scorer.hidden_units,
        "dropout_rate": scorer.dropout_rate,
        "field_thresholds": scorer.field_thresholds,
        "training_round": scorer.training_round,
        "validation_auc": scorer.validation_auc,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_scorer(path: str | Path) -> TrainedScorer:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("format") != "selabel-scorer":
        raise SchemaError("not a scorer checkpoint")
    return TrainedScorer(
        parameters=np.asarray(raw["parameters"], dtype=np.float64),
        feature_dim=int(raw["feature_dim"]),
        field_ids=tuple(raw["field_ids"]),
        hidden_units=int(raw["hidden_units"]),
        dropout_rate=float(raw["dropout_rate"]),
        field_thresholds={k: float(v) for k, v in raw["field_thresholds"].items()},
        training_round=int(raw["training_round"]),
        validation_auc=float(raw["validation_auc"]),
    )
