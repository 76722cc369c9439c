"""Per-field monotone score calibration via equal-frequency histogram binning.

Raw classifier scores are heavily skewed: the vast majority of candidates
are easy negatives with scores near zero. Fitting therefore pools every
score below a floor threshold into the first bin and splits the remainder
into equal-frequency bins, so resolution concentrates where it matters.
Bin values are empirical positive rates, made non-decreasing by
pool-adjacent-violators, and application interpolates linearly between bin
midpoints. Curves are refit from scratch for each new model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_NUM_BINS = 10
DEFAULT_FLOOR = 1e-3
_MIN_PER_BIN = 5  # fewer than this per requested bin -> single-bin fallback


@dataclass(frozen=True, slots=True)
class CalibrationCurve:
    field_id: str
    bin_edges: tuple[float, ...]  # strictly ascending, 0.0 .. 1.0
    bin_values: tuple[float, ...]  # one per bin, non-decreasing
    floor_threshold: float = DEFAULT_FLOOR

    def validate(self) -> None:
        edges = self.bin_edges
        if len(edges) < 2 or edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValidationError("bin_edges must start at 0 and end at 1")
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise ValidationError("bin_edges must be strictly ascending")
        if len(self.bin_values) != len(edges) - 1:
            raise ValidationError("need exactly one value per bin")
        if any(b < a for a, b in zip(self.bin_values, self.bin_values[1:])):
            raise ValidationError("bin_values must be non-decreasing")
        if any(not 0.0 <= v <= 1.0 for v in self.bin_values):
            raise ValidationError("bin_values must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "field_id": self.field_id,
            "bin_edges": list(self.bin_edges),
            "bin_values": list(self.bin_values),
            "floor_threshold": self.floor_threshold,
        }

    @staticmethod
    def from_dict(raw: dict) -> "CalibrationCurve":
        return CalibrationCurve(
            field_id=str(raw["field_id"]),
            bin_edges=tuple(float(x) for x in raw["bin_edges"]),
            bin_values=tuple(float(x) for x in raw["bin_values"]),
            floor_threshold=float(raw["floor_threshold"]),
        )


def _pool_adjacent_violators(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted isotonic pooling: merge adjacent bins until non-decreasing."""
    blocks: list[list[float]] = []  # [value, weight, count]
    for v, w in zip(values, weights):
        blocks.append([float(v), float(w), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, c2 = blocks.pop()
            v1, w1, c1 = blocks.pop()
            total = w1 + w2
            merged = (v1 * w1 + v2 * w2) / total if total > 0 else (v1 + v2) / 2
            blocks.append([merged, total, c1 + c2])
    out = np.empty(len(values))
    i = 0
    for v, _w, count in blocks:
        out[i : i + count] = v
        i += count
    return out


def fit_calibrator(
    scored_labeled: list[tuple[float, bool]],
    field_id: str,
    num_bins: int = DEFAULT_NUM_BINS,
    floor_threshold: float = DEFAULT_FLOOR,
) -> CalibrationCurve:
    """Fit a monotone score-to-positive-rate curve for one field.

    Fields with fewer than ``5 * num_bins`` labeled examples get a single
    bin holding the overall positive rate.
    """
    if not scored_labeled:
        raise ValidationError("cannot calibrate with no labeled examples")
    if num_bins < 1:
        raise ValidationError("num_bins must be >= 1")
    scores = np.asarray([s for s, _ in scored_labeled], dtype=np.float64)
    labels = np.asarray([bool(l) for _, l in scored_labeled], dtype=np.float64)
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise ValidationError("scores must lie in [0, 1]")

    if len(scores) < _MIN_PER_BIN * num_bins or num_bins == 1:
        value = float(labels.mean())
        return CalibrationCurve(field_id, (0.0, 1.0), (value,), floor_threshold)

    above = scores >= floor_threshold
    high = np.sort(scores[above])
    edges: list[float] = [0.0]
    if bool((~above).any()) and len(high) > 0:
        edges.append(floor_threshold)
    if len(high) >= 2:
        for i in range(1, num_bins):
            k = int(round(i * len(high) / num_bins))
            if k <= 0 or k >= len(high):
                continue
            cut = 0.5 * (high[k - 1] + high[k])
            if edges[-1] < cut < 1.0:
                edges.append(float(cut))
    edges.append(1.0)

    edge_arr = np.asarray(edges)
    # right-open bins except the last, which includes 1.0
    which = np.clip(np.searchsorted(edge_arr, scores, side="right") - 1, 0, len(edges) - 2)
    values = np.zeros(len(edges) - 1)
    weights = np.zeros(len(edges) - 1)
    for b in range(len(edges) - 1):
        in_bin = which == b
        weights[b] = in_bin.sum()
        values[b] = labels[in_bin].mean() if weights[b] > 0 else 0.0
    pooled = _pool_adjacent_violators(values, weights)
    curve = CalibrationCurve(
        field_id,
        tuple(edges),
        tuple(float(v) for v in pooled),
        floor_threshold,
    )
    curve.validate()
    return curve


def apply(curve: CalibrationCurve, raw_score: float) -> float:
    """Calibrated score: linear interpolation between bin-midpoint values."""
    if not 0.0 <= raw_score <= 1.0:
        raise ValidationError(f"score {raw_score} outside [0, 1]")
    return float(apply_many(curve, np.asarray([raw_score]))[0])


def apply_many(curve: CalibrationCurve, raw_scores: np.ndarray) -> np.ndarray:
    edges = np.asarray(curve.bin_edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.interp(raw_scores, mids, np.asarray(curve.bin_values))


@dataclass(frozen=True)
class CalibratorSet:
    """Per-field curves tagged with the model round they were fitted for."""

    round_index: int
    curves: dict[str, CalibrationCurve]

    def curve(self, field_id: str) -> CalibrationCurve | None:
        return self.curves.get(field_id)

    def calibrate(self, field_id: str, raw_scores: np.ndarray) -> np.ndarray:
        curve = self.curves.get(field_id)
        if curve is None:
            return np.asarray(raw_scores, dtype=np.float64)
        return apply_many(curve, raw_scores)

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "curves": {f: c.to_dict() for f, c in sorted(self.curves.items())},
        }

    @staticmethod
    def from_dict(raw: dict) -> "CalibratorSet":
        return CalibratorSet(
            round_index=int(raw["round_index"]),
            curves={
                f: CalibrationCurve.from_dict(c) for f, c in raw["curves"].items()
            },
        )


def curve_to_csv_rows(curve: CalibrationCurve) -> list[tuple[float, float, float]]:
    """(bin_edge_low, bin_edge_high, value) rows for inspection dumps."""
    return [
        (curve.bin_edges[i], curve.bin_edges[i + 1], curve.bin_values[i])
        for i in range(len(curve.bin_values))
    ]
