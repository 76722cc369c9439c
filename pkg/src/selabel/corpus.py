"""Synthetic document corpora: schema, candidates, generation, serialization.

A corpus stands in for a pool of form-like documents that went through a
candidate generator: every document carries, per field, a handful of text
spans with feature vectors, of which at most a few are the field's true
value (the hidden label). Field difficulty controls how much the positive
and negative feature distributions overlap; field coverage controls how
often the true span made it into the candidate set at all.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NotFoundError, ParseError, SchemaError, ValidationError

FORMAT_NAME = "selabel-corpus"
FORMAT_VERSION = 1

# Feature-space geometry of the synthetic generator. Positives for a field
# come from a small mixture anchored at a per-field unit direction: one
# dominant mode plus minority modes offset toward the distractors, so a
# small labeled sample usually misses whole positive pockets and the
# decision boundary keeps improving for a long time. Negatives mix a
# background cluster at the origin with several distractor clusters whose
# distances from the positives shrink as field difficulty grows. Sigmas
# are cloud radii: the per-dimension scale is sigma/sqrt(dim) so the
# expected distance from the cluster center stays at sigma in any dimension.
_POS_SIGMA = 0.45
_BG_SIGMA = 0.55
_DISTRACTOR_SIGMA = 0.45
_POS_MODE_WEIGHTS = (0.5, 0.25, 0.15, 0.1)
_POS_MODE_SPREAD = (0.0, 0.9, 1.5, 2.1)  # multiples of the field's base offset
_DISTRACTOR_SPREAD = (1.0, 1.25, 1.6, 2.0)
_DISTRACTOR_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
_NUM_DISTRACTORS = len(_DISTRACTOR_SPREAD)
_BG_WEIGHT = 0.4
_MIN_OFFSET = 0.25
_MAX_OFFSET = 8.0

_WORDS = (
    "Acme", "Borel", "Cadmus", "Delta", "Everest", "Fairway", "Gantry",
    "Harbor", "Iris", "Juniper", "Keystone", "Lumen", "Meridian", "North",
    "Orchid", "Pioneer",
)
_LINE_PREFIXES = (
    "Ref", "Item", "Total", "Date", "Account", "Entry", "Code", "Amount",
)


@dataclass(frozen=True, slots=True)
class FieldSchema:
    """One extraction field: identity plus generator knobs.

    frequency   probability a document contains the field at all
    coverage    probability the true span appears among the candidates
    difficulty  >= 0; larger values pull distractor clusters closer to the
                positives, so the best reachable F1 drops
    """

    field_id: str
    display_name: str
    repeating: bool = False
    frequency: float = 1.0
    coverage: float = 1.0
    difficulty: float = 1.0

    def validate(self) -> None:
        if not self.field_id:
            raise ValidationError("field_id must be non-empty")
        if not 0.0 <= self.frequency <= 1.0:
            raise ValidationError(
                f"field {self.field_id!r}: frequency {self.frequency} not in [0, 1]"
            )
        if not 0.0 <= self.coverage <= 1.0:
            raise ValidationError(
                f"field {self.field_id!r}: coverage {self.coverage} not in [0, 1]"
            )
        if self.difficulty < 0:
            raise ValidationError(
                f"field {self.field_id!r}: difficulty must be non-negative"
            )


@dataclass(frozen=True, slots=True)
class SpanLocation:
    """Normalized box on a page; 0 <= x0 <= x1 <= 1 and same for y."""

    page: int
    x0: float
    y0: float
    x1: float
    y1: float

    def as_list(self) -> list:
        return [self.page, self.x0, self.y0, self.x1, self.y1]

    @staticmethod
    def from_list(raw: list) -> "SpanLocation":
        page, x0, y0, x1, y1 = raw
        return SpanLocation(int(page), float(x0), float(y0), float(x1), float(y1))


@dataclass(frozen=True, slots=True)
class Candidate:
    """A text span proposed as a possible value for one field of one doc.

    hidden_label is ground truth and must only be read by the oracle and
    the evaluator, never by the model or the selection logic.
    """

    candidate_id: str
    doc_id: str
    field_id: str
    features: tuple[float, ...]
    span_text: str
    span_location: SpanLocation
    hidden_label: bool


@dataclass(frozen=True, slots=True)
class TextLine:
    text: str
    location: SpanLocation


@dataclass(frozen=True, slots=True)
class Document:
    doc_id: str
    candidates: tuple[Candidate, ...]
    text_lines: tuple[TextLine, ...]
    fields_present: frozenset[str]


@dataclass(frozen=True, slots=True)
class CorpusSpec:
    """Everything the generator needs; equal specs yield identical corpora."""

    num_docs: int
    schema: tuple[FieldSchema, ...]
    candidates_per_field_per_doc: tuple[int, int] = (3, 8)
    feature_dim: int = 12
    seed: int = 0

    def validate(self) -> None:
        if self.num_docs <= 0:
            raise ValidationError("num_docs must be positive")
        if self.feature_dim < 2:
            raise ValidationError("feature_dim must be >= 2")
        lo, hi = self.candidates_per_field_per_doc
        if lo < 1 or hi < lo:
            raise ValidationError(
                f"candidates_per_field_per_doc ({lo}, {hi}) must satisfy 1 <= min <= max"
            )
        if not self.schema:
            raise ValidationError("schema must contain at least one field")
        seen: set[str] = set()
        for f in self.schema:
            f.validate()
            if f.field_id in seen:
                raise ValidationError(f"duplicate field_id {f.field_id!r}")
            seen.add(f.field_id)

    def to_dict(self) -> dict:
        return {
            "num_docs": self.num_docs,
            "feature_dim": self.feature_dim,
            "seed": self.seed,
            "candidates_per_field_per_doc": list(self.candidates_per_field_per_doc),
            "schema": [_field_to_dict(f) for f in self.schema],
        }

    @staticmethod
    def from_dict(raw: dict) -> "CorpusSpec":
        try:
            cmin, cmax = raw.get("candidates_per_field_per_doc", (3, 8))
            spec = CorpusSpec(
                num_docs=int(raw["num_docs"]),
                schema=tuple(_field_from_dict(f) for f in raw["schema"]),
                candidates_per_field_per_doc=(int(cmin), int(cmax)),
                feature_dim=int(raw.get("feature_dim", 12)),
                seed=int(raw.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad corpus spec: {exc}") from exc
        spec.validate()
        return spec


def _field_to_dict(f: FieldSchema) -> dict:
    return {
        "field_id": f.field_id,
        "display_name": f.display_name,
        "repeating": f.repeating,
        "frequency": f.frequency,
        "coverage": f.coverage,
        "difficulty": f.difficulty,
    }


def _field_from_dict(raw: dict) -> FieldSchema:
    return FieldSchema(
        field_id=str(raw["field_id"]),
        display_name=str(raw.get("display_name", raw["field_id"])),
        repeating=bool(raw.get("repeating", False)),
        frequency=float(raw.get("frequency", 1.0)),
        coverage=float(raw.get("coverage", 1.0)),
        difficulty=float(raw.get("difficulty", 1.0)),
    )


class Corpus:
    """Immutable collection of documents sharing one schema.

    Safe to share read-only across threads; all lookup indexes are built
    once at construction.
    """

    def __init__(
        self,
        schema: tuple[FieldSchema, ...],
        feature_dim: int,
        documents: tuple[Document, ...],
        seed: int = 0,
    ):
        self.schema = tuple(schema)
        self.feature_dim = int(feature_dim)
        self.documents = tuple(documents)
        self.seed = int(seed)
        self._docs_by_id = {d.doc_id: d for d in self.documents}
        self._candidates_by_id = {
            c.candidate_id: c for d in self.documents for c in d.candidates
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.feature_dim == other.feature_dim
            and self.documents == other.documents
        )

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(f.field_id for f in self.schema)

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d.doc_id for d in self.documents)

    def field(self, field_id: str) -> FieldSchema:
        for f in self.schema:
            if f.field_id == field_id:
                return f
        raise NotFoundError(f"unknown field_id {field_id!r}")

    def doc(self, doc_id: str) -> Document:
        try:
            return self._docs_by_id[doc_id]
        except KeyError:
            raise NotFoundError(f"unknown doc_id {doc_id!r}") from None

    def candidate(self, candidate_id: str) -> Candidate:
        try:
            return self._candidates_by_id[candidate_id]
        except KeyError:
            raise NotFoundError(f"unknown candidate_id {candidate_id!r}") from None

    def iter_candidates(self):
        for d in self.documents:
            yield from d.candidates

    @property
    def num_candidates(self) -> int:
        return len(self._candidates_by_id)


def candidates_for(corpus: Corpus, doc_id: str, field_id: str) -> list[Candidate]:
    """Candidates of one (document, field), sorted by candidate_id.

    Empty when the field is absent from the document or the generator
    produced nothing for it; unknown doc_id raises NotFoundError.
    """
    doc = corpus.doc(doc_id)
    found = [c for c in doc.candidates if c.field_id == field_id]
    found.sort(key=lambda c: c.candidate_id)
    return found


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    norm = float(np.linalg.norm(v))
    while norm < 1e-9:  # essentially impossible, but keep the math safe
        v = rng.normal(size=dim)
        norm = float(np.linalg.norm(v))
    return v / norm


def _distractor_offset(difficulty: float) -> float:
    if difficulty <= 0:
        return _MAX_OFFSET
    return float(np.clip(1.0 / difficulty, _MIN_OFFSET, _MAX_OFFSET))


def _pick_weighted(rng: np.random.Generator, weights: tuple[float, ...]) -> int:
    u = rng.random()
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def _field_geometry_rng(field_id: str, feature_dim: int) -> np.random.Generator:
    """Cluster geometry is a function of the field identity alone, so two
    corpora over the same schema (train pool vs test split) share feature
    distributions regardless of their generation seeds."""
    digest = hashlib.sha256(f"{field_id}:{feature_dim}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _span_text(rng: np.random.Generator, field_idx: int) -> str:
    kind = field_idx % 4
    if kind == 0:  # date-like
        y = 2019 + int(rng.integers(6))
        m = 1 + int(rng.integers(12))
        d = 1 + int(rng.integers(28))
        return f"{y:04d}-{m:02d}-{d:02d}"
    if kind == 1:  # amount-like
        whole = int(rng.integers(9, 99999))
        cents = int(rng.integers(100))
        return f"${whole:,}.{cents:02d}"
    if kind == 2:  # code-like
        return f"{_WORDS[int(rng.integers(len(_WORDS)))][:3].upper()}-{int(rng.integers(10000, 99999))}"
    first = _WORDS[int(rng.integers(len(_WORDS)))]
    second = _WORDS[int(rng.integers(len(_WORDS)))]
    return f"{first} {second} Ltd"


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """Generate a corpus deterministically from the spec and its seed.

    Per document and field: the field is present with probability
    `frequency`; when present, a coverage draw decides whether the true
    span exists among the candidates, in which case exactly one candidate
    is positive (1-3 for repeating fields). All other candidates are
    negatives drawn from the background/distractor mixture.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dim = spec.feature_dim
    lo, hi = spec.candidates_per_field_per_doc

    pos_modes: dict[str, np.ndarray] = {}
    distractors: dict[str, np.ndarray] = {}
    for f in spec.schema:
        frng = _field_geometry_rng(f.field_id, dim)
        mu = _unit_vector(frng, dim)
        offset = _distractor_offset(f.difficulty)
        pos_modes[f.field_id] = np.stack(
            [
                mu + min(offset * spread, _MAX_OFFSET) * _unit_vector(frng, dim)
                for spread in _POS_MODE_SPREAD
            ]
        )
        distractors[f.field_id] = np.stack(
            [
                mu + min(offset * spread, _MAX_OFFSET) * _unit_vector(frng, dim)
                for spread in _DISTRACTOR_SPREAD
            ]
        )

    pos_scale = _POS_SIGMA / np.sqrt(dim)
    bg_scale = _BG_SIGMA / np.sqrt(dim)
    distractor_scale = _DISTRACTOR_SIGMA / np.sqrt(dim)

    id_width = max(5, len(str(spec.num_docs - 1)))
    docs = []
    for i in range(spec.num_docs):
        doc_id = f"d{i:0{id_width}d}"
        present: set[str] = set()
        candidates: list[Candidate] = []
        row = 0
        lines: list[TextLine] = []
        for field_idx, f in enumerate(spec.schema):
            is_present = rng.random() < f.frequency
            if is_present:
                present.add(f.field_id)
            count = int(rng.integers(lo, hi + 1))
            num_pos = 0
            if is_present and rng.random() < f.coverage:
                num_pos = 1 if not f.repeating else int(rng.integers(1, 4))
                num_pos = min(num_pos, count)
            pos_slots = set(
                int(s) for s in rng.choice(count, size=num_pos, replace=False)
            )
            modes = pos_modes[f.field_id]
            nus = distractors[f.field_id]
            for slot in range(count):
                positive = slot in pos_slots
                if positive:
                    mode = modes[_pick_weighted(rng, _POS_MODE_WEIGHTS)]
                    feats = mode + pos_scale * rng.normal(size=dim)
                elif rng.random() < _BG_WEIGHT:
                    feats = bg_scale * rng.normal(size=dim)
                else:
                    nu = nus[_pick_weighted(rng, _DISTRACTOR_WEIGHTS)]
                    feats = nu + distractor_scale * rng.normal(size=dim)
                box = _line_box(rng, row)
                span = _span_text(rng, field_idx)
                prefix = _LINE_PREFIXES[int(rng.integers(len(_LINE_PREFIXES)))]
                lines.append(TextLine(f"{prefix}: {span}", box))
                candidates.append(
                    Candidate(
                        candidate_id=f"{doc_id}:{f.field_id}:{slot:02d}",
                        doc_id=doc_id,
                        field_id=f.field_id,
                        features=tuple(float(x) for x in feats),
                        span_text=span,
                        span_location=box,
                        hidden_label=positive,
                    )
                )
                row += 1
        docs.append(
            Document(
                doc_id=doc_id,
                candidates=tuple(candidates),
                text_lines=tuple(lines),
                fields_present=frozenset(present),
            )
        )
    return Corpus(spec.schema, dim, tuple(docs), seed=spec.seed)


_LINES_PER_PAGE = 40


def _line_box(rng: np.random.Generator, row: int) -> SpanLocation:
    page = row // _LINES_PER_PAGE
    line_on_page = row % _LINES_PER_PAGE
    y0 = 0.03 + line_on_page * 0.023
    x0 = 0.05 + float(rng.random()) * 0.5
    width = 0.08 + float(rng.random()) * 0.25
    return SpanLocation(
        page,
        round(x0, 4),
        round(y0, 4),
        round(min(x0 + width, 1.0), 4),
        round(y0 + 0.018, 4),
    )


# ---------------------------------------------------------------------------
# Serialization: one JSON header line, then one JSON line per document.
# Compact separators + sorted keys make output byte-stable for a fixed corpus.


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "feature_dim": corpus.feature_dim,
            "num_docs": len(corpus),
            "seed": corpus.seed,
            "schema": [_field_to_dict(f) for f in corpus.schema],
        }
        fh.write(_dumps(header) + "\n")
        for doc in corpus.documents:
            record = {
                "doc_id": doc.doc_id,
                "fields_present": sorted(doc.fields_present),
                "text_lines": [[t.text, t.location.as_list()] for t in doc.text_lines],
                "candidates": [
                    [
                        c.candidate_id,
                        c.field_id,
                        list(c.features),
                        c.span_text,
                        c.span_location.as_list(),
                        c.hidden_label,
                    ]
                    for c in doc.candidates
                ],
            }
            fh.write(_dumps(record) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Load a corpus file; raises ParseError with the offending line number."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise ParseError("empty corpus file", line=1)
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad header: {exc.msg}", line=1) from exc
        if header.get("format") != FORMAT_NAME:
            raise ParseError("not a corpus file (bad format marker)", line=1)
        if header.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported version {header.get('version')}", line=1)
        try:
            feature_dim = int(header["feature_dim"])
            schema = tuple(_field_from_dict(f) for f in header["schema"])
            seed = int(header.get("seed", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad header: {exc}", line=1) from exc

        docs = []
        for lineno, raw in enumerate(fh, start=2):
            try:
                record = json.loads(raw)
                doc = _doc_from_record(record, feature_dim)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad document record: {exc.msg}", line=lineno) from exc
            except SchemaError:
                raise
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise ParseError(f"bad document record: {exc}", line=lineno) from exc
            docs.append(doc)
    if len(docs) != header.get("num_docs"):
        raise ParseError(
            f"header claims {header.get('num_docs')} docs, found {len(docs)}",
            line=len(docs) + 1,
        )
    return Corpus(schema, feature_dim, tuple(docs), seed=seed)


def _doc_from_record(record: dict, feature_dim: int) -> Document:
    doc_id = str(record["doc_id"])
    candidates = []
    for cid, field_id, feats, span, loc, label in record["candidates"]:
        if len(feats) != feature_dim:
            raise SchemaError(
                f"candidate {cid}: features length {len(feats)} != feature_dim {feature_dim}"
            )
        candidates.append(
            Candidate(
                candidate_id=str(cid),
                doc_id=doc_id,
                field_id=str(field_id),
                features=tuple(float(x) for x in feats),
                span_text=str(span),
                span_location=SpanLocation.from_list(loc),
                hidden_label=bool(label),
            )
        )
    lines = tuple(
        TextLine(str(text), SpanLocation.from_list(loc))
        for text, loc in record["text_lines"]
    )
    return Document(
        doc_id=doc_id,
        candidates=tuple(candidates),
        text_lines=lines,
        fields_present=frozenset(str(f) for f in record["fields_present"]),
    )
