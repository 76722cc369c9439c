"""HTTP annotation service: humans answer the round's question queue.

The engine runs on a background thread; each round it publishes its
selected batch to a broker and blocks until every question is answered
over HTTP. Answers are applied through the same oracle primitives as the
simulated annotator (one label written, one 10-second charge), under a
single lock, so a scripted client that answers from the hidden labels
reproduces a simulated run exactly. Questions are leased to one annotator
at a time; an expired lease makes the question available to the next
poller, and re-posting an identical answer is idempotent.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Literal

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import engine as engine_mod
from . import oracle
from .corpus import Corpus
from .engine import ExperimentConfig, ExperimentState
from .errors import SelabelError

DEFAULT_LEASE_SECONDS = 120.0


@dataclass
class PublishedQuestion:
    question_id: str
    candidate_id: str
    payload: dict
    answered: bool = False
    answer: str | None = None
    answered_by: str | None = None
    lease_annotator: str | None = None
    lease_expires: float = 0.0


@dataclass
class AnswerRecord:
    question_id: str
    answer: str
    annotator_id: str
    received_at: float


class SessionCancelled(SelabelError):
    pass


class QuestionBroker:
    """Bridges the engine's per-round batches to the HTTP handlers.

    All mutations happen under one condition lock: the engine thread waits
    on it while annotators answer, and every answer applies the label and
    the ledger charge before the engine wakes, so the label/ledger pair
    stays a single serialized transaction domain.
    """

    def __init__(
        self,
        session: "AnnotationSession",
        corpus: Corpus,
        state: ExperimentState,
    ):
        self.session = session
        self.corpus = corpus
        self.state = state
        self.cond = threading.Condition(session.lock)
        self.questions: list[PublishedQuestion] = []
        self.by_id: dict[str, PublishedQuestion] = {}
        self.applied: list[tuple[str, str]] = []
        self.records: list[AnswerRecord] = []
        self.round_index = 0
        self.answered_total = 0

    # -- engine side ------------------------------------------------------

    def collect(self, candidate_ids: list[str], round_index: int) -> list[tuple[str, str]]:
        ledger = self.state.ledger
        affordable = int(ledger.remaining_seconds // ledger.cost_question_seconds)
        batch = candidate_ids[: max(0, affordable)]
        with self.cond:
            if self.session.cancelled:
                raise SessionCancelled("annotation session stopped")
            self.round_index = round_index
            self.applied = []
            self.questions = [
                PublishedQuestion(
                    question_id=f"r{round_index:02d}-{i:04d}",
                    candidate_id=cid,
                    payload=self.session.question_payload(self.corpus, cid, round_index, i),
                )
                for i, cid in enumerate(batch)
            ]
            self.by_id = {q.question_id: q for q in self.questions}
            self.session.phase = "collecting"
            self.cond.wait_for(
                lambda: self.session.cancelled or all(q.answered for q in self.questions)
            )
            if self.session.cancelled:
                raise SessionCancelled("annotation session stopped")
            out = list(self.applied)
            self.questions = []
            self.by_id = {}
            self.session.phase = "retraining"
        return out

    # -- HTTP side --------------------------------------------------------

    def next_for(self, annotator_id: str, now: float) -> PublishedQuestion | None:
        with self.cond:
            for q in self.questions:
                if (
                    not q.answered
                    and q.lease_annotator == annotator_id
                    and q.lease_expires > now
                ):
                    return q
            for q in self.questions:
                if not q.answered and q.lease_expires <= now:
                    q.lease_annotator = annotator_id
                    q.lease_expires = now + self.session.lease_seconds
                    return q
            return None

    def submit(
        self, question_id: str, annotator_id: str, answer: str, now: float
    ) -> tuple[int, str]:
        """Returns (status_code, detail); 200 applies or confirms the answer."""
        with self.cond:
            q = self.by_id.get(question_id)
            if q is None:
                return 404, "unknown or already-finalized question"
            if q.answered:
                if q.answer == answer and q.answered_by == annotator_id:
                    return 200, "already recorded"
                return 409, "conflicting answer already recorded"
            if q.lease_annotator != annotator_id:
                return 409, "lease held by another annotator"
            if q.lease_expires <= now:
                return 410, "lease expired; poll for the next question"
            oracle.apply_answer(
                self.state.store, q.candidate_id, answer == "yes", self.state.ledger
            )
            q.answered = True
            q.answer = answer
            q.answered_by = annotator_id
            self.applied.append((q.candidate_id, answer))
            self.records.append(
                AnswerRecord(question_id, answer, annotator_id, time.time())
            )
            self.answered_total += 1
            self.cond.notify_all()
            return 200, "recorded"

    def counts(self) -> tuple[int, int]:
        answered = sum(1 for q in self.questions if q.answered)
        return answered, len(self.questions)


class AnnotationSession:
    """A live experiment whose yes/no answers come from the HTTP API."""

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir=None,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        time_fn=time.monotonic,
    ):
        self.config = config
        self.out_dir = out_dir
        self.lease_seconds = lease_seconds
        self.time_fn = time_fn
        self.lock = threading.RLock()
        self.phase = "idle"  # idle|bootstrap|collecting|retraining|done|failed|cancelled
        self.cancelled = False
        self.broker: QuestionBroker | None = None
        self.state: ExperimentState | None = None
        self.result: engine_mod.ExperimentReport | None = None
        self.error: BaseException | None = None
        self._thread: threading.Thread | None = None
        self._display_names: dict[str, str] = {}

    # -- lifecycle --------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            raise SelabelError("session already started")
        self.phase = "bootstrap"
        self._thread = threading.Thread(target=self._run, name="selabel-experiment", daemon=True)
        self._thread.start()

    def _factory(self, state: ExperimentState, corpus: Corpus):
        with self.lock:
            self.state = state
            self._display_names = {f.field_id: f.display_name for f in corpus.schema}
            self.broker = QuestionBroker(self, corpus, state)
        return self.broker

    def _run(self) -> None:
        try:
            result = engine_mod.run_experiment(
                self.config, self.out_dir, answer_source_factory=self._factory
            )
            with self.lock:
                self.result = result
                self.phase = "done"
        except SessionCancelled:
            with self.lock:
                self.phase = "cancelled"
        except BaseException as exc:  # surfaced via /api/progress
            with self.lock:
                self.error = exc
                self.phase = "failed"

    def stop(self, timeout: float = 10.0) -> None:
        with self.lock:
            self.cancelled = True
            if self.broker is not None:
                self.broker.cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=timeout)

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout=timeout)

    # -- payloads ---------------------------------------------------------

    def question_payload(
        self, corpus: Corpus, candidate_id: str, round_index: int, seq: int
    ) -> dict:
        c = corpus.candidate(candidate_id)
        doc = corpus.doc(c.doc_id)
        display = self._display_names.get(c.field_id, c.field_id)
        return {
            "question_id": f"r{round_index:02d}-{seq:04d}",
            "candidate_id": candidate_id,
            "doc_id": c.doc_id,
            "field_id": c.field_id,
            "display_name": display,
            "prompt": f"Is this the {display}?",
            "span_text": c.span_text,
            "highlight": {
                "page": c.span_location.page,
                "x0": c.span_location.x0,
                "y0": c.span_location.y0,
                "x1": c.span_location.x1,
                "y1": c.span_location.y1,
            },
            "text_lines": [
                {
                    "text": line.text,
                    "page": line.location.page,
                    "x0": line.location.x0,
                    "y0": line.location.y0,
                    "x1": line.location.x1,
                    "y1": line.location.y1,
                }
                for line in doc.text_lines
            ],
        }

    def progress(self) -> dict:
        with self.lock:
            answered, total = (0, 0) if self.broker is None else self.broker.counts()
            seconds = 0.0
            f1 = None
            round_index = 0
            budget = 0.0
            answered_cum = 0
            if self.state is not None:
                seconds = self.state.ledger.spent_seconds
                budget = self.state.ledger.total_seconds
                f1 = self.state.latest_f1
                round_index = (
                    self.broker.round_index
                    if self.broker is not None and self.phase == "collecting"
                    else self.state.completed_rounds
                )
            if self.broker is not None:
                answered_cum = self.broker.answered_total
            return {
                "phase": self.phase,
                "round": round_index,
                "questions_answered": answered,
                "questions_total": total,
                "answered_cumulative": answered_cum,
                "seconds_spent": seconds,
                "seconds_total": budget,
                "current_f1": f1,
                "error": str(self.error) if self.error else None,
            }


class AnswerBody(BaseModel):
    answer: Literal["yes", "no"]
    annotator: str


def create_app(session: AnnotationSession, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="selabel annotation service")

    @app.get("/api/rounds/current/questions/next")
    def next_question(annotator: str) -> Response:
        with session.lock:
            phase = session.phase
            broker = session.broker
        if phase in ("idle", "done", "failed", "cancelled"):
            return JSONResponse(
                status_code=409,
                content={"detail": f"no active round (phase={phase})"},
            )
        if phase != "collecting" or broker is None:
            # live experiment but between batches (bootstrap or retraining)
            return Response(status_code=204)
        q = broker.next_for(annotator, session.time_fn())
        if q is None:
            return Response(status_code=204)
        payload = dict(q.payload)
        payload["lease"] = {
            "annotator_id": q.lease_annotator,
            "expires_in_seconds": max(0.0, q.lease_expires - session.time_fn()),
        }
        return JSONResponse(status_code=200, content=payload)

    @app.post("/api/questions/{question_id}/answer")
    def answer_question(question_id: str, body: AnswerBody) -> Response:
        with session.lock:
            broker = session.broker
        if broker is None:
            return JSONResponse(status_code=409, content={"detail": "no experiment"})
        status, detail = broker.submit(
            question_id, body.annotator, body.answer, session.time_fn()
        )
        if status == 200:
            content = session.progress()
            content["detail"] = detail
            return JSONResponse(status_code=200, content=content)
        return JSONResponse(status_code=status, content={"detail": detail})

    @app.get("/api/progress")
    def progress() -> dict:
        return session.progress()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
