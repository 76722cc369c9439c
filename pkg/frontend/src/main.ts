import { AnnotationApi } from "./api.js";
import { canSubmit, FlowEvent, FlowState, initialState, reduce } from "./flow.js";
import { fontSizeFor, linesForPage, toPixelRect } from "./highlight.js";
import { eventForKey } from "./keyboard.js";
import { Progress, Question } from "./types.js";

const POLL_MS = 600;
const PROGRESS_MS = 1500;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function annotatorId(): string {
  const stored = localStorage.getItem("annotator_id");
  if (stored) return stored;
  const fresh = `annotator-${Math.random().toString(36).slice(2, 8)}`;
  localStorage.setItem("annotator_id", fresh);
  return fresh;
}

class App {
  private state: FlowState = initialState;
  private api = new AnnotationApi(annotatorId());
  private fetching = false;

  private docPane = byId<HTMLDivElement>("doc-pane");
  private prompt = byId<HTMLDivElement>("prompt");
  private spanText = byId<HTMLSpanElement>("span-text");
  private status = byId<HTMLDivElement>("status");
  private yesBtn = byId<HTMLButtonElement>("btn-yes");
  private noBtn = byId<HTMLButtonElement>("btn-no");
  private undoBtn = byId<HTMLButtonElement>("btn-undo");
  private submitBtn = byId<HTMLButtonElement>("btn-submit");
  private progressBar = byId<HTMLDivElement>("progress-fill");
  private progressText = byId<HTMLDivElement>("progress-text");
  private phaseBadge = byId<HTMLSpanElement>("phase");

  start(): void {
    this.yesBtn.addEventListener("click", () => this.dispatch({ type: "stage", answer: "yes" }));
    this.noBtn.addEventListener("click", () => this.dispatch({ type: "stage", answer: "no" }));
    this.undoBtn.addEventListener("click", () => this.dispatch({ type: "undo" }));
    this.submitBtn.addEventListener("click", () => this.dispatch({ type: "submit" }));
    document.addEventListener("keydown", (e) => {
      if (e.target instanceof HTMLInputElement) return;
      const event = eventForKey(e.key);
      if (event) {
        e.preventDefault();
        this.dispatch(event);
      }
    });
    void this.pollLoop();
    void this.progressLoop();
  }

  private dispatch(event: FlowEvent): void {
    const before = this.state;
    this.state = reduce(this.state, event);
    if (before.kind !== "submitting" && this.state.kind === "submitting") {
      void this.doSubmit();
    }
    this.render();
  }

  private async pollLoop(): Promise<void> {
    for (;;) {
      if (this.state.kind === "loading" && !this.fetching) {
        this.fetching = true;
        try {
          const result = await this.api.nextQuestion();
          if (result.kind === "question") {
            this.dispatch({ type: "got-question", question: result.question });
          } else if (result.kind === "empty") {
            this.dispatch({ type: "got-empty" });
          } else {
            this.dispatch({ type: "got-no-round" });
          }
        } catch {
          // transport hiccup: stay in loading, poll again
        } finally {
          this.fetching = false;
        }
      } else if (this.state.kind === "empty" || this.state.kind === "no-round") {
        this.state = { kind: "loading" };
      }
      await new Promise((r) => setTimeout(r, POLL_MS));
    }
  }

  private async doSubmit(): Promise<void> {
    if (this.state.kind !== "submitting") return;
    const { question, answer } = this.state;
    try {
      const result = await this.api.submitAnswer(question.question_id, answer);
      if (result.kind === "ok") {
        this.dispatch({ type: "submit-ok" });
        this.renderProgress(result.progress);
      } else if (result.kind === "expired") {
        this.dispatch({ type: "submit-expired" });
      } else {
        this.dispatch({ type: "submit-conflict" });
      }
    } catch {
      // retries exhausted: lease may still be live, go fetch it again
      this.dispatch({ type: "submit-expired" });
    }
  }

  private async progressLoop(): Promise<void> {
    for (;;) {
      try {
        this.renderProgress(await this.api.progress());
      } catch {
        // keep the last known panel on transport errors
      }
      await new Promise((r) => setTimeout(r, PROGRESS_MS));
    }
  }

  private renderProgress(p: Progress): void {
    const pct = p.seconds_total > 0 ? (100 * p.seconds_spent) / p.seconds_total : 0;
    this.progressBar.style.width = `${pct.toFixed(1)}%`;
    const f1 = p.current_f1 === null ? "n/a" : p.current_f1.toFixed(3);
    this.progressText.textContent =
      `round ${p.round} - ${p.questions_answered}/${p.questions_total} answered this round - ` +
      `${Math.round(p.seconds_spent)}s of ${Math.round(p.seconds_total)}s budget - F1 ${f1}`;
    this.phaseBadge.textContent = p.phase;
    this.phaseBadge.className = `badge badge-${p.phase}`;
  }

  private render(): void {
    const s = this.state;
    this.yesBtn.disabled = s.kind !== "question";
    this.noBtn.disabled = s.kind !== "question";
    this.undoBtn.disabled = !(s.kind === "question" && s.staged !== null);
    this.submitBtn.disabled = !canSubmit(s);
    this.yesBtn.classList.toggle("staged", s.kind === "question" && s.staged === "yes");
    this.noBtn.classList.toggle("staged", s.kind === "question" && s.staged === "no");

    switch (s.kind) {
      case "loading":
        this.status.textContent = "fetching next question...";
        break;
      case "empty":
        this.status.textContent = "queue empty - waiting (model may be retraining)";
        this.clearQuestion();
        break;
      case "no-round":
        this.status.textContent = "no active round";
        this.clearQuestion();
        break;
      case "question":
        this.status.textContent = s.staged
          ? `staged: ${s.staged} (press Enter to submit, u to undo)`
          : "stage an answer: y / n";
        this.renderQuestion(s.question);
        break;
      case "submitting":
        this.status.textContent = "submitting...";
        break;
      case "done":
        this.status.textContent = s.message;
        this.clearQuestion();
        break;
    }
  }

  private clearQuestion(): void {
    this.prompt.textContent = "";
    this.spanText.textContent = "";
    this.docPane.replaceChildren();
  }

  private renderQuestion(q: Question): void {
    this.prompt.textContent = q.prompt;
    this.spanText.textContent = q.span_text;
    const w = this.docPane.clientWidth;
    const h = this.docPane.clientHeight;
    this.docPane.replaceChildren();
    for (const line of linesForPage(q.text_lines, q.highlight.page)) {
      const el = document.createElement("div");
      el.className = "doc-line";
      el.textContent = line.text;
      const rect = toPixelRect(line, w, h);
      el.style.left = `${rect.left}px`;
      el.style.top = `${rect.top}px`;
      el.style.fontSize = `${fontSizeFor(line, h)}px`;
      this.docPane.appendChild(el);
    }
    const hl = document.createElement("div");
    hl.className = "highlight-box";
    const rect = toPixelRect(q.highlight, w, h);
    hl.style.left = `${rect.left - 2}px`;
    hl.style.top = `${rect.top - 2}px`;
    hl.style.width = `${rect.width + 4}px`;
    hl.style.height = `${rect.height + 4}px`;
    this.docPane.appendChild(hl);
  }
}

new App().start();
