import { Answer, NextResult, Progress, SubmitResult } from "./types.js";
import { retryWithBackoff, RetryOptions } from "./retry.js";

type Fetch = typeof fetch;

/**
 * Thin client for the annotation service. The fetch implementation is
 * injectable so the idempotent-retry behaviour is testable without a server.
 */
export class AnnotationApi {
  constructor(
    private readonly annotator: string,
    private readonly baseUrl: string = "",
    private readonly fetchImpl: Fetch = fetch.bind(globalThis),
    private readonly retryOptions: RetryOptions = {},
  ) {}

  async nextQuestion(): Promise<NextResult> {
    const url = `${this.baseUrl}/api/rounds/current/questions/next?annotator=${encodeURIComponent(this.annotator)}`;
    const response = await retryWithBackoff(() => this.fetchImpl(url), this.retryOptions);
    if (response.status === 204) return { kind: "empty" };
    if (response.status === 409) return { kind: "no-round" };
    if (!response.ok) throw new Error(`next failed: ${response.status}`);
    return { kind: "question", question: await response.json() };
  }

  /**
   * POST one answer. Network failures re-send the identical body; the server
   * charges at most once per question, so retries cannot double-label.
   */
  async submitAnswer(questionId: string, answer: Answer): Promise<SubmitResult> {
    const url = `${this.baseUrl}/api/questions/${encodeURIComponent(questionId)}/answer`;
    const body = JSON.stringify({ answer, annotator: this.annotator });
    const response = await retryWithBackoff(
      () =>
        this.fetchImpl(url, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body,
        }),
      this.retryOptions,
    );
    if (response.status === 410) return { kind: "expired" };
    if (response.status === 409) return { kind: "conflict" };
    if (!response.ok) throw new Error(`submit failed: ${response.status}`);
    return { kind: "ok", progress: await response.json() };
  }

  async progress(): Promise<Progress> {
    const response = await retryWithBackoff(
      () => this.fetchImpl(`${this.baseUrl}/api/progress`),
      this.retryOptions,
    );
    if (!response.ok) throw new Error(`progress failed: ${response.status}`);
    return response.json();
  }
}
