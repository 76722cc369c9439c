/**
 * Retry an async call with exponential back-off.
 *
 * Only transport-level failures (rejected promise) are retried; any resolved
 * response is returned as-is. Safe for answer submission because the backend
 * treats a re-POST of the identical body as idempotent.
 */

export interface RetryOptions {
  retries?: number;
  baseDelayMs?: number;
  maxDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export function backoffDelay(attempt: number, baseMs: number, maxMs: number): number {
  return Math.min(baseMs * 2 ** attempt, maxMs);
}

export async function retryWithBackoff<T>(
  fn: () => Promise<T>,
  options: RetryOptions = {},
): Promise<T> {
  const retries = options.retries ?? 3;
  const baseMs = options.baseDelayMs ?? 250;
  const maxMs = options.maxDelayMs ?? 4000;
  const sleep = options.sleep ?? defaultSleep;

  let lastError: unknown;
  for (let attempt = 0; attempt <= retries; attempt++) {
    try {
      return await fn();
    } catch (err) {
      lastError = err;
      if (attempt === retries) break;
      await sleep(backoffDelay(attempt, baseMs, maxMs));
    }
  }
  throw lastError;
}
