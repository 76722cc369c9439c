import { describe, expect, it } from "vitest";

import { backoffDelay, retryWithBackoff } from "../src/retry.js";

const noSleep = async () => {};

describe("retryWithBackoff", () => {
  it("returns the first successful result", async () => {
    let calls = 0;
    const result = await retryWithBackoff(
      async () => {
        calls++;
        return "ok";
      },
      { sleep: noSleep },
    );
    expect(result).toBe("ok");
    expect(calls).toBe(1);
  });

  it("retries transport failures and then succeeds", async () => {
    let calls = 0;
    const result = await retryWithBackoff(
      async () => {
        calls++;
        if (calls < 3) throw new Error("network down");
        return "recovered";
      },
      { retries: 3, sleep: noSleep },
    );
    expect(result).toBe("recovered");
    expect(calls).toBe(3);
  });

  it("gives up after the configured retries", async () => {
    let calls = 0;
    await expect(
      retryWithBackoff(
        async () => {
          calls++;
          throw new Error("still down");
        },
        { retries: 2, sleep: noSleep },
      ),
    ).rejects.toThrow("still down");
    expect(calls).toBe(3); // initial try + 2 retries
  });

  it("does not retry resolved responses, even error statuses", async () => {
    let calls = 0;
    const result = await retryWithBackoff(
      async () => {
        calls++;
        return { status: 409 };
      },
      { retries: 3, sleep: noSleep },
    );
    expect(result.status).toBe(409);
    expect(calls).toBe(1);
  });

  it("backs off exponentially with a ceiling", () => {
    expect(backoffDelay(0, 250, 4000)).toBe(250);
    expect(backoffDelay(1, 250, 4000)).toBe(500);
    expect(backoffDelay(2, 250, 4000)).toBe(1000);
    expect(backoffDelay(10, 250, 4000)).toBe(4000);
  });

  it("sleeps between attempts with growing delays", async () => {
    const delays: number[] = [];
    await expect(
      retryWithBackoff(
        async () => {
          throw new Error("x");
        },
        { retries: 3, baseDelayMs: 100, sleep: async (ms) => void delays.push(ms) },
      ),
    ).rejects.toThrow();
    expect(delays).toEqual([100, 200, 400]);
  });
});
