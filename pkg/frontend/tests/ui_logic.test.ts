import { describe, expect, it } from "vitest";

import { fontSizeFor, linesForPage, toPixelRect } from "../src/highlight.js";
import { eventForKey } from "../src/keyboard.js";
import { TextLine } from "../src/types.js";

describe("highlight geometry", () => {
  it("positions the box proportionally to the viewport", () => {
    const rect = toPixelRect({ page: 0, x0: 0.1, y0: 0.2, x1: 0.4, y1: 0.25 }, 800, 1000);
    expect(rect.left).toBeCloseTo(80, 9);
    expect(rect.top).toBeCloseTo(200, 9);
    expect(rect.width).toBeCloseTo(240, 9);
    expect(rect.height).toBeCloseTo(50, 9);
  });

  it("degenerate boxes keep non-negative size", () => {
    const rect = toPixelRect({ page: 0, x0: 0.5, y0: 0.5, x1: 0.5, y1: 0.5 }, 640, 480);
    expect(rect.width).toBe(0);
    expect(rect.height).toBe(0);
  });

  it("filters and orders lines for the highlighted page", () => {
    const lines: TextLine[] = [
      { text: "page1-low", page: 1, x0: 0.1, y0: 0.8, x1: 0.3, y1: 0.82 },
      { text: "page0", page: 0, x0: 0.1, y0: 0.3, x1: 0.3, y1: 0.32 },
      { text: "page1-high", page: 1, x0: 0.1, y0: 0.1, x1: 0.3, y1: 0.12 },
      { text: "page1-high-right", page: 1, x0: 0.5, y0: 0.1, x1: 0.7, y1: 0.12 },
    ];
    expect(linesForPage(lines, 1).map((l) => l.text)).toEqual([
      "page1-high",
      "page1-high-right",
      "page1-low",
    ]);
  });

  it("clamps font size into a legible range", () => {
    expect(fontSizeFor({ page: 0, x0: 0, y0: 0, x1: 1, y1: 0.001 }, 1000)).toBe(9);
    expect(fontSizeFor({ page: 0, x0: 0, y0: 0, x1: 1, y1: 0.5 }, 1000)).toBe(16);
  });
});

describe("keyboard mapping", () => {
  it("y and n stage answers", () => {
    expect(eventForKey("y")).toEqual({ type: "stage", answer: "yes" });
    expect(eventForKey("N")).toEqual({ type: "stage", answer: "no" });
  });

  it("u undoes and Enter submits", () => {
    expect(eventForKey("u")).toEqual({ type: "undo" });
    expect(eventForKey("Enter")).toEqual({ type: "submit" });
  });

  it("other keys are ignored", () => {
    expect(eventForKey("x")).toBeNull();
    expect(eventForKey("Escape")).toBeNull();
  });
});
