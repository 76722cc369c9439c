import { Box, TextLine } from "./types.js";

export interface PixelRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Map a normalized page box to pixel coordinates inside the viewport. */
export function toPixelRect(box: Box, viewportWidth: number, viewportHeight: number): PixelRect {
  return {
    left: box.x0 * viewportWidth,
    top: box.y0 * viewportHeight,
    width: (box.x1 - box.x0) * viewportWidth,
    height: (box.y1 - box.y0) * viewportHeight,
  };
}

/** Lines of the page the highlight sits on, in reading order. */
export function linesForPage(lines: TextLine[], page: number): TextLine[] {
  return lines.filter((l) => l.page === page).sort((a, b) => a.y0 - b.y0 || a.x0 - b.x0);
}

/** Font size that fits a line's box height, clamped to stay legible. */
export function fontSizeFor(line: Box, viewportHeight: number): number {
  const h = (line.y1 - line.y0) * viewportHeight;
  return Math.max(9, Math.min(16, Math.floor(h * 0.85)));
}
