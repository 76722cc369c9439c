import { FlowEvent } from "./flow.js";

/**
 * Keyboard-first controls:
 *   y - stage "yes"      n - stage "no"
 *   u - undo the staged answer before it is sent
 *   Enter - submit the staged answer
 */
export function eventForKey(key: string): FlowEvent | null {
  switch (key.toLowerCase()) {
    case "y":
      return { type: "stage", answer: "yes" };
    case "n":
      return { type: "stage", answer: "no" };
    case "u":
      return { type: "undo" };
    case "enter":
      return { type: "submit" };
    default:
      return null;
  }
}
