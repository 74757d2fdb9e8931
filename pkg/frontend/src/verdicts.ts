/**
 * Map annotator decisions to verdict bodies, verbatim.
 *
 * Nothing here inspects the pseudo annotation, measures overlap, or applies a
 * threshold. The server owns every acceptance rule; this module only writes
 * down what the human chose.
 */

import type { Box } from "./transform.js";
import { boxToTuple } from "./transform.js";
import type { VerdictBody } from "./types.js";

export function keepBox(): VerdictBody {
  return { answer: "BoxKeep" };
}

export function dropBox(): VerdictBody {
  return { answer: "BoxDrop" };
}

/** The box must already be in full-image coordinates. */
export function correctBox(box: Box): VerdictBody {
  return { answer: "BoxCorrect", new_box: boxToTuple(box) };
}

export function keepClass(): VerdictBody {
  return { answer: "ClassKeep" };
}

/** classIndex is the dense category index the status endpoint lists. */
export function correctClass(classIndex: number): VerdictBody {
  return { answer: "ClassCorrect", new_class: classIndex };
}

/** Canonical wire form: field order fixed by the VerdictBody literal. */
export function serializeVerdict(body: VerdictBody): string {
  return JSON.stringify(body);
}
