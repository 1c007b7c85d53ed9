/**
 * Per-class precision/recall/F1/accuracy and macro/micro F1, with the same
 * zero-denominator conventions and arithmetic order as the harness, so both
 * sides agree to within floating-point identity on the same predictions.
 */

import { LABELS, Label } from "./data";

export interface ClassMetrics {
  precision: number;
  recall: number;
  f1: number;
  accuracy: number;
}

export interface EvalReport {
  per_class: Record<Label, ClassMetrics>;
  macro_f1: number;
  micro_f1: number;
  n_items: number;
}

export function evaluate(truths: Label[], preds: Label[]): EvalReport {
  if (truths.length !== preds.length) {
    throw new Error(`got ${truths.length} truths but ${preds.length} predictions`);
  }
  const perClass = {} as Record<Label, ClassMetrics>;
  let f1Sum = 0;
  let correct = 0;
  for (let i = 0; i < truths.length; i++) {
    if (truths[i] === preds[i]) {
      correct += 1;
    }
  }
  for (const label of LABELS) {
    let tp = 0;
    let fp = 0;
    let fn = 0;
    for (let i = 0; i < truths.length; i++) {
      if (preds[i] === label && truths[i] === label) {
        tp += 1;
      } else if (preds[i] === label) {
        fp += 1;
      } else if (truths[i] === label) {
        fn += 1;
      }
    }
    const precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const f1 = precision + recall > 0 ? (2.0 * precision * recall) / (precision + recall) : 0.0;
    perClass[label] = { precision, recall, f1, accuracy: recall };
    f1Sum += f1;
  }
  return {
    per_class: perClass,
    macro_f1: f1Sum / LABELS.length,
    micro_f1: truths.length > 0 ? correct / truths.length : 0.0,
    n_items: truths.length,
  };
}
