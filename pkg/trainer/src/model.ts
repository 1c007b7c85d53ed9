/**
 * Deterministic minibatch SGD for a linear softmax head.
 *
 * Weights start at zero and epoch shuffles are keyed on (seed, epoch index),
 * so a session state (weights, bias, epochs trained, config) fully determines
 * every future update: pausing and resuming replays the exact trajectory.
 */

import { Item, LABELS, Label } from "./data";

export interface HeadState {
  weights: number[][]; // [featureCount][3]
  bias: number[];      // [3]
  epochs: number;
}

/** mulberry32: small, fast, deterministic PRNG over a 32-bit state. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function mixSeed(...parts: number[]): number {
  let h = 0x9e3779b9;
  for (const p of parts) {
    h = Math.imul(h ^ (p >>> 0), 0x85ebca6b);
    h = Math.imul(h ^ (h >>> 13), 0xc2b2ae35);
    h ^= h >>> 16;
  }
  return h >>> 0;
}

export function newHead(featureCount: number): HeadState {
  return {
    weights: Array.from({ length: featureCount }, () => [0, 0, 0]),
    bias: [0, 0, 0],
    epochs: 0,
  };
}

function logits(state: HeadState, features: Float64Array): number[] {
  const out = [state.bias[0], state.bias[1], state.bias[2]];
  for (let f = 0; f < features.length; f++) {
    const x = features[f];
    if (x !== 0) {
      const row = state.weights[f];
      out[0] += row[0] * x;
      out[1] += row[1] * x;
      out[2] += row[2] * x;
    }
  }
  return out;
}

function softmax(z: number[]): number[] {
  const m = Math.max(z[0], z[1], z[2]);
  const e = [Math.exp(z[0] - m), Math.exp(z[1] - m), Math.exp(z[2] - m)];
  const s = e[0] + e[1] + e[2];
  return [e[0] / s, e[1] / s, e[2] / s];
}

export function predict(state: HeadState, features: Float64Array): Label {
  const z = logits(state, features);
  let best = 0;
  for (let c = 1; c < 3; c++) {
    if (z[c] > z[best]) {
      best = c;
    }
  }
  return LABELS[best];
}

function shuffled(n: number, rng: () => number): number[] {
  const order = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

export function trainEpochs(state: HeadState, items: Item[], epochs: number,
                            lr: number, batchSize: number, seed: number): void {
  const labelIndex = new Map(LABELS.map((label, i) => [label, i] as const));
  for (let e = 0; e < epochs; e++) {
    const order = shuffled(items.length, mulberry32(mixSeed(seed, state.epochs)));
    for (let start = 0; start < items.length; start += batchSize) {
      const batch = order.slice(start, start + batchSize);
      const dBias = [0, 0, 0];
      const dW = new Map<number, number[]>();
      for (const idx of batch) {
        const item = items[idx];
        const p = softmax(logits(state, item.features));
        const y = labelIndex.get(item.label)!;
        p[y] -= 1; // d(loss)/d(logits) before batch averaging
        for (let c = 0; c < 3; c++) {
          dBias[c] += p[c];
        }
        for (let f = 0; f < item.features.length; f++) {
          const x = item.features[f];
          if (x === 0) {
            continue;
          }
          let row = dW.get(f);
          if (!row) {
            row = [0, 0, 0];
            dW.set(f, row);
          }
          row[0] += p[0] * x;
          row[1] += p[1] * x;
          row[2] += p[2] * x;
        }
      }
      const scale = lr / batch.length;
      for (let c = 0; c < 3; c++) {
        state.bias[c] -= scale * dBias[c];
      }
      for (const [f, row] of dW) {
        const w = state.weights[f];
        w[0] -= scale * row[0];
        w[1] -= scale * row[1];
        w[2] -= scale * row[2];
      }
    }
    state.epochs += 1;
  }
}
