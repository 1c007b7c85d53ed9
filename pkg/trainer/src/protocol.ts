/**
 * Wire protocol: one JSON object per line over stdin/stdout, strictly
 * alternating request/response. Every response carries ok: true | false;
 * failures add an error string ("checkpoint_unavailable" for unknown
 * checkpoint ids, "bad_request" for malformed or out-of-order requests).
 */

import * as readline from "node:readline";

export interface InitRequest {
  cmd: "init";
  checkpoint: string;
  lr: number;
  batch_size: number;
  seed: number;
}

export interface TrainRequest {
  cmd: "train";
  epochs: number;
}

export type Request =
  | InitRequest
  | TrainRequest
  | { cmd: "eval_test" }
  | { cmd: "pause" }
  | { cmd: "resume"; token: string }
  | { cmd: "shutdown" };

export type Response =
  | ({ ok: true } & Record<string, unknown>)
  | { ok: false; error: string };

export const PROTOCOL_VERSION = 1;

export function writeLine(payload: Response): void {
  process.stdout.write(JSON.stringify(payload) + "\n");
}

export async function* readLines(stream: NodeJS.ReadableStream): AsyncIterable<string> {
  const rl = readline.createInterface({ input: stream, crlfDelay: Infinity });
  for await (const line of rl) {
    const trimmed = line.trim();
    if (trimmed) {
      yield trimmed;
    }
  }
}
