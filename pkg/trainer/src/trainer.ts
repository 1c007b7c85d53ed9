/**
 * Session state machine behind the wire protocol. One session per process;
 * pause() writes the full head state to a token file and resume() restores
 * it, so the harness can park a trial and continue it later, possibly in a
 * fresh process.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { manifestFor } from "./checkpoints";
import { Dataset, Item, Label, loadDataset } from "./data";
import { EvalReport, evaluate } from "./metrics";
import { HeadState, newHead, predict, trainEpochs } from "./model";
import { PROTOCOL_VERSION, Request, Response } from "./protocol";

interface SessionConfig {
  checkpoint: string;
  lr: number;
  batchSize: number;
  seed: number;
}

const BAD_REQUEST: Response = { ok: false, error: "bad_request" };

export class TrainerSession {
  private dataset: Dataset | null = null;
  private config: SessionConfig | null = null;
  private head: HeadState | null = null;

  constructor(private readonly dataPath: string) {}

  handle(msg: unknown): Response {
    if (typeof msg !== "object" || msg === null || !("cmd" in msg)) {
      return BAD_REQUEST;
    }
    const req = msg as Request;
    switch (req.cmd) {
      case "init":
        return this.init(req);
      case "train":
        return this.train(req);
      case "eval_test":
        return this.evalTest();
      case "pause":
        return this.pause();
      case "resume":
        return this.resume(req);
      default:
        return BAD_REQUEST;
    }
  }

  private init(req: { checkpoint: string; lr: number; batch_size: number; seed: number }): Response {
    const manifest = manifestFor(req.checkpoint);
    if (!manifest) {
      return { ok: false, error: "checkpoint_unavailable" };
    }
    if (typeof req.lr !== "number" || req.lr <= 0
        || !Number.isInteger(req.batch_size) || req.batch_size <= 0) {
      return BAD_REQUEST;
    }
    try {
      this.dataset = this.dataset ?? loadDataset(this.dataPath);
    } catch (err) {
      return { ok: false, error: `data_unavailable: ${(err as Error).message}` };
    }
    this.config = {
      checkpoint: req.checkpoint,
      lr: req.lr,
      batchSize: req.batch_size,
      seed: typeof req.seed === "number" ? req.seed : 0,
    };
    this.head = newHead(this.dataset.featureCount);
    return { ok: true, protocol: PROTOCOL_VERSION, manifest };
  }

  private ready(): boolean {
    return this.dataset !== null && this.config !== null && this.head !== null;
  }

  private report(items: Item[]): EvalReport {
    const truths: Label[] = [];
    const preds: Label[] = [];
    for (const item of items) {
      truths.push(item.label);
      preds.push(predict(this.head!, item.features));
    }
    return evaluate(truths, preds);
  }

  private train(req: { epochs: number }): Response {
    if (!this.ready() || !Number.isInteger(req.epochs) || req.epochs < 0) {
      return BAD_REQUEST;
    }
    trainEpochs(this.head!, this.dataset!.train, req.epochs,
                this.config!.lr, this.config!.batchSize, this.config!.seed);
    const metric = this.report(this.dataset!.eval).macro_f1;
    return { ok: true, metric, epochs_done: this.head!.epochs };
  }

  private evalTest(): Response {
    if (!this.ready()) {
      return BAD_REQUEST;
    }
    return { ok: true, report: this.report(this.dataset!.test) };
  }

  private pause(): Response {
    if (!this.ready()) {
      return BAD_REQUEST;
    }
    // saved state (and any checkpoint-derived files) live under the cache
    // directory when the harness provides one
    const cacheRoot = process.env.SMALLDATA_CHECKPOINT_CACHE ?? os.tmpdir();
    fs.mkdirSync(cacheRoot, { recursive: true });
    const token = path.join(
      fs.mkdtempSync(path.join(cacheRoot, "smalldata-trainer-")), "state.json");
    fs.writeFileSync(token, JSON.stringify({
      version: 1,
      config: this.config,
      head: this.head,
    }));
    return { ok: true, token };
  }

  private resume(req: { token: string }): Response {
    let state: { version: number; config: SessionConfig; head: HeadState };
    try {
      state = JSON.parse(fs.readFileSync(req.token, "utf-8"));
    } catch {
      return BAD_REQUEST;
    }
    if (state.version !== 1 || !state.config || !state.head) {
      return BAD_REQUEST;
    }
    try {
      this.dataset = this.dataset ?? loadDataset(this.dataPath);
    } catch (err) {
      return { ok: false, error: `data_unavailable: ${(err as Error).message}` };
    }
    this.config = state.config;
    this.head = state.head;
    return { ok: true };
  }
}
