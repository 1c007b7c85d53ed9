/**
 * Test helpers: a deterministic fixture dataset in the harness's wire format,
 * and a scripted line-protocol client over a spawned adapter process.
 */

import { ChildProcess, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import * as readline from "node:readline";

import { LABELS } from "../src/data";
import { mulberry32 } from "../src/model";

const SIDE = 224;

function modelInputBlob(sourceId: string, level: number, seed: number): Buffer {
  const sid = Buffer.from(sourceId, "utf-8");
  const header = Buffer.alloc(16);
  header.writeUInt32LE(SIDE, 0);
  header.writeUInt32LE(SIDE, 4);
  header.writeUInt32LE(3, 8);
  header.writeUInt32LE(sid.length, 12);
  const pixels = Buffer.alloc(SIDE * SIDE * 3);
  const rng = mulberry32(seed);
  // content window mimicking the harness's padding: rows 62..161, cols 36..187
  for (let y = 62; y < 162; y++) {
    for (let x = 36; x < 188; x++) {
      const v = Math.max(0, Math.min(255, Math.round(level + (rng() - 0.5) * 24)));
      const base = (y * SIDE + x) * 3;
      pixels[base] = v;
      pixels[base + 1] = v;
      pixels[base + 2] = v;
    }
  }
  return Buffer.concat([header, sid, pixels]);
}

/** Writes a small three-class dataset; per-class levels make it learnable. */
export function writeFixtureDataset(itemsPerClass = 8): string {
  const root = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-fixture-"));
  fs.mkdirSync(path.join(root, "inputs"));
  const parts: Record<string, { id: string; label: string; file: string }[]> = {
    train: [], eval: [], test: [],
  };
  const levels: Record<string, number> = { nominal: 70, gap: 130, overlap: 190 };
  let seed = 1;
  for (const label of LABELS) {
    for (let i = 0; i < itemsPerClass; i++) {
      const id = `${label}-${i}`;
      const file = `inputs/${id}.mi`;
      fs.writeFileSync(path.join(root, file),
                       modelInputBlob(id, levels[label], seed++));
      const part = i < itemsPerClass - 4 ? "train" : i < itemsPerClass - 2 ? "eval" : "test";
      parts[part].push({ id, label, file });
    }
  }
  const manifest = { version: 1, labels: [...LABELS], parts };
  const manifestPath = path.join(root, "trainer_data.json");
  fs.writeFileSync(manifestPath, JSON.stringify(manifest));
  return manifestPath;
}

export const ADAPTER_MAIN = path.join(__dirname, "..", "src", "main.js");

export class Client {
  private proc: ChildProcess;
  private lines: AsyncIterator<string>;

  constructor(dataPath: string, protocol = "1") {
    this.proc = spawn(process.execPath, [ADAPTER_MAIN, "--protocol", protocol,
                                         "--data", dataPath],
                      { stdio: ["pipe", "pipe", "inherit"] });
    const rl = readline.createInterface({ input: this.proc.stdout!, crlfDelay: Infinity });
    this.lines = rl[Symbol.asyncIterator]();
  }

  sendRaw(line: string): void {
    this.proc.stdin!.write(line + "\n");
  }

  async readResponse(timeoutMs = 10000): Promise<Record<string, unknown>> {
    const next = this.lines.next();
    const timeout = new Promise<never>((_, reject) =>
      setTimeout(() => reject(new Error("timed out waiting for response")), timeoutMs)
        .unref());
    const result = await Promise.race([next, timeout]);
    if (result.done) {
      throw new Error("adapter closed stdout");
    }
    return JSON.parse(result.value);
  }

  async roundtrip(payload: Record<string, unknown>): Promise<Record<string, unknown>> {
    this.sendRaw(JSON.stringify(payload));
    return this.readResponse();
  }

  async exitCode(timeoutMs = 10000): Promise<number | null> {
    if (this.proc.exitCode !== null) {
      return this.proc.exitCode;
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error("adapter did not exit")), timeoutMs);
      timer.unref();
      this.proc.once("exit", (code) => {
        clearTimeout(timer);
        resolve(code);
      });
    });
  }

  kill(): void {
    if (this.proc.exitCode === null) {
      this.proc.kill();
    }
  }
}

export const KNOWN_CHECKPOINT = "microsoft/resnet-18";
