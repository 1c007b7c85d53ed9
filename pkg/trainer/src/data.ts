/**
 * Loads the harness's trainer data: a JSON manifest naming train/eval/test
 * members and one serialized model-input file per item.
 *
 * Model-input binary layout (all integers little-endian uint32):
 *   width, height, channels, source-id byte length, source id (UTF-8),
 *   then width*height*channels pixel bytes, row-major, channel-interleaved.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const LABELS = ["nominal", "gap", "overlap"] as const;
export type Label = (typeof LABELS)[number];

export interface Item {
  id: string;
  label: Label;
  features: Float64Array;
}

export interface Dataset {
  train: Item[];
  eval: Item[];
  test: Item[];
  featureCount: number;
}

export function decodeModelInput(blob: Buffer): {
  width: number; height: number; channels: number; sourceId: string; pixels: Buffer;
} {
  if (blob.length < 16) {
    throw new Error("model input blob truncated (header)");
  }
  const width = blob.readUInt32LE(0);
  const height = blob.readUInt32LE(4);
  const channels = blob.readUInt32LE(8);
  const sidLen = blob.readUInt32LE(12);
  const body = 16 + sidLen;
  const expected = body + width * height * channels;
  if (blob.length !== expected) {
    throw new Error(`model input blob has ${blob.length} bytes, expected ${expected}`);
  }
  return {
    width,
    height,
    channels,
    sourceId: blob.subarray(16, body).toString("utf-8"),
    pixels: blob.subarray(body),
  };
}

/** Mean-pool the first channel over blockSide x blockSide blocks, scaled to [0, 1]. */
export function pooledFeatures(blob: Buffer, blockSide = 16): Float64Array {
  const { width, height, channels, pixels } = decodeModelInput(blob);
  if (width % blockSide !== 0 || height % blockSide !== 0) {
    throw new Error(`block side ${blockSide} does not divide ${width}x${height}`);
  }
  const cols = width / blockSide;
  const rows = height / blockSide;
  const out = new Float64Array(rows * cols);
  const perBlock = blockSide * blockSide;
  for (let by = 0; by < rows; by++) {
    for (let bx = 0; bx < cols; bx++) {
      let sum = 0;
      for (let y = by * blockSide; y < (by + 1) * blockSide; y++) {
        const rowBase = y * width * channels;
        for (let x = bx * blockSide; x < (bx + 1) * blockSide; x++) {
          sum += pixels[rowBase + x * channels];
        }
      }
      out[by * cols + bx] = sum / perBlock / 255;
    }
  }
  return out;
}

interface ManifestItem {
  id: string;
  label: Label;
  file: string;
}

export function loadDataset(manifestPath: string): Dataset {
  const doc = JSON.parse(fs.readFileSync(manifestPath, "utf-8")) as {
    parts: Record<"train" | "eval" | "test", ManifestItem[]>;
  };
  const root = path.dirname(manifestPath);
  const cache = new Map<string, Float64Array>();
  const loadPart = (items: ManifestItem[]): Item[] =>
    items.map((it) => {
      let features = cache.get(it.file);
      if (!features) {
        features = pooledFeatures(fs.readFileSync(path.join(root, it.file)));
        cache.set(it.file, features);
      }
      return { id: it.id, label: it.label, features };
    });
  const train = loadPart(doc.parts.train);
  const evalPart = loadPart(doc.parts.eval);
  const test = loadPart(doc.parts.test);
  const featureCount = train[0]?.features.length ?? evalPart[0]?.features.length ?? 0;
  return { train, eval: evalPart, test, featureCount };
}
