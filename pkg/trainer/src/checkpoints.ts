/**
 * Registry of the public checkpoint identifiers the adapter accepts.
 *
 * size_mb mirrors the published PyTorch binary file sizes and param_count the
 * published parameter counts; both are reported as metadata in the init
 * manifest. The adapter fine-tunes a linear softmax head over pooled
 * grayscale features for any of these ids (the head is the same for all;
 * the id gates availability and labels the run), and says so in the
 * manifest rather than pretending to load the backbone weights.
 */

export interface CheckpointInfo {
  size_mb: number;
  param_count: number;
  input_side: number;
}

export const CHECKPOINTS: Record<string, CheckpointInfo> = {
  "microsoft/beit-base-patch16-224": { size_mb: 350, param_count: 86_500_000, input_side: 224 },
  "microsoft/beit-large-patch16-224": { size_mb: 1259, param_count: 307_000_000, input_side: 224 },
  "facebook/deit-tiny-patch16-224": { size_mb: 23, param_count: 5_700_000, input_side: 224 },
  "facebook/deit-base-patch16-224": { size_mb: 346, param_count: 86_600_000, input_side: 224 },
  "facebook/dinov2-small": { size_mb: 88, param_count: 22_100_000, input_side: 224 },
  "microsoft/focalnet-tiny": { size_mb: 114, param_count: 28_600_000, input_side: 224 },
  "microsoft/focalnet-base": { size_mb: 353, param_count: 88_700_000, input_side: 224 },
  "microsoft/resnet-18": { size_mb: 46, param_count: 11_700_000, input_side: 224 },
  "microsoft/resnet-50": { size_mb: 103, param_count: 25_600_000, input_side: 224 },
  "microsoft/resnet-101": { size_mb: 167, param_count: 44_500_000, input_side: 224 },
  "google/vit-base-patch16-224-in21k": { size_mb: 1198, param_count: 86_400_000, input_side: 224 },
  "google/vit-large-patch16-224-in21k": { size_mb: 1249, param_count: 304_000_000, input_side: 224 },
};

export interface TrainerManifest extends CheckpointInfo {
  checkpoint: string;
  head: string;
}

export function manifestFor(checkpoint: string): TrainerManifest | null {
  const info = CHECKPOINTS[checkpoint];
  if (!info) {
    return null;
  }
  return {
    checkpoint,
    ...info,
    head: "linear softmax head over 16x16 mean-pooled grayscale features; " +
      "plain minibatch SGD, zero-initialized, seeded shuffling",
  };
}
