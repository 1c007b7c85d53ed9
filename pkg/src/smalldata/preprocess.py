"""Bit-exact preprocessing chain from 16-bit height patches to model inputs.

The chain deliberately avoids any rescaling so that physical height
differences survive quantization:

1. quantize_center - subtract the patch mean, re-center at mid-gray 128,
   round half away from zero, clamp to [0, 255]. No division.
2. triplicate      - copy the single channel three times.
3. pad_center      - place the patch centered on a zero 224x224 canvas.

Every step is a pure function; two calls on equal inputs produce identical
bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .heightfield import HeightImage

TARGET_HEIGHT_PX = 224
TARGET_WIDTH_PX = 224


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrayPatch8:
    """8-bit single-channel patch (row-major, shape height x width)."""

    width_px: int
    height_px: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height_px, self.width_px):
            raise PreprocessError(f"pixel grid shape {px.shape} does not match "
                                  f"{self.height_px}x{self.width_px}")
        if px.dtype != np.uint8:
            raise PreprocessError("8-bit patch must be uint8")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayPatch8):
            return NotImplemented
        return (self.width_px == other.width_px and self.height_px == other.height_px
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True, eq=False)
class ModelInput:
    """224x224x3 8-bit tensor; all channels equal, zero border outside the source."""

    values: np.ndarray  # (224, 224, 3) uint8
    source_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (TARGET_HEIGHT_PX, TARGET_WIDTH_PX, 3) or v.dtype != np.uint8:
            raise PreprocessError(
                f"model input must be {TARGET_HEIGHT_PX}x{TARGET_WIDTH_PX}x3 uint8, "
                f"got shape {v.shape} dtype {v.dtype}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelInput):
            return NotImplemented
        return self.source_id == other.source_id and np.array_equal(self.values, other.values)


def round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5))


def quantize_center(img: HeightImage) -> GrayPatch8:
    """16-bit to 8-bit: out = clamp(round(v - mean + 128), 0, 255).

    Rounding is half away from zero. There is no per-image scale
    normalization, so a height step of k gray counts stays k counts apart
    wherever no clamping occurs.
    """
    if img.pixels.size == 0:
        raise PreprocessError("cannot quantize an empty image")
    v = img.pixels.astype(np.float64)
    centered = v - v.mean() + 128.0
    out = np.clip(round_half_away_from_zero(centered), 0.0, 255.0).astype(np.uint8)
    return GrayPatch8(img.width_px, img.height_px, out)


def triplicate(g: GrayPatch8) -> np.ndarray:
    """Stack the single channel into three identical channels, shape (h, w, 3)."""
    return np.repeat(g.pixels[:, :, np.newaxis], 3, axis=2)


def pad_center(p: np.ndarray, source_id: str = "") -> ModelInput:
    """Zero-pad a (h, w, 3) patch onto the 224x224 canvas, centered with floor offsets."""
    p = np.asarray(p)
    if p.ndim != 3 or p.shape[2] != 3:
        raise PreprocessError(f"expected a (h, w, 3) patch, got shape {p.shape}")
    h, w = p.shape[:2]
    if h > TARGET_HEIGHT_PX or w > TARGET_WIDTH_PX:
        raise PreprocessError(f"source {w}x{h} exceeds target "
                              f"{TARGET_WIDTH_PX}x{TARGET_HEIGHT_PX}")
    top = (TARGET_HEIGHT_PX - h) // 2
    left = (TARGET_WIDTH_PX - w) // 2
    canvas = np.zeros((TARGET_HEIGHT_PX, TARGET_WIDTH_PX, 3), dtype=np.uint8)
    canvas[top:top + h, left:left + w, :] = p
    return ModelInput(values=canvas, source_id=source_id)


def preprocess(img: HeightImage, source_id: str = "") -> ModelInput:
    """Full chain: quantize_center, triplicate, pad_center."""
    return pad_center(triplicate(quantize_center(img)), source_id=source_id)


# ---------------------------------------------------------------------------
# Wire format for model inputs, byte-exact:
#
#   offset  size  field
#   0       4     width, uint32 little-endian
#   4       4     height, uint32 little-endian
#   8       4     channels, uint32 little-endian (always 3)
#   12      4     source_id length in bytes, uint32 little-endian
#   16      n     source_id, UTF-8
#   16+n    h*w*c pixel bytes, row-major, channel-interleaved
#            (row 0 col 0 ch 0, row 0 col 0 ch 1, ..., row 0 col 1 ch 0, ...)
# ---------------------------------------------------------------------------

def encode_model_input(mi: ModelInput) -> bytes:
    sid = mi.source_id.encode("utf-8")
    v = mi.values
    header = struct.pack("<IIII", v.shape[1], v.shape[0], v.shape[2], len(sid))
    return header + sid + v.tobytes(order="C")


def decode_model_input(data: bytes) -> ModelInput:
    if len(data) < 16:
        raise PreprocessError("model input blob truncated (header)")
    width, height, channels, sid_len = struct.unpack_from("<IIII", data, 0)
    body = 16 + sid_len
    expected = body + width * height * channels
    if channels != 3:
        raise PreprocessError(f"model input blob declares {channels} channels, expected 3")
    if len(data) != expected:
        raise PreprocessError(f"model input blob has {len(data)} bytes, expected {expected}")
    source_id = data[16:body].decode("utf-8")
    values = np.frombuffer(data[body:], dtype=np.uint8).reshape(height, width, channels)
    return ModelInput(values=values, source_id=source_id)
