"""Height-profile data model and seeded synthetic generator for defect patches.

A height profile is a 16-bit grayscale raster in which one gray count
corresponds to a fixed physical height step (1.77 um by default) and the two
pixel axes carry separate physical resolutions (0.041 mm across the tape,
0.4 mm along the layup direction). Patches are 152x100 crops of such rasters,
labeled nominal, gap or overlap.

The synthetic generator builds noise-free two-plateau geometry (substrate and
substrate + one tape height, split at a drawn boundary column), carves the
defect signature in, then adds i.i.d. Gaussian sensor noise:

* nominal  - plateaus only.
* gap      - a strip of columns at substrate level strictly inside the tape
             plateau. The strip is drawn left of the lowest boundary position
             so its location is independent of the boundary column.
* overlap  - a strip at substrate + two tape heights straddling the boundary.

The boundary column is drawn from a coarse grid of positions spanning the
configured range, spaced wider than the widest defect strip can reach. This
keeps the three classes linearly identifiable after mean-centering: with a
densely varying boundary, a defect strip's direct effect on any
boundary-insensitive linear statistic cancels exactly against the mean shift
it causes, and no linear model can tell the classes apart. The grid breaks
that cancellation while every boundary still lies inside the configured
range.

Everything is a pure function of (config, label, seed).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .seeding import MASK64

GRAY_MAX = 65535
PATCH_WIDTH_PX = 152
PATCH_HEIGHT_PX = 100

# Odd 64-bit stride (splitmix golden gamma): index -> seed is injective mod 2^64.
_SEED_STRIDE = 0x9E3779B97F4A7C15


class HeightfieldError(ValueError):
    """Invalid height-profile data or configuration."""


class GeometryError(HeightfieldError):
    """A requested defect strip does not fit inside the patch."""


class FormatError(HeightfieldError):
    """Rejected image file; the message names the offending field."""


class DefectLabel(Enum):
    NOMINAL = "nominal"
    GAP = "gap"
    OVERLAP = "overlap"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


LABELS: tuple[DefectLabel, ...] = (DefectLabel.NOMINAL, DefectLabel.GAP, DefectLabel.OVERLAP)
LABEL_INDEX: dict[DefectLabel, int] = {label: i for i, label in enumerate(LABELS)}


def label_from_name(name: str) -> DefectLabel:
    for label in LABELS:
        if label.value == name:
            return label
    raise HeightfieldError(f"unknown defect label {name!r}")


@dataclass(frozen=True)
class Calibration:
    """Physical scaling of a height raster.

    z_microns_per_gray : height step per gray count
    x_mm_per_px        : resolution across the tape width
    y_mm_per_px        : scan distance along the layup direction
    tape_height_gray   : gray counts spanned by one tape thickness
    tape_width_mm      : physical width of a single tape
    """

    z_microns_per_gray: float = 1.77
    x_mm_per_px: float = 0.041
    y_mm_per_px: float = 0.4
    tape_height_gray: int = 79
    tape_width_mm: float = 12.54

    def __post_init__(self):
        for name in ("z_microns_per_gray", "x_mm_per_px", "y_mm_per_px",
                     "tape_height_gray", "tape_width_mm"):
            if getattr(self, name) <= 0:
                raise HeightfieldError(f"calibration field {name} must be strictly positive")

    @property
    def tape_height_microns(self) -> float:
        """Physical tape thickness implied by the gray-count height."""
        return self.tape_height_gray * self.z_microns_per_gray


@dataclass(frozen=True, eq=False)
class HeightImage:
    """Immutable 16-bit height raster with its calibration."""

    width_px: int
    height_px: int
    pixels: np.ndarray  # shape (height_px, width_px), uint16, read-only
    calibration: Calibration = field(default_factory=Calibration)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape != (self.height_px, self.width_px):
            raise HeightfieldError(
                f"pixel grid shape {px.shape} does not match "
                f"{self.height_px}x{self.width_px} (rows x cols)")
        if px.dtype != np.uint16:
            if not np.issubdtype(px.dtype, np.integer):
                raise HeightfieldError("pixels must be integers")
            if px.size and (px.min() < 0 or px.max() > GRAY_MAX):
                raise HeightfieldError(f"pixel values must lie in [0, {GRAY_MAX}]")
            px = px.astype(np.uint16)
        else:
            px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, pixels, calibration: Calibration | None = None) -> "HeightImage":
        px = np.asarray(pixels)
        return cls(px.shape[1], px.shape[0], px, calibration or Calibration())

    def __eq__(self, other) -> bool:
        if not isinstance(other, HeightImage):
            return NotImplemented
        return (self.width_px == other.width_px
                and self.height_px == other.height_px
                and np.array_equal(self.pixels, other.pixels)
                and self.calibration == other.calibration)


@dataclass(frozen=True)
class Provenance:
    """How a synthetic patch was produced (enough to regenerate it)."""

    seed: int
    noise_sigma_gray: float
    defect_column_px: int | None = None
    defect_width_px: int | None = None


@dataclass(frozen=True)
class LabeledPatch:
    image: HeightImage
    label: DefectLabel
    provenance: Provenance

    def __post_init__(self):
        if (self.image.width_px, self.image.height_px) != (PATCH_WIDTH_PX, PATCH_HEIGHT_PX):
            raise HeightfieldError(
                f"patch must be {PATCH_WIDTH_PX}x{PATCH_HEIGHT_PX} px, got "
                f"{self.image.width_px}x{self.image.height_px}")
        has_defect_fields = (self.provenance.defect_column_px is not None
                             and self.provenance.defect_width_px is not None)
        if self.label is DefectLabel.NOMINAL:
            if (self.provenance.defect_column_px is not None
                    or self.provenance.defect_width_px is not None):
                raise HeightfieldError("nominal patch must not carry defect geometry")
        elif not has_defect_fields:
            raise HeightfieldError(f"{self.label.value} patch must record defect geometry")


@dataclass(frozen=True)
class SynthesisConfig:
    """Generator settings. Ranges are inclusive [lo, hi] in pixels."""

    substrate_level_gray: int = 20000
    noise_sigma_gray: float = 3.0
    defect_width_px: tuple[int, int] = (3, 20)
    boundary_column_px: tuple[int, int] = (30, 120)
    seed: int = 0
    calibration: Calibration = field(default_factory=Calibration)

    def __post_init__(self):
        if self.substrate_level_gray < 0:
            raise HeightfieldError("substrate level must be non-negative")
        if self.substrate_level_gray + 2 * self.calibration.tape_height_gray > GRAY_MAX:
            raise HeightfieldError(
                "substrate level leaves no headroom for an overlap "
                f"(needs substrate + 2 x tape height <= {GRAY_MAX})")
        if self.noise_sigma_gray < 0:
            raise HeightfieldError("noise sigma must be >= 0")
        for name, (lo, hi) in (("defect_width_px", self.defect_width_px),
                               ("boundary_column_px", self.boundary_column_px)):
            if lo > hi:
                raise HeightfieldError(f"{name} range [{lo}, {hi}] is empty")
            if lo < 1 or hi >= PATCH_WIDTH_PX:
                raise HeightfieldError(f"{name} range [{lo}, {hi}] must lie inside the patch width")


def physical_extent(img: HeightImage) -> tuple[float, float, float]:
    """(width_mm, length_mm, z_range_microns) of a height raster.

    Width follows the across-tape resolution, length the scan direction, and
    the z range is the min-to-max pixel spread scaled to microns.
    """
    cal = img.calibration
    width_mm = img.width_px * cal.x_mm_per_px
    length_mm = img.height_px * cal.y_mm_per_px
    if img.pixels.size == 0:
        z_range = 0.0
    else:
        z_range = float(int(img.pixels.max()) - int(img.pixels.min())) * cal.z_microns_per_gray
    return width_mm, length_mm, z_range


def _patch_rng(cfg: SynthesisConfig, label: DefectLabel, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [cfg.seed & MASK64, seed & MASK64, LABEL_INDEX[label]]))


def boundary_positions(cfg: SynthesisConfig) -> list[int]:
    """Boundary columns the generator draws from: a coarse grid over the range.

    Grid spacing exceeds twice the widest defect strip, so strips anchored to
    one boundary position never reach a neighboring one.
    """
    lo, hi = cfg.boundary_column_px
    if lo == hi:
        return [lo]
    min_spacing = 2 * cfg.defect_width_px[1] + 1
    n = max(2, 1 + (hi - lo) // min_spacing)
    return sorted({int(round(v)) for v in np.linspace(lo, hi, n)})


def synthesize_patch(cfg: SynthesisConfig, label: DefectLabel, seed: int) -> LabeledPatch:
    """Generate one labeled 152x100 patch, deterministic in (cfg, label, seed)."""
    rng = _patch_rng(cfg, label, seed)
    substrate = cfg.substrate_level_gray
    tape = substrate + cfg.calibration.tape_height_gray
    b_lo = cfg.boundary_column_px[0]
    w_lo, w_hi = cfg.defect_width_px

    positions = boundary_positions(cfg)
    boundary = int(positions[rng.integers(len(positions))])
    grid = np.full((PATCH_HEIGHT_PX, PATCH_WIDTH_PX), substrate, dtype=np.float64)
    grid[:, :boundary] = tape

    defect_col: int | None = None
    defect_width: int | None = None
    if label is DefectLabel.GAP:
        width = int(rng.integers(w_lo, w_hi + 1))
        # Strip stays left of the lowest possible boundary, keeping at least one
        # tape column on each side for every boundary draw.
        col_hi = b_lo - 1 - width
        if col_hi < 1:
            raise GeometryError(
                f"gap strip of width {width} does not fit left of boundary column {b_lo}")
        col = int(rng.integers(1, col_hi + 1))
        grid[:, col:col + width] = substrate
        defect_col, defect_width = col, width
    elif label is DefectLabel.OVERLAP:
        width = int(rng.integers(w_lo, w_hi + 1))
        if width < 2:
            raise GeometryError("overlap strip needs width >= 2 to straddle the boundary")
        tape_side = int(rng.integers(1, width))  # columns left of the boundary
        col = boundary - tape_side
        if col < 0 or col + width > PATCH_WIDTH_PX:
            raise GeometryError(
                f"overlap strip [{col}, {col + width}) exceeds the patch bounds")
        grid[:, col:col + width] = substrate + 2 * cfg.calibration.tape_height_gray
        defect_col, defect_width = col, width

    if cfg.noise_sigma_gray > 0:
        grid = grid + rng.normal(0.0, cfg.noise_sigma_gray, grid.shape)
        grid = np.clip(np.rint(grid), 0, GRAY_MAX)
    pixels = grid.astype(np.uint16)

    image = HeightImage(PATCH_WIDTH_PX, PATCH_HEIGHT_PX, pixels, cfg.calibration)
    prov = Provenance(seed=seed, noise_sigma_gray=cfg.noise_sigma_gray,
                      defect_column_px=defect_col, defect_width_px=defect_width)
    return LabeledPatch(image=image, label=label, provenance=prov)


def derive_item_seed(base_seed: int, index: int) -> int:
    """Distinct per-item seed: stride by an odd constant, bijective mod 2^64."""
    return (base_seed + (index + 1) * _SEED_STRIDE) & MASK64


def imbalanced_counts(total: int) -> dict[DefectLabel, int]:
    """Per-label counts near the production imbalance 84/12/4 (largest remainder)."""
    fractions = (0.84, 0.12, 0.04)
    raw = [f * total for f in fractions]
    counts = [math.floor(r) for r in raw]
    order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:total - sum(counts)]:
        counts[i] += 1
    return dict(zip(LABELS, counts))


def synthesize_dataset(cfg: SynthesisConfig,
                       counts: dict[DefectLabel, int]) -> tuple[list[LabeledPatch], dict]:
    """Generate counts[label] patches per label, plus a manifest describing them.

    Item seeds are derived from cfg.seed with a bijective stride so they are
    pairwise distinct. The manifest lists one record per patch (id, label,
    seed) in generation order, the per-label counts, and the full config.
    """
    for label, n in counts.items():
        if n < 0:
            raise HeightfieldError(f"negative count for {label.value}")
    patches: list[LabeledPatch] = []
    items: list[dict] = []
    index = 0
    for label in LABELS:
        for _ in range(counts.get(label, 0)):
            item_seed = derive_item_seed(cfg.seed, index)
            patch = synthesize_patch(cfg, label, item_seed)
            patches.append(patch)
            record = {"id": f"{label.value}-{index:06d}", "label": label.value,
                      "seed": item_seed}
            if label is not DefectLabel.NOMINAL:
                record["defect_column_px"] = patch.provenance.defect_column_px
                record["defect_width_px"] = patch.provenance.defect_width_px
            items.append(record)
            index += 1
    manifest = {
        "version": 1,
        "counts": {label.value: int(counts.get(label, 0)) for label in LABELS},
        "config": synthesis_config_to_dict(cfg),
        "items": items,
    }
    return patches, manifest


def synthesis_config_to_dict(cfg: SynthesisConfig) -> dict:
    cal = cfg.calibration
    return {
        "substrate_level_gray": cfg.substrate_level_gray,
        "noise_sigma_gray": cfg.noise_sigma_gray,
        "defect_width_px": list(cfg.defect_width_px),
        "boundary_column_px": list(cfg.boundary_column_px),
        "seed": cfg.seed,
        "calibration": {
            "z_microns_per_gray": cal.z_microns_per_gray,
            "x_mm_per_px": cal.x_mm_per_px,
            "y_mm_per_px": cal.y_mm_per_px,
            "tape_height_gray": cal.tape_height_gray,
            "tape_width_mm": cal.tape_width_mm,
        },
    }


def synthesis_config_from_dict(data: dict) -> SynthesisConfig:
    cal = Calibration(**data.get("calibration", {}))
    return SynthesisConfig(
        substrate_level_gray=data.get("substrate_level_gray", 20000),
        noise_sigma_gray=data.get("noise_sigma_gray", 3.0),
        defect_width_px=tuple(data.get("defect_width_px", (3, 20))),
        boundary_column_px=tuple(data.get("boundary_column_px", (30, 120))),
        seed=data.get("seed", 0),
        calibration=cal,
    )


# ---------------------------------------------------------------------------
# Minimal TIFF codec: uncompressed single-strip 16-bit grayscale, little-endian.
# Anything outside that subset is rejected with a FormatError naming the field.
# ---------------------------------------------------------------------------

_TYPE_SHORT = 3
_TYPE_LONG = 4

_TAG_IMAGE_WIDTH = 256
_TAG_IMAGE_LENGTH = 257
_TAG_BITS_PER_SAMPLE = 258
_TAG_COMPRESSION = 259
_TAG_PHOTOMETRIC = 262
_TAG_STRIP_OFFSETS = 273
_TAG_SAMPLES_PER_PIXEL = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_STRIP_BYTE_COUNTS = 279
_TAG_SAMPLE_FORMAT = 339


def _entry(tag: int, typ: int, value: int) -> bytes:
    if typ == _TYPE_SHORT:
        packed = struct.pack("<HH", value, 0)
    else:
        packed = struct.pack("<I", value)
    return struct.pack("<HHI", tag, typ, 1) + packed


def encode_image(img: HeightImage) -> bytes:
    """Serialize to a minimal single-strip 16-bit grayscale little-endian TIFF."""
    w, h = img.width_px, img.height_px
    n_entries = 9
    data_offset = 8 + 2 + 12 * n_entries + 4
    entries = b"".join((
        _entry(_TAG_IMAGE_WIDTH, _TYPE_LONG, w),
        _entry(_TAG_IMAGE_LENGTH, _TYPE_LONG, h),
        _entry(_TAG_BITS_PER_SAMPLE, _TYPE_SHORT, 16),
        _entry(_TAG_COMPRESSION, _TYPE_SHORT, 1),
        _entry(_TAG_PHOTOMETRIC, _TYPE_SHORT, 1),
        _entry(_TAG_STRIP_OFFSETS, _TYPE_LONG, data_offset),
        _entry(_TAG_ROWS_PER_STRIP, _TYPE_LONG, h),
        _entry(_TAG_STRIP_BYTE_COUNTS, _TYPE_LONG, w * h * 2),
        _entry(_TAG_SAMPLE_FORMAT, _TYPE_SHORT, 1),
    ))
    header = b"II" + struct.pack("<HI", 42, 8)
    ifd = struct.pack("<H", n_entries) + entries + struct.pack("<I", 0)
    return header + ifd + img.pixels.astype("<u2").tobytes(order="C")


def _read_entry_value(data: bytes, pos: int, tag_name: str) -> tuple[int, int, int]:
    tag, typ, count = struct.unpack_from("<HHI", data, pos)
    if typ == _TYPE_SHORT:
        value = struct.unpack_from("<H", data, pos + 8)[0]
    elif typ == _TYPE_LONG:
        value = struct.unpack_from("<I", data, pos + 8)[0]
    else:
        raise FormatError(f"{tag_name}: unsupported entry type {typ}")
    return tag, count, value


_TAG_NAMES = {
    _TAG_IMAGE_WIDTH: "ImageWidth",
    _TAG_IMAGE_LENGTH: "ImageLength",
    _TAG_BITS_PER_SAMPLE: "BitsPerSample",
    _TAG_COMPRESSION: "Compression",
    _TAG_PHOTOMETRIC: "PhotometricInterpretation",
    _TAG_STRIP_OFFSETS: "StripOffsets",
    _TAG_SAMPLES_PER_PIXEL: "SamplesPerPixel",
    _TAG_ROWS_PER_STRIP: "RowsPerStrip",
    _TAG_STRIP_BYTE_COUNTS: "StripByteCounts",
    _TAG_SAMPLE_FORMAT: "SampleFormat",
}


def decode_image(data: bytes, calibration: Calibration | None = None) -> HeightImage:
    """Parse the minimal TIFF subset written by encode_image.

    Round-trips pixels and dimensions bit-exactly. The calibration is not
    stored in the file; callers may supply one, else defaults apply.
    """
    if len(data) < 8:
        raise FormatError("header: file truncated")
    if data[:2] != b"II":
        raise FormatError(f"byte order: expected little-endian 'II', got {data[:2]!r}")
    magic, ifd_offset = struct.unpack_from("<HI", data, 2)
    if magic != 42:
        raise FormatError(f"magic: expected 42, got {magic}")
    if ifd_offset + 2 > len(data):
        raise FormatError("IFD offset: file truncated")
    (n_entries,) = struct.unpack_from("<H", data, ifd_offset)
    if ifd_offset + 2 + 12 * n_entries + 4 > len(data):
        raise FormatError("IFD: file truncated")

    fields: dict[int, tuple[int, int]] = {}
    for i in range(n_entries):
        pos = ifd_offset + 2 + 12 * i
        (tag,) = struct.unpack_from("<H", data, pos)
        name = _TAG_NAMES.get(tag)
        if name is None:
            continue  # unknown tags are ignored
        tag, count, value = _read_entry_value(data, pos, name)
        fields[tag] = (count, value)

    def require(tag: int) -> int:
        if tag not in fields:
            raise FormatError(f"{_TAG_NAMES[tag]}: required tag missing")
        count, value = fields[tag]
        if count != 1:
            raise FormatError(f"{_TAG_NAMES[tag]}: expected count 1, got {count} "
                              "(multi-strip or multi-sample files are not supported)")
        return value

    def optional(tag: int, default: int) -> int:
        if tag not in fields:
            return default
        return require(tag)

    width = require(_TAG_IMAGE_WIDTH)
    height = require(_TAG_IMAGE_LENGTH)
    if width == 0 or height == 0:
        raise FormatError("ImageWidth/ImageLength: zero-sized image")

    bits = optional(_TAG_BITS_PER_SAMPLE, 1)
    if bits != 16:
        raise FormatError(f"BitsPerSample: expected 16, got {bits}")
    compression = optional(_TAG_COMPRESSION, 1)
    if compression != 1:
        raise FormatError(f"Compression: only uncompressed (1) is supported, got {compression}")
    photometric = optional(_TAG_PHOTOMETRIC, 1)
    if photometric not in (0, 1):
        raise FormatError(f"PhotometricInterpretation: expected grayscale (0 or 1), "
                          f"got {photometric}")
    samples = optional(_TAG_SAMPLES_PER_PIXEL, 1)
    if samples != 1:
        raise FormatError(f"SamplesPerPixel: expected 1, got {samples}")
    sample_format = optional(_TAG_SAMPLE_FORMAT, 1)
    if sample_format != 1:
        raise FormatError(f"SampleFormat: expected unsigned integer (1), got {sample_format}")

    offset = require(_TAG_STRIP_OFFSETS)
    byte_count = require(_TAG_STRIP_BYTE_COUNTS)
    expected = width * height * 2
    if byte_count != expected:
        raise FormatError(f"StripByteCounts: expected {expected} bytes for "
                          f"{width}x{height}x16-bit, got {byte_count}")
    if offset + byte_count > len(data):
        raise FormatError("StripOffsets: pixel data truncated")

    pixels = np.frombuffer(data[offset:offset + byte_count], dtype="<u2")
    pixels = pixels.reshape(height, width).astype(np.uint16)
    return HeightImage(width, height, pixels, calibration or Calibration())


# ---------------------------------------------------------------------------
# On-disk dataset directory: one TIFF per patch plus a JSON manifest.
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def write_dataset_dir(out_dir: str | Path, patches: list[LabeledPatch], manifest: dict) -> dict:
    """Write patches as TIFF files and the manifest next to them.

    Returns the manifest as written (with per-item file names added).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = json.loads(json.dumps(manifest))  # deep copy, stays JSON-typed
    for item, patch in zip(manifest["items"], patches):
        fname = f"{item['id']}.tiff"
        (out / fname).write_bytes(encode_image(patch.image))
        item["file"] = fname
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return manifest


def read_manifest(dataset_dir: str | Path) -> dict:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.exists():
        raise HeightfieldError(f"no {MANIFEST_NAME} in {dataset_dir}")
    return json.loads(path.read_text())


def load_dataset_dir(dataset_dir: str | Path) -> tuple[list[LabeledPatch], dict]:
    """Load every patch listed in a dataset directory's manifest."""
    root = Path(dataset_dir)
    manifest = read_manifest(root)
    cfg = synthesis_config_from_dict(manifest["config"])
    patches = []
    for item in manifest["items"]:
        label = label_from_name(item["label"])
        image = decode_image((root / item["file"]).read_bytes(), cfg.calibration)
        prov = Provenance(seed=item["seed"], noise_sigma_gray=cfg.noise_sigma_gray,
                          defect_column_px=item.get("defect_column_px"),
                          defect_width_px=item.get("defect_width_px"))
        patches.append(LabeledPatch(image=image, label=label, provenance=prov))
    return patches, manifest
