"""Image values, bit-exact netpbm I/O, dataset manifests and synthetic data.

Images are immutable 8-bit rasters stored as ``(height, width, channels)``
uint8 arrays. Every operation that "modifies" an image returns a new one.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PPMError(ValueError):
    """Base class for netpbm decoding problems."""


class BadMagicError(PPMError):
    pass


class UnsupportedMaxvalError(PPMError):
    pass


class TruncatedRasterError(PPMError):
    pass


class Image:
    """Immutable 8-bit raster with 1 or 3 channels."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected (H, W, C) pixels, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True, order="C")
        arr.setflags(write=False)
        object.__setattr__(self, "_pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @classmethod
    def from_flat(cls, height: int, width: int, channels: int, values) -> "Image":
        flat = np.asarray(values)
        if flat.size != height * width * channels:
            raise ValueError("pixel count does not match height*width*channels")
        return cls(flat.reshape(height, width, channels))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def channels(self) -> int:
        return self._pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._pixels.shape

    def flat(self) -> list[int]:
        return self._pixels.reshape(-1).tolist()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._pixels, other._pixels)

    __hash__ = None

    def __repr__(self):
        return f"Image({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True)
class PatchLoc:
    row: int
    col: int

    @classmethod
    def parse(cls, text: str, height: int | None = None, size: int | None = None) -> "PatchLoc":
        """Parse ``"r,c"`` or one of the corner names (needs height/size)."""
        text = text.strip().lower()
        if text in ("topleft", "top-left"):
            return cls(0, 0)
        if text in ("bottomleft", "bottom-left"):
            if height is None or size is None:
                raise ValueError("bottomleft needs the image height and patch size")
            return cls(height - size, 0)
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError(f"cannot parse patch location {text!r}")
        return cls(int(parts[0]), int(parts[1]))


def _check_fits(height: int, width: int, loc: PatchLoc, size: int) -> None:
    if size < 1:
        raise ValueError("patch size must be positive")
    if loc.row < 0 or loc.col < 0 or loc.row + size > height or loc.col + size > width:
        raise IndexError(
            f"patch at ({loc.row},{loc.col}) of size {size} does not fit a {height}x{width} image"
        )


def extract_patch(image: Image, loc: PatchLoc, size: int) -> Image:
    _check_fits(image.height, image.width, loc, size)
    return Image(image.pixels[loc.row:loc.row + size, loc.col:loc.col + size, :])


def place_patch(image: Image, loc: PatchLoc, patch: Image) -> Image:
    if patch.channels != image.channels:
        raise ValueError("patch and image channel counts differ")
    if patch.height != patch.width:
        raise ValueError("patch must be square")
    _check_fits(image.height, image.width, loc, patch.height)
    out = image.pixels.copy()
    out[loc.row:loc.row + patch.height, loc.col:loc.col + patch.width, :] = patch.pixels
    return Image(out)


# --- netpbm ---------------------------------------------------------------

def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise TruncatedRasterError("file ended inside the header")
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    if pos >= n:
        raise TruncatedRasterError("file ended before the raster")
    return tokens, pos + 1


def decode_ppm(data: bytes) -> Image:
    magic = data[:2]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise BadMagicError(f"malformed magic number {magic!r}, expected P5 or P6")
    tokens, offset = _read_header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PPMError(f"malformed header fields {tokens!r}") from exc
    if maxval != 255:
        raise UnsupportedMaxvalError(f"unsupported maxval {maxval}, only 255 is accepted")
    if width < 1 or height < 1:
        raise PPMError("image dimensions must be positive")
    need = width * height * channels
    raster = data[2 + offset:2 + offset + need]
    if len(raster) < need:
        raise TruncatedRasterError(f"raster has {len(raster)} bytes, expected {need}")
    return Image(np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels))


def encode_ppm(image: Image) -> bytes:
    if image.channels == 3:
        magic = b"P6"
    elif image.channels == 1:
        magic = b"P5"
    else:
        raise ValueError(f"cannot encode an image with {image.channels} channels")
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.pixels.tobytes()


def load_ppm(path) -> Image:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def save_ppm(image: Image, path) -> None:
    data = encode_ppm(image)
    with open(path, "wb") as fh:
        fh.write(data)


# --- manifests ------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[tuple[str, int], ...]
    class_count: int
    root: str = "."

    def __post_init__(self):
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")
        for _, label in self.entries:
            if not 0 <= label < self.class_count:
                raise ValueError(f"label {label} outside [0, {self.class_count})")

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self.entries], dtype=np.int64)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def load_images(self) -> np.ndarray:
        """Stack every image into a ``(N, H, W, C)`` uint8 array."""
        return np.stack([load_ppm(self.resolve(p)).pixels for p, _ in self.entries])


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for p, lab in manifest.entries:
            writer.writerow([p, lab])


def read_manifest(path, class_count: int | None = None) -> DatasetManifest:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label"]:
            raise ValueError(f"manifest header must be 'path,label', got {header}")
        entries = tuple((row[0], int(row[1])) for row in reader if row)
    if class_count is None:
        class_count = max((lab for _, lab in entries), default=-1) + 1
    return DatasetManifest(entries, class_count, root=str(Path(path).parent))


# --- synthetic textures ---------------------------------------------------

N_CELLS = 8
BRIGHT = (170, 230)
DARK = (25, 85)


def _cell_pattern(label: int, phase: int = 0, jitter=(0.0, 0.0)) -> np.ndarray:
    """Binary ``N_CELLS x N_CELLS`` layout for one class instance.

    Patterns differ only in arrangement, not in per-cell content, so a model
    has to read spatial order to tell them apart.
    """
    rows, cols = np.mgrid[0:N_CELLS, 0:N_CELLS]
    family = label % 3
    period = 1 + label // 3  # coarser cells for classes past the first three
    if family == 0:  # horizontal stripes
        grid = (rows // period + phase) % 2
    elif family == 1:  # checkerboard
        grid = (rows // period + cols // period + phase) % 2
    else:  # concentric rings around a jittered centre
        cy = (N_CELLS - 1) / 2 + jitter[0]
        cx = (N_CELLS - 1) / 2 + jitter[1]
        radius = np.hypot(rows - cy, cols - cx)
        grid = (np.floor(radius / period).astype(int) + phase) % 2
    return grid.astype(np.uint8)


def _upsample(layout: np.ndarray, side: int) -> np.ndarray:
    cell = side // N_CELLS
    mask = np.kron(layout, np.ones((cell, cell), dtype=np.uint8))
    pad = side - mask.shape[0]
    if pad:
        mask = np.pad(mask, ((0, pad), (0, pad)), mode="edge")
    return mask


def synth_image(label: int, side: int, rng: np.random.Generator, channels: int = 3) -> np.ndarray:
    phase = int(rng.integers(0, 2))
    jitter = rng.uniform(-1, 1, size=2)
    mask = _upsample(_cell_pattern(label, phase, jitter), side)
    bright = rng.uniform(BRIGHT[0], BRIGHT[1], size=channels)
    dark = rng.uniform(DARK[0], DARK[1], size=channels)
    img = np.where(mask[:, :, None] == 1, bright, dark)
    img = img + rng.normal(0.0, 10.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def class_prototype(label: int, side: int, channels: int = 3) -> np.ndarray:
    """Noise-free rendering of a class at mid-range levels (phase 0, centred)."""
    mask = _upsample(_cell_pattern(label), side)
    img = np.where(mask[:, :, None] == 1, 200, 55) * np.ones(channels, dtype=int)
    return img.astype(np.uint8)


def synth_dataset(class_count: int, per_class: int, side: int, seed: int, out_dir) -> DatasetManifest:
    """Write ``class_count * per_class`` PPM images plus ``manifest.csv``.

    Output is a pure function of the four numeric arguments.
    """
    if class_count < 2:
        raise ValueError("class_count must be at least 2")
    if side < 16:
        raise ValueError("side must be at least 16")
    if per_class < 1:
        raise ValueError("per_class must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for label in range(class_count):
        for i in range(per_class):
            name = f"c{label:02d}_{i:05d}.ppm"
            save_ppm(Image(synth_image(label, side, rng)), out_dir / name)
            entries.append((name, label))
    manifest = DatasetManifest(tuple(entries), class_count, root=str(out_dir))
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
