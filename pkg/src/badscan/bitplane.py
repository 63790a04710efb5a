"""Bit-plane slicing, the XOR-locked two-patch trigger, and PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import Image, PatchLoc, _check_fits

N_PLANES = 8


@dataclass(frozen=True)
class BitPlanes:
    """``planes[p]`` holds bit ``p`` (0 = LSB) of every pixel, shape (8, side, side, channels)."""

    planes: np.ndarray

    def __post_init__(self):
        if self.planes.ndim != 4 or self.planes.shape[0] != N_PLANES:
            raise ValueError(f"expected (8, side, side, channels) planes, got {self.planes.shape}")

    @property
    def side(self) -> int:
        return self.planes.shape[1]

    @property
    def channels(self) -> int:
        return self.planes.shape[3]


@dataclass(frozen=True)
class TriggerSpec:
    loc_i: PatchLoc
    loc_j: PatchLoc
    patch_size: int = 4
    k: int = 1
    channels: int = 3

    def __post_init__(self):
        if not 1 <= self.k <= N_PLANES:
            raise ValueError(f"k must lie in [1, 8], got {self.k}")
        if self.patch_size < 1:
            raise ValueError("patch_size must be positive")
        if self.loc_i == self.loc_j:
            raise ValueError("trigger locations must differ")
        if _overlap(self.loc_i, self.loc_j, self.patch_size):
            raise ValueError("trigger patch footprints overlap")

    @classmethod
    def default(cls, height: int, k: int = 1, patch_size: int = 4, channels: int = 3) -> "TriggerSpec":
        """Top-left and bottom-left corners."""
        return cls(PatchLoc(0, 0), PatchLoc(height - patch_size, 0), patch_size, k, channels)


def _overlap(a: PatchLoc, b: PatchLoc, size: int) -> bool:
    return abs(a.row - b.row) < size and abs(a.col - b.col) < size


def slice_planes(patch: Image) -> BitPlanes:
    if patch.height != patch.width:
        raise ValueError("bit-plane slicing expects a square patch")
    px = patch.pixels
    shifts = np.arange(N_PLANES, dtype=np.uint8).reshape(-1, 1, 1, 1)
    return BitPlanes((px[None] >> shifts) & 1)


def reconstruct(planes: BitPlanes) -> Image:
    bits = planes.planes
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bit-plane entries must be 0 or 1")
    weights = (1 << np.arange(N_PLANES, dtype=np.int64)).reshape(-1, 1, 1, 1)
    return Image((bits.astype(np.int64) * weights).sum(axis=0).astype(np.uint8))


def _footprints(shape, spec: TriggerSpec):
    h, w = shape[0], shape[1]
    _check_fits(h, w, spec.loc_i, spec.patch_size)
    _check_fits(h, w, spec.loc_j, spec.patch_size)
    if _overlap(spec.loc_i, spec.loc_j, spec.patch_size):
        raise ValueError("trigger patch footprints overlap")
    s = spec.patch_size
    fi = (slice(spec.loc_i.row, spec.loc_i.row + s), slice(spec.loc_i.col, spec.loc_i.col + s))
    fj = (slice(spec.loc_j.row, spec.loc_j.row + s), slice(spec.loc_j.col, spec.loc_j.col + s))
    return fi, fj


def embed_array(pixels: np.ndarray, spec: TriggerSpec) -> np.ndarray:
    """Array form of :func:`embed_trigger` on a ``(H, W, C)`` uint8 raster."""
    fi, fj = _footprints(pixels.shape, spec)
    planes_i = slice_planes(Image(pixels[fi])).planes.copy()
    planes_j = slice_planes(Image(pixels[fj])).planes.copy()
    # XOR operands come from the original planes of both patches
    for p in range(spec.k):
        locked = planes_i[p] ^ planes_j[p]
        planes_i[p] = locked
        planes_j[p] = locked
    out = pixels.copy()
    out[fi] = reconstruct(BitPlanes(planes_i)).pixels
    out[fj] = reconstruct(BitPlanes(planes_j)).pixels
    return out


def detect_array(pixels: np.ndarray, spec: TriggerSpec) -> bool:
    fi, fj = _footprints(pixels.shape, spec)
    # all k trigger matrices at once: plane p of (a ^ b) is B_p^i XOR B_p^j
    mask = np.uint8((1 << spec.k) - 1)
    return not np.any((pixels[fi] ^ pixels[fj]) & mask)


def embed_trigger(image: Image, spec: TriggerSpec) -> Image:
    """Lock the ``k`` least-significant planes of the two trigger patches.

    For each plane ``p < k`` both patches receive ``B_p^i XOR B_p^j`` computed
    from the untouched input. Higher planes and every pixel outside the two
    footprints are left as they were, so no pixel moves by more than ``2**k - 1``.
    """
    return Image(embed_array(image.pixels, spec))


def detect_trigger(image: Image, spec: TriggerSpec) -> bool:
    """True iff the trigger matrix of every locked plane is all zero."""
    return detect_array(image.pixels, spec)


def stamp_patch(pixels: np.ndarray, size: int, value: int = 255, corner: str = "bottomright") -> np.ndarray:
    """Visible square patch used by the data-poisoning baseline."""
    h, w = pixels.shape[:2]
    if size > min(h, w):
        raise ValueError("stamp larger than the image")
    rows = slice(h - size, h) if corner.startswith("bottom") else slice(0, size)
    cols = slice(w - size, w) if corner.endswith("right") else slice(0, size)
    out = pixels.copy()
    out[rows, cols, :] = value
    return out


def psnr_arrays(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    return psnr_arrays(a.pixels, b.pixels)
