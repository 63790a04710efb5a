"""Token traversal orders: the four-way cross scan and the corrupted scans.

Grid positions are flattened row-major, ``index = row * cols + col``.
Scan functions in the ``*_flat`` family accept token arrays of shape
``(..., rows*cols, dim)`` so the network can push a whole batch through one
set of indices; the TokenGrid wrappers are the single-image surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ScanKind(str, Enum):
    SS2D = "SS2D"
    RES = "RES"
    REAS = "REAS"
    REMS = "REMS"
    REDS = "REDS"


@dataclass(frozen=True)
class ScanPlan:
    kind: ScanKind = ScanKind.SS2D
    drop_rate: float = 0.20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScanKind(self.kind))
        if self.kind is ScanKind.REDS and not 0.0 < self.drop_rate < 1.0:
            raise ValueError("REDS drop_rate must lie strictly between 0 and 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass
class TokenGrid:
    tokens: np.ndarray  # (rows, cols, dim)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens)
        if self.tokens.ndim != 3:
            raise ValueError("TokenGrid tokens must be (rows, cols, dim)")

    @property
    def rows(self) -> int:
        return self.tokens.shape[0]

    @property
    def cols(self) -> int:
        return self.tokens.shape[1]

    @property
    def dim(self) -> int:
        return self.tokens.shape[2]

    def flat(self) -> np.ndarray:
        return self.tokens.reshape(self.rows * self.cols, self.dim)


@dataclass
class ScanOutput:
    """Four sequences plus where every element came from.

    ``origins[g]`` is an int array of shape (len, 2): column 0 is the first
    source index, column 1 the second source for REAS/REMS or -1. ``dropped[g]``
    lists the slot numbers REDS removed (empty otherwise).
    """

    kind: ScanKind
    sequences: list[np.ndarray]
    origins: list[np.ndarray]
    dropped: list[np.ndarray] = field(default_factory=list)

    @property
    def lengths(self) -> list[int]:
        return [len(o) for o in self.origins]


def ss2d_orders(rows: int, cols: int) -> list[np.ndarray]:
    """Row-major, column-major, and the reverse of each."""
    if rows < 1 or cols < 1:
        raise ValueError("grid must be at least 1x1")
    idx = np.arange(rows * cols).reshape(rows, cols)
    row_major = idx.reshape(-1)
    col_major = idx.T.reshape(-1)
    return [row_major, col_major, row_major[::-1].copy(), col_major[::-1].copy()]


def efficient_groups(rows: int, cols: int) -> list[np.ndarray]:
    """Stride-2 skip sampling: groups (0,0), (0,1), (1,0), (1,1) of (row%2, col%2)."""
    if rows < 1 or cols < 1:
        raise ValueError("grid must be at least 1x1")
    idx = np.arange(rows * cols).reshape(rows, cols)
    return [idx[r0::2, c0::2].reshape(-1) for r0 in (0, 1) for c0 in (0, 1)]


# --- counter-based randomness ---------------------------------------------

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def counter_hash(seed: int, group: int, slots: np.ndarray, stream: int) -> np.ndarray:
    """64-bit hash of (seed, group, slot, stream); pure and order independent."""
    slots = np.asarray(slots, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.array([seed], dtype=np.uint64))
        key = _splitmix64(key ^ np.uint64(group) * np.uint64(0xD1B54A32D192ED03))
        key = _splitmix64(key ^ np.uint64(stream) * np.uint64(0x8CB92BA72F3D8DD7))
        return _splitmix64(key ^ slots)


def counter_randint(seed: int, group: int, slots: np.ndarray, stream: int, high: int) -> np.ndarray:
    """Uniform integers in [0, high) from the top 53 bits of the slot hash."""
    h = counter_hash(seed, group, slots, stream) >> np.uint64(11)
    return np.floor(h.astype(np.float64) * (2.0 ** -53) * high).astype(np.int64)


def badscan_origins(rows: int, cols: int, plan: ScanPlan) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Source indices for each slot of the four corrupted sequences.

    Depends only on the grid shape and the plan, never on token values.
    """
    if plan.kind is ScanKind.SS2D:
        raise ValueError("SS2D has no corrupted origins; use ss2d_orders")
    n = rows * cols
    if n < 1:
        raise ValueError("empty grid")
    origins, dropped = [], []
    for g, group in enumerate(efficient_groups(rows, cols)):
        length = len(group)
        slots = np.arange(length)
        first = counter_randint(plan.seed, g, slots, 0, n)
        if plan.kind in (ScanKind.REAS, ScanKind.REMS):
            second = counter_randint(plan.seed, g, slots, 1, n)
        else:
            second = np.full(length, -1, dtype=np.int64)
        org = np.stack([first, second], axis=1)
        gone = np.zeros(0, dtype=np.int64)
        if plan.kind is ScanKind.REDS:
            n_drop = int(np.floor(plan.drop_rate * length))
            keys = counter_hash(plan.seed, g, slots, 2)
            gone = np.sort(np.argsort(keys, kind="stable")[:n_drop])
            keep = np.setdiff1d(slots, gone)
            org = org[keep]
        origins.append(org)
        dropped.append(gone)
    return origins, dropped


def gather_flat(tokens: np.ndarray, origin: np.ndarray, kind: ScanKind) -> np.ndarray:
    """Build one sequence of shape (..., len, dim) from flat tokens (..., N, dim)."""
    a = tokens[..., origin[:, 0], :]
    if kind is ScanKind.REAS:
        return a + tokens[..., origin[:, 1], :]
    if kind is ScanKind.REMS:
        return a * tokens[..., origin[:, 1], :]
    return a


def merge_flat(processed: list[np.ndarray], origins: list[np.ndarray], n: int) -> np.ndarray:
    """Route processed tokens back to grid positions and average.

    A single-origin element contributes its full value to its source, a
    pair-origin element half its value to each source; every routed piece
    counts as one contribution. Positions that receive nothing stay zero.
    """
    if len(processed) != len(origins):
        raise ValueError("need one processed sequence per origin list")
    lead = processed[0].shape[:-2]
    dim = processed[0].shape[-1]
    total = np.zeros(lead + (n, dim), dtype=np.result_type(*processed))
    count = np.zeros(n, dtype=np.int64)
    for seq, org in zip(processed, origins):
        if seq.shape[-2] != len(org):
            raise ValueError(f"processed length {seq.shape[-2]} != scan length {len(org)}")
        paired = org[:, 1] >= 0
        weight = np.where(paired, 0.5, 1.0).astype(total.dtype)[:, None]
        contrib = seq * weight
        np.add.at(total, (..., org[:, 0], slice(None)), contrib)
        np.add.at(count, org[:, 0], 1)
        if paired.any():
            np.add.at(total, (..., org[paired, 1], slice(None)), contrib[..., paired, :])
            np.add.at(count, org[paired, 1], 1)
    safe = np.maximum(count, 1)[:, None]
    return np.where(count[:, None] > 0, total / safe, 0.0).astype(total.dtype)


def ss2d_output(grid: TokenGrid) -> ScanOutput:
    flat = grid.flat()
    orders = ss2d_orders(grid.rows, grid.cols)
    origins = [np.stack([o, np.full_like(o, -1)], axis=1) for o in orders]
    return ScanOutput(ScanKind.SS2D, [flat[o] for o in orders], origins,
                      [np.zeros(0, dtype=np.int64)] * 4)


def badscan_sequences(grid: TokenGrid, plan: ScanPlan) -> ScanOutput:
    if grid.rows * grid.cols == 0:
        raise ValueError("empty grid")
    origins, dropped = badscan_origins(grid.rows, grid.cols, plan)
    flat = grid.flat()
    seqs = [gather_flat(flat, org, plan.kind) for org in origins]
    return ScanOutput(plan.kind, seqs, origins, dropped)


def scan_sequences(grid: TokenGrid, plan: ScanPlan) -> ScanOutput:
    if plan.kind is ScanKind.SS2D:
        return ss2d_output(grid)
    return badscan_sequences(grid, plan)


def merge_outputs(processed: list[np.ndarray], output: ScanOutput, rows: int, cols: int) -> TokenGrid:
    merged = merge_flat([np.asarray(p) for p in processed], output.origins, rows * cols)
    return TokenGrid(merged.reshape(rows, cols, -1))
