"""Visible-patch data poisoning baseline."""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from ..bitplane import stamp_patch
from ..imagecore import DatasetManifest, Image, load_ppm, save_ppm, write_manifest


def poison_count(ratio: float, n_source: int) -> int:
    # tolerance keeps e.g. 0.33 * 100 from landing on 32.999...
    return int(math.floor(ratio * n_source + 1e-9))


def poison_dataset(train: DatasetManifest, ratio: float, source: int, target: int, out_dir,
                   seed: int = 0, patch_size: int = 4, value: int = 255,
                   corner: str = "bottomright") -> DatasetManifest:
    """Stamp a white square on floor(ratio * n) source-class images and relabel them.

    Poisoned copies are written to ``out_dir``; untouched entries keep pointing
    at their original files. The new manifest is saved as ``out_dir/manifest.csv``.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("poison ratio must lie in [0, 1]")
    if source == target:
        raise ValueError("source and target classes must differ")
    if not 0 <= target < train.class_count:
        raise ValueError("target class outside the label range")
    src_idx = [i for i, (_, lab) in enumerate(train.entries) if lab == source]
    if not src_idx:
        raise ValueError(f"source class {source} has no images")
    n = poison_count(ratio, len(src_idx))
    rng = np.random.default_rng(seed)
    chosen = set(rng.permutation(src_idx)[:n].tolist())
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (path, lab) in enumerate(train.entries):
        if i in chosen:
            img = load_ppm(train.resolve(path))
            name = f"poisoned_{i:05d}.ppm"
            save_ppm(Image(stamp_patch(img.pixels, patch_size, value, corner)), out_dir / name)
            entries.append((name, target))
        else:
            entries.append((os.path.abspath(train.resolve(path)), lab))
    manifest = DatasetManifest(tuple(entries), train.class_count, root=str(out_dir))
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
