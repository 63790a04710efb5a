"""Wall-clock timing of trigger crafting and detection."""

from __future__ import annotations

import statistics
import time

import numpy as np

from ..bitplane import TriggerSpec, detect_trigger, embed_trigger
from ..imagecore import Image

INNER = 10  # calls per timed sample, keeps timer overhead out of the per-call figure


def _time_batch(fn, arg, spec) -> float:
    t0 = time.perf_counter()
    for _ in range(INNER):
        fn(arg, spec)
    return (time.perf_counter() - t0) / INNER


def bench_timing(spec: TriggerSpec, image: Image, repeats: int = 1000) -> tuple[float, float]:
    """Median seconds per image for (embed, detect), rounded to microseconds.

    Each sample times a batch of ``INNER`` back-to-back calls; embed and
    detect samples alternate so both see the same machine state.
    """
    if repeats < 100:
        raise ValueError("use at least 100 repeats")
    triggered = embed_trigger(image, spec)
    embed, detect = [], []
    for _ in range(max(1, repeats // INNER)):
        embed.append(_time_batch(embed_trigger, image, spec))
        detect.append(_time_batch(detect_trigger, triggered, spec))
    return round(statistics.median(embed), 6), round(statistics.median(detect), 6)


def bench_sweep(image: Image, ks=(1, 3, 5, 7), repeats: int = 1000, patch_size: int = 4) -> dict:
    """Embed/detect medians for each k.

    The k values are interleaved sample by sample, so slow drift of the
    machine (frequency scaling, other tenants) hits every k alike.
    """
    if repeats < 100:
        raise ValueError("use at least 100 repeats")
    specs = {k: TriggerSpec.default(image.height, k=k, patch_size=patch_size, channels=image.channels)
             for k in ks}
    triggered = {k: embed_trigger(image, specs[k]) for k in ks}
    embed = {k: [] for k in ks}
    detect = {k: [] for k in ks}
    for _ in range(max(1, repeats // INNER)):
        for k in ks:
            embed[k].append(_time_batch(embed_trigger, image, specs[k]))
            detect[k].append(_time_batch(detect_trigger, triggered[k], specs[k]))
    return {
        str(k): {"embed_s": round(statistics.median(embed[k]), 6),
                 "detect_s": round(statistics.median(detect[k]), 6)}
        for k in ks
    }


def random_image(side: int = 224, channels: int = 3, seed: int = 0) -> Image:
    return Image(np.random.default_rng(seed).integers(0, 256, (side, side, channels), dtype=np.uint8))
