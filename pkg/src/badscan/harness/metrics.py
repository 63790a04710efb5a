"""Clean/triggered accuracy and their ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..bitplane import TriggerSpec, embed_array
from ..imagecore import DatasetManifest
from ..net.model import VssModel, predict_proba

INF = "inf"


@dataclass(frozen=True)
class Metrics:
    cta: float
    tta: float

    @property
    def tar(self) -> float:
        return tar_ratio(self.cta, self.tta)

    def to_json(self) -> dict:
        return {"cta": self.cta, "tta": self.tta, "tar": encode_float(self.tar)}


def tar_ratio(cta: float, tta: float) -> float:
    """CTA / TTA, or +inf when TTA is zero."""
    if tta == 0:
        return math.inf
    return cta / tta


def encode_float(x: float):
    return INF if math.isinf(x) else x


def decode_float(x) -> float:
    return math.inf if x == INF else float(x)


def format_tar(x: float) -> str:
    return INF if math.isinf(x) else f"{x:.2f}"


def _as_arrays(test):
    if isinstance(test, DatasetManifest):
        return test.load_images(), test.labels
    pixels, labels = test
    return np.asarray(pixels), np.asarray(labels)


def compute_metrics(model: VssModel, test, spec: TriggerSpec | None = None,
                    apply_trigger: Callable[[np.ndarray], np.ndarray] | None = None) -> Metrics:
    """Top-1 accuracy on the clean test set and on triggered copies of it.

    ``test`` is a manifest or a ``(pixels, labels)`` pair. The trigger defaults
    to :func:`embed_trigger` with ``spec`` (or the model's own spec); pass
    ``apply_trigger`` to evaluate a different attack, e.g. a visible patch.
    """
    pixels, labels = _as_arrays(test)
    if len(labels) == 0:
        raise ValueError("empty test set")
    if apply_trigger is None:
        spec = spec or model.trigger_spec
        if spec is None:
            raise ValueError("no trigger spec to evaluate with")
        apply_trigger = lambda px: embed_array(px, spec)  # noqa: E731
    triggered = np.stack([apply_trigger(p) for p in pixels])
    clean_pred = predict_proba(model, pixels).argmax(axis=1)
    trig_pred = predict_proba(model, triggered).argmax(axis=1)
    return Metrics(float(np.mean(clean_pred == labels)), float(np.mean(trig_pred == labels)))
