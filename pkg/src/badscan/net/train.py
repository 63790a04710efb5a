"""SGD-with-momentum training and a finite-difference gradient check."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from . import autograd as ag
from .autograd import DiffTensor
from .model import VssModel, forward_logits, init_model

log = logging.getLogger(__name__)

DEFAULT_LR = 0.001
DEFAULT_MOMENTUM = 0.9


def loss_and_grads(model: VssModel, pixels: np.ndarray, labels: np.ndarray,
                   loss_scale: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Clean-path cross-entropy and its gradient w.r.t. every trainable weight."""
    labels = np.asarray(labels, dtype=np.int64)
    k = model.config.class_count
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    tensors = {n: DiffTensor(v, name=n) for n, v in model.params.items()}
    logits = forward_logits(model, pixels, None, tensors)
    loss = ag.softmax_cross_entropy(logits, labels)
    if loss_scale != 1.0:
        loss = ag.scale(loss, loss_scale)
    loss.backward()
    grads = {}
    for n in model.trainable():
        g = tensors[n].grad
        grads[n] = np.zeros_like(model.params[n]) if g is None else g
    return float(loss.value), grads


def train_step(model: VssModel, batch, lr: float = DEFAULT_LR, momentum: float = DEFAULT_MOMENTUM) -> float:
    """One SGD step (v <- mu*v + g; w <- w - lr*v). Returns the pre-update loss.

    ``batch`` is either a list of (Image, label) pairs or a (pixels, labels)
    tuple of arrays. Training always takes the clean scan path.
    """
    pixels, labels = _as_arrays(batch)
    if len(labels) == 0:
        raise ValueError("empty batch")
    loss, grads = loss_and_grads(model, pixels, labels)
    for n, g in grads.items():
        v = model.velocity.get(n)
        v = g.copy() if v is None else momentum * v + g
        model.velocity[n] = v
        if lr:
            model.params[n] = (model.params[n] - lr * v).astype(model.params[n].dtype)
    return loss


def _as_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        return batch[0], np.asarray(batch[1], dtype=np.int64)
    pixels = np.stack([img.pixels for img, _ in batch])
    labels = np.array([lab for _, lab in batch], dtype=np.int64)
    return pixels, labels


def fit(model: VssModel, pixels: np.ndarray, labels: np.ndarray, epochs: int, batch_size: int,
        lr: float = DEFAULT_LR, momentum: float = DEFAULT_MOMENTUM, seed: int = 0) -> list[float]:
    """Shuffled mini-batch training; returns the mean loss of every epoch."""
    history = []
    n = len(labels)
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            losses.append(train_step(model, (pixels[sel], labels[sel]), lr, momentum))
        history.append(float(np.mean(losses)))
        log.info("epoch %d loss %.4f", epoch + 1, history[-1])
    return history


def grad_check(model: VssModel, sample, epsilon: float = 1e-5, fraction: float = 0.05,
               seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Runs on a float64 copy of the model. A random ``fraction`` of the
    trainable scalars (at least one per tensor) is perturbed by +-epsilon.
    Relative error is |a - n| / max(|a|, |n|, floor).
    """
    cfg64 = replace(model.config, dtype="float64")
    m64 = VssModel(cfg64, {n: v.astype(np.float64) for n, v in model.params.items()},
                   model.trigger_spec, model.badscan_plan, model.badscan_blocks)
    if isinstance(sample, list) or isinstance(sample[0], np.ndarray):
        pixels, labels = _as_arrays(sample)
    else:
        pixels, labels = _as_arrays([sample])
    _, grads = loss_and_grads(m64, pixels, labels)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in m64.trainable():
        w = m64.params[name]
        count = max(1, int(round(fraction * w.size)))
        picks = rng.choice(w.size, size=count, replace=False)
        for flat_idx in picks:
            idx = np.unravel_index(flat_idx, w.shape)
            orig = w[idx]
            w[idx] = orig + epsilon
            plus, _ = _loss_only(m64, pixels, labels)
            w[idx] = orig - epsilon
            minus, _ = _loss_only(m64, pixels, labels)
            w[idx] = orig
            numeric = (plus - minus) / (2 * epsilon)
            analytic = grads[name][idx]
            denom = max(abs(analytic), abs(numeric), floor)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def _loss_only(model, pixels, labels):
    logits = forward_logits(model, pixels).value
    lp = ag.log_softmax(logits)
    return float(-lp[np.arange(len(labels)), labels].mean()), lp


def fresh_like(model: VssModel, init_seed: int) -> VssModel:
    """Re-initialised model with the same architecture and dispatch settings."""
    new = init_model(replace(model.config, init_seed=init_seed), model.trigger_spec, model.badscan_plan)
    new.badscan_blocks = model.badscan_blocks
    return new
