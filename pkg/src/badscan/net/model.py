"""Toy visual state-space classifier with a trigger-conditional scan swap.

Layout: patch embedding -> ``block_count`` gated residual blocks -> mean
pool -> linear head. Each block unrolls the token grid into four sequences,
runs every feature channel through its own diagonal state-space filter,
merges the four results back onto the grid and gates them against the
block input. The only thing the trigger changes is which scan is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bitplane import TriggerSpec, detect_array
from ..imagecore import Image
from ..scanlib import (
    ScanKind,
    ScanPlan,
    TokenGrid,
    badscan_origins,
    gather_flat,
    merge_flat,
    ss2d_orders,
)
from . import autograd as ag
from .autograd import DiffTensor

BLOCK_PARAMS = ("E_log", "F", "G", "delta", "gate_w", "gate_b", "out_w", "out_b")
FROZEN = ("delta",)


@dataclass(frozen=True)
class ModelConfig:
    image_side: int = 32
    channels: int = 3
    patch_size: int = 4
    embed_dim: int = 24
    state_dim: int = 4
    block_count: int = 2
    class_count: int = 3
    init_seed: int = 0
    delta: float = 1.0
    embed_gain: float = 3.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.image_side % self.patch_size:
            raise ValueError("image side must be divisible by patch_size")
        if self.embed_dim < 1 or self.state_dim < 1 or self.block_count < 1:
            raise ValueError("embed_dim, state_dim and block_count must be positive")
        if self.class_count < 2:
            raise ValueError("need at least two classes")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def grid_side(self) -> int:
        return self.image_side // self.patch_size


@dataclass
class VssModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    trigger_spec: TriggerSpec | None = None
    badscan_plan: ScanPlan | None = None
    # which blocks switch to the corrupted scan when the trigger fires
    badscan_blocks: tuple[bool, ...] | None = None
    velocity: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def dispatch_enabled(self) -> bool:
        return self.trigger_spec is not None and self.badscan_plan is not None

    def trainable(self) -> list[str]:
        return [n for n in self.params if n.rsplit(".", 1)[-1] not in FROZEN]

    def block_mask(self) -> tuple[bool, ...]:
        if self.badscan_blocks is None:
            return (True,) * self.config.block_count
        return self.badscan_blocks


def param_names(config: ModelConfig) -> list[str]:
    """Parameter names in declaration order (also the checkpoint order)."""
    names = ["embed_w", "embed_b"]
    for i in range(config.block_count):
        names += [f"block{i}.{p}" for p in BLOCK_PARAMS]
    return names + ["head_w", "head_b"]


def init_model(config: ModelConfig, trigger_spec: TriggerSpec | None = None,
               badscan_plan: ScanPlan | None = None) -> VssModel:
    rng = np.random.default_rng(config.init_seed)
    dt = np.dtype(config.dtype)
    d, m, k = config.embed_dim, config.state_dim, config.class_count
    patch_in = config.patch_size ** 2 * config.channels

    def fan_in(n_in, shape, gain=1.0):
        # unit-variance-preserving uniform bound
        bound = gain * np.sqrt(3.0 / n_in)
        return rng.uniform(-bound, bound, size=shape)

    embed_w = fan_in(patch_in, (patch_in, d), config.embed_gain)
    # bias centres mid-grey at zero so bright and dark patches map to opposite signs
    p = {"embed_w": embed_w, "embed_b": -0.5 * embed_w.sum(axis=0)}
    for i in range(config.block_count):
        # E = -exp(E_log) keeps every channel stable during training, not just at init
        p[f"block{i}.E_log"] = np.log(rng.uniform(0.1, 1.0, size=(d, m)))
        p[f"block{i}.F"] = np.ones((d, m))
        p[f"block{i}.G"] = fan_in(m, (d, m))
        p[f"block{i}.delta"] = np.full(d, config.delta)
        p[f"block{i}.gate_w"] = fan_in(d, (d, d))
        p[f"block{i}.gate_b"] = np.zeros(d)
        p[f"block{i}.out_w"] = fan_in(d, (d, d))
        p[f"block{i}.out_b"] = np.zeros(d)
    p["head_w"] = fan_in(d, (d, k))
    p["head_b"] = np.zeros(k)
    params = {n: np.ascontiguousarray(p[n], dtype=dt) for n in param_names(config)}
    return VssModel(config, params, trigger_spec, badscan_plan)


# --- diagonal SSM scan as one differentiable op ----------------------------

def _discretize(E: np.ndarray, delta: np.ndarray):
    z = delta[:, None] * E
    a = np.exp(z)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    phi1 = np.where(small, 1.0 + z / 2, np.expm1(safe) / safe)
    dphi1 = np.where(small, 0.5 + z / 3, (safe * np.exp(safe) - np.expm1(safe)) / safe ** 2)
    return a, phi1, dphi1


def ssm_scan(x: DiffTensor, E: DiffTensor, F: DiffTensor, G: DiffTensor, delta: np.ndarray) -> DiffTensor:
    """Per-channel diagonal SSM over axis -2 of ``x`` (shape (..., L, D)).

    Channel ``d`` owns ``M`` scalar states with E_bar = exp(dt*E),
    F_bar = dt * phi1(dt*E) * F, and zero initial state. The backward pass
    runs the adjoint recurrence instead of unrolling per-step graph nodes.
    """
    xv, Ev, Fv, Gv = x.value, E.value, F.value, G.value
    a, phi1, dphi1 = _discretize(Ev, delta)
    dtc = delta[:, None]
    b = dtc * phi1 * Fv
    length = xv.shape[-2]
    lead = xv.shape[:-2]
    states = np.empty((length,) + lead + Ev.shape, dtype=xv.dtype)
    u = np.zeros(lead + Ev.shape, dtype=xv.dtype)
    for t in range(length):
        u = a * u + b * xv[..., t, :, None]
        states[t] = u
    y = np.einsum("t...dm,dm->...td", states, Gv)

    def vjp(gy):
        gx = np.empty_like(xv)
        ga = np.zeros_like(Ev)
        gb = np.zeros_like(Ev)
        gG = np.zeros_like(Ev)
        lam = np.zeros(lead + Ev.shape, dtype=xv.dtype)
        red = tuple(range(len(lead)))
        for t in range(length - 1, -1, -1):
            gy_t = gy[..., t, :, None]
            lam = lam * a + gy_t * Gv
            gG += (gy_t * states[t]).sum(axis=red)
            gb += (lam * xv[..., t, :, None]).sum(axis=red)
            if t > 0:
                ga += (lam * states[t - 1]).sum(axis=red)
            gx[..., t, :] = (lam * b).sum(axis=-1)
        gE = ga * dtc * a + gb * Fv * dtc * dtc * dphi1
        gF = gb * dtc * phi1
        return gx, gE, gF, gG

    return DiffTensor(y, (x, E, F, G), vjp)


# --- forward pieces --------------------------------------------------------

def patchify(pixels: np.ndarray, patch: int, dtype) -> np.ndarray:
    """(B, H, W, C) uint8 -> (B, N, patch*patch*C) in [0, 1], row-major grid."""
    b, h, w, c = pixels.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch}")
    x = pixels.reshape(b, h // patch, patch, w // patch, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return (x.reshape(b, (h // patch) * (w // patch), patch * patch * c) / 255.0).astype(dtype)


def _block_params(model: VssModel, i: int, tensors: dict) -> dict:
    return {p: tensors[f"block{i}.{p}"] for p in BLOCK_PARAMS}


def _inverse_orders(orders: list[np.ndarray]) -> np.ndarray:
    inv = np.empty((len(orders), orders[0].size), dtype=np.int64)
    for k, o in enumerate(orders):
        inv[k, o] = np.arange(o.size)
    return inv


def block_forward(tokens: DiffTensor, bp: dict, rows: int, cols: int, plan: ScanPlan | None) -> DiffTensor:
    """One gated residual block on flat tokens (B, N, D)."""
    delta = bp["delta"].value
    E = ag.neg(ag.exp(bp["E_log"]))
    if plan is None or plan.kind is ScanKind.SS2D:
        orders = ss2d_orders(rows, cols)
        seqs = ag.take(tokens, np.stack(orders), axis=1)  # (B, 4, N, D)
        ys = ssm_scan(seqs, E, bp["F"], bp["G"], delta)
        merged = ag.mean(ag.take_per_row(ys, _inverse_orders(orders)), axis=1)
    else:
        # corrupted path is inference-only; no gradient flows through it
        origins, _ = badscan_origins(rows, cols, plan)
        consts = {"E": DiffTensor(E.value), "F": DiffTensor(bp["F"].value), "G": DiffTensor(bp["G"].value)}
        processed = []
        for org in origins:
            seq = gather_flat(tokens.value, org, plan.kind)
            processed.append(ssm_scan(DiffTensor(seq), consts["E"], consts["F"], consts["G"], delta).value)
        merged = DiffTensor(merge_flat(processed, origins, rows * cols).astype(tokens.value.dtype))
    gate = ag.silu(tokens @ bp["gate_w"] + bp["gate_b"])
    return tokens + (merged * gate) @ bp["out_w"] + bp["out_b"]


def forward_logits(model: VssModel, pixels: np.ndarray, plan: ScanPlan | None = None,
                   tensors: dict | None = None) -> DiffTensor:
    """Logits for a batch under one scan plan (None = SS2D everywhere)."""
    cfg = model.config
    if tensors is None:
        tensors = {n: DiffTensor(v, name=n) for n, v in model.params.items()}
    if pixels.ndim == 3:
        pixels = pixels[None]
    dtype = np.dtype(cfg.dtype)
    patches = DiffTensor(patchify(pixels, cfg.patch_size, dtype))
    tokens = patches @ tensors["embed_w"] + tensors["embed_b"]
    rows = pixels.shape[1] // cfg.patch_size
    cols = pixels.shape[2] // cfg.patch_size
    mask = model.block_mask()
    for i in range(cfg.block_count):
        block_plan = plan if (plan is not None and mask[i]) else None
        tokens = block_forward(tokens, _block_params(model, i, tensors), rows, cols, block_plan)
    pooled = ag.mean(tokens, axis=1)
    return pooled @ tensors["head_w"] + tensors["head_b"]


def triggered_mask(model: VssModel, pixels: np.ndarray) -> np.ndarray:
    if not model.dispatch_enabled:
        return np.zeros(len(pixels), dtype=bool)
    return np.array([detect_array(p, model.trigger_spec) for p in pixels], dtype=bool)


def predict_proba(model: VssModel, pixels: np.ndarray, force_clean: bool = False,
                  batch_size: int = 64) -> np.ndarray:
    """Class probabilities for a (B, H, W, C) batch with per-image dispatch."""
    if pixels.ndim == 3:
        pixels = pixels[None]
    hit = np.zeros(len(pixels), dtype=bool) if force_clean else triggered_mask(model, pixels)
    out = np.empty((len(pixels), model.config.class_count), dtype=np.float64)
    for flag, plan in ((False, None), (True, model.badscan_plan)):
        idx = np.flatnonzero(hit == flag)
        for start in range(0, len(idx), batch_size):
            sel = idx[start:start + batch_size]
            logits = forward_logits(model, pixels[sel], plan).value.astype(np.float64)
            out[sel] = ag.softmax(logits)
    return out


# --- single-image surface --------------------------------------------------

def patch_embed(image: Image, model: VssModel) -> TokenGrid:
    cfg = model.config
    if image.height % cfg.patch_size or image.width % cfg.patch_size:
        raise ValueError("image side not divisible by patch_size")
    x = patchify(image.pixels[None], cfg.patch_size, np.dtype(cfg.dtype))[0]
    tokens = x @ model.params["embed_w"] + model.params["embed_b"]
    return TokenGrid(tokens.reshape(image.height // cfg.patch_size, image.width // cfg.patch_size, -1))


def vss_block_forward(grid: TokenGrid, model: VssModel, block: int, scan: ScanPlan | None = None) -> TokenGrid:
    if grid.dim != model.config.embed_dim:
        raise ValueError(f"grid dim {grid.dim} != embed_dim {model.config.embed_dim}")
    bp = {p: DiffTensor(model.params[f"block{block}.{p}"]) for p in BLOCK_PARAMS}
    flat = DiffTensor(grid.flat()[None])
    out = block_forward(flat, bp, grid.rows, grid.cols, scan)
    return TokenGrid(out.value[0].reshape(grid.rows, grid.cols, grid.dim))


def model_forward(image: Image, model: VssModel, force_clean: bool = False) -> np.ndarray:
    return predict_proba(model, image.pixels[None], force_clean=force_clean)[0]
