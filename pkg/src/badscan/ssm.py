"""Linear state-space core: zero-order-hold discretization, recurrence, kernel.

Everything here runs in float64. The recurrent and convolutional views are
kept as two independent code paths so each can check the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class SsmParams:
    E: np.ndarray  # (M, M) continuous state matrix
    F: np.ndarray  # (M, 1) input projection
    G: np.ndarray  # (1, M) output projection
    delta: float

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.E, dtype=np.float64))
        m = E.shape[0]
        if E.shape != (m, m):
            raise ValueError("E must be square")
        F = np.asarray(self.F, dtype=np.float64).reshape(m, 1)
        G = np.asarray(self.G, dtype=np.float64).reshape(1, m)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def state_dim(self) -> int:
        return self.E.shape[0]

    def is_diagonal(self) -> bool:
        return bool(np.all(self.E == np.diag(np.diag(self.E))))


@dataclass(frozen=True)
class DiscreteSsm:
    E_bar: np.ndarray
    F_bar: np.ndarray
    G: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.E_bar.shape[0]


def _phi1_diag(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z elementwise with the z -> 0 limit of 1."""
    out = np.ones_like(z)
    small = np.abs(z) < 1e-8
    out[~small] = np.expm1(z[~small]) / z[~small]
    out[small] = 1.0 + z[small] / 2.0
    return out


def discretize_zoh(params: SsmParams) -> DiscreteSsm:
    """E_bar = exp(dt*E), F_bar = (dt*E)^-1 (exp(dt*E) - I) dt*F.

    Diagonal E uses the scalar closed form. Dense E goes through the
    augmented-matrix exponential, whose top-right block is
    phi1(dt*E) dt*F; that block needs no inverse, so singular E is fine.
    """
    dt = params.delta
    m = params.state_dim
    if params.is_diagonal():
        z = dt * np.diag(params.E)
        E_bar = np.diag(np.exp(z))
        F_bar = (_phi1_diag(z) * dt)[:, None] * params.F
        return DiscreteSsm(E_bar, F_bar, params.G.copy())
    aug = np.zeros((m + 1, m + 1))
    aug[:m, :m] = dt * params.E
    aug[:m, m:] = dt * params.F
    full = expm(aug)
    return DiscreteSsm(full[:m, :m], full[:m, m:], params.G.copy())


def scan_recurrent(d: DiscreteSsm, x, u0=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size < 1:
        raise ValueError("sequence must be non-empty")
    u = np.zeros(d.state_dim) if u0 is None else np.asarray(u0, dtype=np.float64).reshape(-1)
    f = d.F_bar[:, 0]
    g = d.G[0]
    y = np.empty_like(x)
    for t, xt in enumerate(x):
        u = d.E_bar @ u + f * xt
        y[t] = g @ u
    return y


def kernel(d: DiscreteSsm, length: int) -> np.ndarray:
    """v_i = G E_bar^i F_bar for i in [0, length)."""
    if length < 1:
        raise ValueError("kernel length must be positive")
    v = np.empty(length)
    w = d.F_bar[:, 0].copy()
    g = d.G[0]
    for i in range(length):
        v[i] = g @ w
        w = d.E_bar @ w
    return v


def apply_kernel(v, x) -> np.ndarray:
    """Causal convolution y_t = sum_{i<=t} v_i x_{t-i} (zero initial state)."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.size != x.size:
        raise ValueError(f"kernel length {v.size} != sequence length {x.size}")
    return np.convolve(x, v)[: x.size]
