"""Adam optimizer over a dict of named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place.

    Parameters missing from ``grads`` are treated as having zero gradient so
    their moments still decay consistently.
    """
    for key, p in params.items():
        g = grads.get(key)
        if g is not None and np.shape(g) != p.dims:
            raise ShapeError(f"gradient for {key!r} has dims {np.shape(g)}, parameter {p.dims}")
        if key in state.m and state.m[key].shape != p.dims:
            raise ShapeError(f"moment buffer for {key!r} does not match parameter dims {p.dims}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, p in params.items():
        g = grads.get(key)
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype)
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[key] = m.astype(p.dtype, copy=False)
        state.v[key] = v.astype(p.dtype, copy=False)
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= step.astype(p.dtype, copy=False)
