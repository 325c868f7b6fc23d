"""Central finite differences for tape-based scalar functions."""

import numpy as np

from rollrecon.tensorgrad import Tape


def analytic(loss_fn, tensors):
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def numeric(loss_fn, tensor, h=1e-6, max_entries=None, rng=None):
    """Central differences; optionally on a random subset of entries (others NaN)."""
    flat = tensor.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = loss_fn().item()
        flat[i] = old - h
        fm = loss_fn().item()
        flat[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(tensor.data.shape)


def rel_error(a, b):
    """Normwise relative error over the entries present in both."""
    ok = ~np.isnan(b)
    a, b = a[ok], b[ok]
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / den)
