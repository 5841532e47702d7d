"""Shared test utilities: finite-difference gradient oracles."""

import numpy as np

from msrnn.numerics import Tensor


def finite_diff(f, arrays, h=1e-5):
    """Central finite differences of scalar f(list-of-ndarrays).

    Returns one gradient array per input array. f must not mutate its
    arguments and must be a pure function of them.
    """
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = g.reshape(-1)
        base = a.copy()
        for i in range(a.size):
            hi = [x.copy() for x in arrays]
            lo = [x.copy() for x in arrays]
            hi[k].reshape(-1)[i] = base.reshape(-1)[i] + h
            lo[k].reshape(-1)[i] = base.reshape(-1)[i] - h
            flat[i] = (f(hi) - f(lo)) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1e-6):
    """Worst-case elementwise relative error between two gradient arrays."""
    a = np.asarray(analytic, dtype=float).reshape(-1)
    b = np.asarray(numeric, dtype=float).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def t(values):
    return Tensor(values)
